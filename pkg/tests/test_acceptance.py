"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""

from __future__ import annotations

import hashlib
import math

import numpy as np
import pytest

from gradcheck import CHECKS, worst_error
from lightdoa.angles import (
    SUPPORTED_CLASS_COUNTS,
    AngleGrid,
    angle_to_class,
    class_to_angle,
    fold_angle,
    fold_front_back,
    normalize_angle,
)
from lightdoa.classic import estimate_azimuth
from lightdoa.cli import evaluate
from lightdoa.data import GenConfig, class_histogram, generate_dataset, load_arrays, load_split, sample_direction_labels
from lightdoa.dsp import StftConfig, ipd_features
from lightdoa.model import build_lightdoa, param_count, save_model
from lightdoa.nn import functional as F
from lightdoa.nn.train import TrainConfig, train
from lightdoa.room import (
    SPEED_OF_SOUND,
    DirectionClass,
    DistanceClass,
    RoomClass,
    SceneClassConfig,
    make_scene,
    render_stereo,
    reverberant_decay_time,
    sample_scene,
    scene_rirs,
)


@pytest.fixture
def report(capsys):
    def emit(number: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[acceptance {number:2d}] {'PASS' if ok else 'FAIL'} - {detail}")

    return emit


def digest(paths) -> str:
    h = hashlib.sha256()
    for p in sorted(paths):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def test_01_parameter_counts(report):
    reference = {37: 39_000, 19: 36_700, 13: 35_900, 9: 35_500}
    counts = {K: param_count(build_lightdoa(K)) for K in reference}
    ok = all(abs(counts[K] - reference[K]) <= 150 for K in reference)
    report(1, ok, "counts " + ", ".join(f"K={K}: {counts[K]} (target {reference[K]})" for K in reference))
    assert ok


@pytest.mark.slow
def test_02_desk_scale_training(report, tmp_path):
    # every room class, white-noise sources (flat excitation across all IPD bins)
    cfg = GenConfig(counts={"train": 2000, "val": 200, "test": 400}, duration=4.0).with_mixture(
        {"source": {"WhiteNoise": 1}}
    )
    manifests = generate_dataset(cfg, 2024, tmp_path / "ds")
    grid = AngleGrid(9)
    x_tr, y_tr, _ = load_arrays(load_split(manifests["train"]), grid)
    x_va, y_va, _ = load_arrays(load_split(manifests["val"]), grid)
    model = build_lightdoa(9, seed=0)
    model, history = train(
        model, (x_tr, y_tr), (x_va, y_va), TrainConfig(learning_rate=5e-3, batch_size=256, max_epochs=30, patience=10)
    )
    del x_tr
    x_te, y_te, a_te = load_arrays(load_split(manifests["test"]), grid)
    result = evaluate(model, x_te, y_te, a_te)
    ok = result.top1_accuracy >= 0.80 and result.mean_abs_angular_error <= 10.0
    report(
        2,
        ok,
        f"K=9 test top-1 {result.top1_accuracy:.3f} (>= 0.80), MAE {result.mean_abs_angular_error:.2f} deg (<= 10), "
        f"{history.epochs_run} epochs, best epoch {history.best_epoch}",
    )
    assert ok


def test_03_gradients(report):
    errors = {layer: worst_error(layer, seed=0, n=20) for layer in CHECKS}
    ok = all(e < 1e-4 for e in errors.values())
    report(3, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in errors.items()))
    assert ok


def test_04_gcc_phat_oracle(report):
    rng = np.random.default_rng(404)
    directions, distances = list(DirectionClass), list(DistanceClass)
    errors = []
    while len(errors) < 200:
        cfg = SceneClassConfig(RoomClass.OUTDOORS, directions[rng.integers(5)], distances[rng.integers(3)])
        scene = sample_scene(rng, cfg)
        truth = fold_angle(scene.azimuth)
        if not 30 <= truth <= 150:
            continue
        audio = render_stereo(rng.standard_normal(8000), scene)
        azimuth, _ = estimate_azimuth(audio.samples[0], audio.samples[1], audio.sample_rate, scene.mic_spacing)
        errors.append(abs(azimuth - truth))
    median, p95 = float(np.median(errors)), float(np.percentile(errors, 95))
    ok = median <= 2.0 and p95 <= 5.0
    report(4, ok, f"200 Outdoors scenes: median {median:.2f} deg (<= 2), p95 {p95:.2f} deg (<= 5)")
    assert ok


def test_05_rir_decay(report):
    rng = np.random.default_rng(505)
    ratios = []
    for i in range(20):
        room = RoomClass.SMALL if i % 2 == 0 else RoomClass.MODERATE
        cfg = SceneClassConfig(room, list(DirectionClass)[rng.integers(5)], list(DistanceClass)[rng.integers(3)])
        scene = sample_scene(rng, cfg)
        rir = scene_rirs(scene)[0]
        direct = float(np.linalg.norm(np.asarray(scene.source_pos) - scene.mic_positions[0]))
        ratios.append(reverberant_decay_time(rir, direct) / scene.rt60)
    ratios = np.array(ratios)
    ok = bool(np.all(np.abs(ratios - 1) <= 0.2))
    report(5, ok, f"20 rooms: measured/target T60 in [{ratios.min():.3f}, {ratios.max():.3f}] (allowed [0.8, 1.2])")
    assert ok


def test_06_ipd_slope(report):
    s, fs = 0.17, 16000
    scene = make_scene((100, 100, 100), (50, 50, 50), s, 45.0, 40.0)
    audio = render_stereo(np.random.default_rng(6).standard_normal(2 * fs), scene)
    cfg = StftConfig()
    ipd = ipd_features(audio, cfg, np.float64)[0]
    freqs = np.arange(cfg.freq_bins) * fs / cfg.fft_size
    below = (freqs > 0) & (freqs < SPEED_OF_SOUND / (2 * s))
    slopes = np.median(ipd[below], axis=1) / freqs[below]
    slope = float(np.median(slopes))
    expected = 2 * math.pi * s * math.cos(math.radians(45)) / SPEED_OF_SOUND
    rel = abs(slope - expected) / expected
    ok = rel <= 0.05
    report(6, ok, f"IPD slope {slope:.4e} rad/Hz vs 2*pi*tau {expected:.4e} ({rel:.2%} off, <= 5%)")
    assert ok


def test_07_angle_mapping(report):
    failures = []
    for deg in range(360):
        f = fold_front_back(normalize_angle(deg))
        if fold_front_back(normalize_angle(f)) != f:
            failures.append(f"idempotence {deg}")
        if f != fold_angle(360 - deg):
            failures.append(f"mirror {deg}")
        if not 0 <= f <= 180:
            failures.append(f"range {deg}")
        for K in SUPPORTED_CLASS_COUNTS:
            grid = AngleGrid(K)
            k = angle_to_class(f, grid)
            if abs(class_to_angle(k, grid) - f) > grid.spacing / 2 + 1e-9:
                failures.append(f"nearest center {deg} K={K}")
    for K in SUPPORTED_CLASS_COUNTS:
        grid = AngleGrid(K)
        failures += [f"round trip {k} K={K}" for k in range(K) if angle_to_class(class_to_angle(k, grid), grid) != k]
    failures += [f"pair {a}" for a, b in ((300, 60), (210, 150)) if fold_front_back(a) != b]
    ok = not failures
    report(7, ok, f"360 integer degrees x 4 grids, {len(failures)} violations {failures[:3]}")
    assert ok


def test_08_loss_closed_forms(report):
    rng = np.random.default_rng(8)
    worst_loss, worst_grad = 0.0, 0.0
    for K in SUPPORTED_CLASS_COUNTS:
        y = rng.integers(0, K, size=5)
        loss, _ = F.cross_entropy(np.zeros((5, K)), y)
        worst_loss = max(worst_loss, abs(loss - math.log(K)))
        logits = rng.standard_normal((5, K)) * 4
        _, grad = F.cross_entropy(logits, y)
        worst_grad = max(worst_grad, float(np.max(np.abs(grad * 5 - (F.softmax(logits) - np.eye(K)[y])))))
    ok = worst_loss <= 1e-9 and worst_grad <= 1e-6
    report(8, ok, f"|CE - ln K| max {worst_loss:.1e} (<= 1e-9), |grad - (softmax - onehot)| max {worst_grad:.1e} (<= 1e-6)")
    assert ok


def test_09_determinism(report, tmp_path, monkeypatch):
    cfg = GenConfig(counts={"train": 24, "val": 8, "test": 4}, duration=0.5)
    digests = {}
    for threads in ("1", "2"):
        monkeypatch.setenv("LIGHTDOA_THREADS", threads)
        root = tmp_path / f"t{threads}"
        generate_dataset(cfg, 99, root / "ds")
        grid = AngleGrid(13)
        x_tr, y_tr, _ = load_arrays(load_split(root / "ds" / "train.jsonl"), grid)
        x_va, y_va, _ = load_arrays(load_split(root / "ds" / "val.jsonl"), grid)
        model, _ = train(build_lightdoa(13, seed=1), (x_tr, y_tr), (x_va, y_va), TrainConfig(batch_size=8, max_epochs=3))
        save_model(root / "m.ckpt", model)
        digests[threads] = (
            digest((root / "ds").glob("*.jsonl")),
            digest((root / "ds" / "wav").glob("*.wav")),
            digest([root / "m.ckpt"]),
        )
    ok = digests["1"] == digests["2"]
    report(9, ok, f"manifests/WAVs/checkpoint hashes equal across LIGHTDOA_THREADS=1,2: {ok} ({digests['1'][2][:12]})")
    assert ok


def test_10_class_imbalance(report):
    grid = AngleGrid(37)
    labels = sample_direction_labels(np.random.default_rng(10), 1_000_000)
    counts = class_histogram(labels, grid).counts
    peak = counts.max()
    sparse = {a: counts[angle_to_class(a, grid)] / peak for a in (22, 67, 112, 157)}
    ok = all(r < 0.2 for r in sparse.values())
    report(
        10,
        ok,
        "bin/peak at " + ", ".join(f"{a} deg: {r:.2f}" for a, r in sparse.items()) + " (each < 0.20)",
    )
    assert ok
