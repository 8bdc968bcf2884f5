"""Synthetic dataset generation, WAV/manifest persistence and label statistics.

A dataset directory looks like::

    out/
      train.jsonl  val.jsonl  test.jsonl     one ManifestEntry per line
      wav/<id>.wav                           16-bit PCM stereo
"""

from __future__ import annotations

import enum
import json
import os
import shutil
import wave
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import chirp

from .angles import AngleGrid, angle_to_class, fold_angle
from .dsp import SAMPLE_RATE, AudioBuffer, StftConfig, ipd_features
from .errors import FormatError, InvalidArgument
from .room import (
    DIRECTION_CENTER_DEG,
    DIRECTION_STD_DEG,
    DirectionClass,
    DistanceClass,
    RoomClass,
    SceneClassConfig,
    render_stereo,
    sample_scene,
)

SPLITS = ("train", "val", "test")
DEFAULT_SPLIT_RATIOS = (0.87, 0.04, 0.09)
PCM_SCALE = 32767.0
THREADS_ENV = "LIGHTDOA_THREADS"


class SourceSignalKind(str, enum.Enum):
    WHITE_NOISE = "WhiteNoise"
    PINK_NOISE = "PinkNoise"
    CHIRP = "Chirp"
    AM_NOISE = "AmplitudeModulatedNoise"
    MULTI_TONE = "MultiTone"


def source_signal(kind: SourceSignalKind, rng: np.random.Generator, duration: float, fs: int = SAMPLE_RATE):
    """Mono test signal with unit peak."""
    kind = SourceSignalKind(kind)
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    if kind is SourceSignalKind.WHITE_NOISE:
        x = rng.standard_normal(n)
    elif kind is SourceSignalKind.PINK_NOISE:
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.fft.rfftfreq(n, 1.0 / fs)
        spec[1:] /= np.sqrt(f[1:])
        spec[0] = 0.0
        x = np.fft.irfft(spec, n)
    elif kind is SourceSignalKind.CHIRP:
        f0, f1 = rng.uniform(50.0, 200.0), rng.uniform(0.8, 0.95) * fs / 2
        x = chirp(t, f0, duration, f1, method="logarithmic", phi=rng.uniform(0, 360))
    elif kind is SourceSignalKind.AM_NOISE:
        rate = rng.uniform(2.0, 8.0)
        x = rng.standard_normal(n) * (1.0 + 0.8 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
    else:
        freqs = rng.uniform(100.0, 0.45 * fs, size=20)
        phases = rng.uniform(0, 2 * np.pi, size=20)
        x = np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None]).sum(axis=0)
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x


def write_wav(path, buffer: AudioBuffer) -> None:
    if buffer.channels != 2:
        raise FormatError(f"{path}: only stereo WAV output is supported")
    pcm = np.round(np.clip(buffer.samples, -1.0, 1.0) * PCM_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(2)
        w.setsampwidth(2)
        w.setframerate(int(buffer.sample_rate))
        w.writeframes(pcm.T.tobytes())


def read_wav(path) -> AudioBuffer:
    """Read a 16-bit PCM stereo WAV; anything else is a FormatError."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate, frames = w.getnchannels(), w.getsampwidth(), w.getframerate(), w.getnframes()
            if w.getcomptype() != "NONE" or width != 2:
                raise FormatError(f"{path}: expected 16-bit PCM")
            if channels != 2:
                raise FormatError(f"{path}: expected 2 channels, found {channels}")
            data = w.readframes(frames)
    except (wave.Error, EOFError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if len(data) != frames * 4:
        raise FormatError(f"{path}: truncated data chunk ({len(data)} of {frames * 4} bytes)")
    pcm = np.frombuffer(data, dtype="<i2").reshape(-1, 2).T
    return AudioBuffer(samples=pcm / PCM_SCALE, sample_rate=rate)


@dataclass
class ManifestEntry:
    id: str
    wav_path: str
    azimuth_raw: float
    azimuth_folded: float
    scene: dict
    source_kind: str
    duration: float
    sample_rate: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, line: str) -> "ManifestEntry":
        return cls(**json.loads(line))


@dataclass
class DatasetSplit:
    name: str
    entries: list[ManifestEntry]
    root: Path = Path(".")

    def __len__(self) -> int:
        return len(self.entries)

    def wav_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.wav_path

    def folded_angles(self) -> np.ndarray:
        return np.array([e.azimuth_folded for e in self.entries], dtype=float)


def load_split(manifest_path) -> DatasetSplit:
    path = Path(manifest_path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    try:
        entries = [ManifestEntry.from_json(line) for line in lines if line.strip()]
    except (json.JSONDecodeError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest record") from exc
    return DatasetSplit(name=path.stem, entries=entries, root=path.parent)


def _uniform(enum_cls) -> dict:
    return {m.value: 1.0 for m in enum_cls}


@dataclass
class GenConfig:
    counts: dict = field(default_factory=lambda: {"train": 100, "val": 20, "test": 30})
    duration: float = 4.0
    sample_rate: int = SAMPLE_RATE
    room: dict = field(default_factory=lambda: _uniform(RoomClass))
    direction: dict = field(default_factory=lambda: _uniform(DirectionClass))
    distance: dict = field(default_factory=lambda: _uniform(DistanceClass))
    source: dict = field(default_factory=lambda: _uniform(SourceSignalKind))
    max_order: int | None = None

    @classmethod
    def from_total(cls, total: int, ratios=DEFAULT_SPLIT_RATIOS, **kwargs) -> "GenConfig":
        return cls(counts=dict(zip(SPLITS, _allocate(total, ratios))), **kwargs)

    def with_mixture(self, mixture: dict) -> "GenConfig":
        """Override class weights from ``{"room": {...}, "direction": {...}, ...}``."""
        enums = {"room": RoomClass, "direction": DirectionClass, "distance": DistanceClass, "source": SourceSignalKind}
        updates = {}
        for key, weights in mixture.items():
            if key not in enums:
                raise InvalidArgument(f"unknown mixture key {key!r}; expected one of {sorted(enums)}")
            for name, w in weights.items():
                enums[key](name)
                if w < 0:
                    raise InvalidArgument(f"negative weight for {key}.{name}")
            if sum(weights.values()) <= 0:
                raise InvalidArgument(f"mixture weights for {key!r} sum to zero")
            updates[key] = {enums[key](k).value: float(v) for k, v in weights.items()}
        return GenConfig(**{**asdict(self), **updates})


def _allocate(total: int, weights) -> list[int]:
    """Largest-remainder split of ``total`` in proportion to ``weights``."""
    w = np.asarray(list(weights), dtype=float)
    exact = total * w / w.sum()
    counts = np.floor(exact).astype(int)
    for i in np.argsort(-(exact - counts), kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def _pick(rng, weights: dict) -> str:
    names = list(weights)
    p = np.array([weights[k] for k in names], dtype=float)
    return names[rng.choice(len(names), p=p / p.sum())]


def _render_one(task) -> dict:
    """Render one scene to disk; runs in worker processes."""
    index, entry_id, direction, master_seed, cfg, out_dir = task
    rng = np.random.default_rng([master_seed, index])
    classes = SceneClassConfig(_pick(rng, cfg.room), direction, _pick(rng, cfg.distance))
    kind = _pick(rng, cfg.source)
    scene = sample_scene(rng, classes)
    signal = source_signal(kind, rng, cfg.duration, cfg.sample_rate)
    audio = render_stereo(signal, scene, cfg.max_order, cfg.sample_rate)
    rel = f"wav/{entry_id}.wav"
    write_wav(Path(out_dir) / rel, audio)
    entry = ManifestEntry(
        id=entry_id,
        wav_path=rel,
        azimuth_raw=scene.azimuth,
        azimuth_folded=fold_angle(scene.azimuth),
        scene=scene.to_dict(),
        source_kind=SourceSignalKind(kind).value,
        duration=len(audio) / audio.sample_rate,
        sample_rate=audio.sample_rate,
    )
    return asdict(entry)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidArgument(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 0:
        raise InvalidArgument(f"{THREADS_ENV} must be >= 0")
    return n or (os.cpu_count() or 1)


def _tasks(cfg: GenConfig, master_seed: int, out_dir: Path):
    index = 0
    for split_no, split in enumerate(SPLITS):
        n = int(cfg.counts.get(split, 0))
        # stratify directions within the split, then shuffle their order
        quota = _allocate(n, cfg.direction.values())
        directions = [d for d, q in zip(cfg.direction, quota) for _ in range(q)]
        order = np.random.default_rng([master_seed, 1 << 20, split_no]).permutation(n)
        for j in range(n):
            yield split, (index, f"{split}-{j:06d}", directions[order[j]], master_seed, cfg, str(out_dir))
            index += 1


def generate_dataset(cfg: GenConfig, master_seed: int, out_dir, workers: int | None = None) -> dict[str, Path]:
    """Render all splits into ``out_dir`` and return the manifest paths.

    Output is written to a sibling staging directory and moved into place at
    the end, so a failure never leaves a partial dataset behind. Results do
    not depend on ``workers``: every scene has its own seed
    ``(master_seed, scene_index)``.
    """
    out_dir = Path(out_dir)
    if out_dir.exists() and (not out_dir.is_dir() or any(out_dir.iterdir())):
        raise InvalidArgument(f"{out_dir}: output directory must not exist or be empty")
    if any(int(v) < 0 for v in cfg.counts.values()):
        raise InvalidArgument("split counts must be nonnegative")
    staging = out_dir.parent / f".{out_dir.name}.partial-{os.getpid()}"
    workers = worker_count() if workers is None else workers
    try:
        (staging / "wav").mkdir(parents=True)
        tasks = list(_tasks(cfg, master_seed, staging))
        payload = [t for _, t in tasks]
        if workers > 1 and len(payload) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(_render_one, payload, chunksize=8))
        else:
            records = [_render_one(t) for t in payload]
        manifests = {}
        for split in SPLITS:
            lines = [ManifestEntry(**r).to_json() for (s, _), r in zip(tasks, records) if s == split]
            path = staging / f"{split}.jsonl"
            path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
            manifests[split] = out_dir / path.name
        if out_dir.exists():
            out_dir.rmdir()
        staging.rename(out_dir)
        return manifests
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise


def load_arrays(split: DatasetSplit, grid: AngleGrid, stft_config: StftConfig = StftConfig(), dtype=np.float32):
    """IPD features (N, 1, F, T), class labels (N,) and folded angles (N,)."""
    feats = [ipd_features(read_wav(split.wav_path(e)), stft_config, dtype) for e in split.entries]
    if not feats:
        raise InvalidArgument(f"split {split.name!r} is empty")
    shapes = {f.shape for f in feats}
    if len(shapes) != 1:
        raise FormatError(f"split {split.name!r} mixes clip lengths: {sorted(shapes)}")
    angles = split.folded_angles()
    labels = np.array([angle_to_class(a, grid) for a in angles], dtype=np.int64)
    return np.stack(feats), labels, angles


@dataclass
class ClassHistogram:
    counts: np.ndarray
    imbalance_ratio: float | None  # max / min over nonzero bins; None when empty

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "imbalance_ratio": self.imbalance_ratio}


def class_histogram(split_or_angles, grid: AngleGrid) -> ClassHistogram:
    """Per-class counts of folded azimuth labels."""
    if isinstance(split_or_angles, DatasetSplit):
        angles = split_or_angles.folded_angles()
    else:
        angles = np.asarray(list(split_or_angles), dtype=float)
    counts = np.zeros(grid.num_classes, dtype=np.int64)
    for a in angles:
        counts[angle_to_class(float(a), grid)] += 1
    nonzero = counts[counts > 0]
    ratio = float(nonzero.max() / nonzero.min()) if nonzero.size else None
    return ClassHistogram(counts=counts, imbalance_ratio=ratio)


def sample_direction_labels(rng: np.random.Generator, n: int, weights: dict | None = None) -> np.ndarray:
    """Folded azimuths drawn from the per-direction-class Gaussians."""
    weights = weights or _uniform(DirectionClass)
    names = list(weights)
    p = np.array([weights[k] for k in names], dtype=float)
    picks = rng.choice(len(names), size=n, p=p / p.sum())
    centers = np.array([DIRECTION_CENTER_DEG[DirectionClass(names[i])] for i in picks])
    raw = rng.normal(centers, DIRECTION_STD_DEG)
    return np.array([fold_angle(float(a)) for a in raw])
