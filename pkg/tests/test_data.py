import hashlib
import wave

import numpy as np
import pytest

from lightdoa.angles import AngleGrid
from lightdoa.data import (
    GenConfig,
    SourceSignalKind,
    _allocate,
    class_histogram,
    generate_dataset,
    load_arrays,
    load_split,
    read_wav,
    source_signal,
    worker_count,
    write_wav,
)
from lightdoa.dsp import AudioBuffer
from lightdoa.errors import FormatError, InvalidArgument


def tree_digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


class TestWav:
    def test_round_trip(self, tmp_path, rng):
        x = rng.uniform(-1, 1, (2, 16000))
        write_wav(tmp_path / "a.wav", AudioBuffer(x))
        back = read_wav(tmp_path / "a.wav")
        assert back.samples.shape == (2, 16000) and back.sample_rate == 16000
        assert np.max(np.abs(back.samples - x)) <= 1 / 32768

    def test_truncated(self, tmp_path, rng):
        write_wav(tmp_path / "a.wav", AudioBuffer(rng.uniform(-1, 1, (2, 1000))))
        data = (tmp_path / "a.wav").read_bytes()
        (tmp_path / "b.wav").write_bytes(data[:-501])
        with pytest.raises(FormatError):
            read_wav(tmp_path / "b.wav")

    def test_garbage(self, tmp_path):
        (tmp_path / "g.wav").write_bytes(b"RIFF1234garbage")
        with pytest.raises(FormatError):
            read_wav(tmp_path / "g.wav")

    def test_mono_rejected(self, tmp_path):
        with wave.open(str(tmp_path / "m.wav"), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(16000)
            w.writeframes(bytes(200))
        with pytest.raises(FormatError):
            read_wav(tmp_path / "m.wav")

    def test_write_rejects_mono(self, tmp_path):
        with pytest.raises(FormatError):
            write_wav(tmp_path / "m.wav", AudioBuffer(np.zeros(10)))


class TestSignals:
    @pytest.mark.parametrize("kind", list(SourceSignalKind))
    def test_unit_peak(self, kind):
        x = source_signal(kind, np.random.default_rng(0), 0.5)
        assert x.shape == (8000,) and np.max(np.abs(x)) == pytest.approx(1.0)

    def test_broadband_white(self):
        x = source_signal(SourceSignalKind.WHITE_NOISE, np.random.default_rng(0), 1.0)
        spec = np.abs(np.fft.rfft(x)) ** 2
        bands = [spec[i : i + 500].mean() for i in range(100, 7600, 500)]
        assert max(bands) / min(bands) < 2


class TestGeneration:
    def test_bookkeeping(self, tmp_path):
        cfg = GenConfig(counts={"train": 100, "val": 20, "test": 30}, duration=0.1, max_order=2)
        manifests = generate_dataset(cfg, 3, tmp_path / "ds", workers=1)
        assert sorted(manifests) == ["test", "train", "val"]
        assert len(list((tmp_path / "ds" / "wav").glob("*.wav"))) == 150
        ids = [e.id for s in manifests.values() for e in load_split(s).entries]
        assert len(ids) == len(set(ids)) == 150
        train = load_split(manifests["train"])
        assert len(train) == 100
        e = train.entries[0]
        assert read_wav(train.wav_path(e)).samples.shape == (2, 1600)
        assert 0 <= e.azimuth_folded <= 180
        # direction classes are stratified within each split
        dirs = [x.scene["classes"]["direction_class"] for x in train.entries]
        assert sorted(dirs.count(d) for d in set(dirs)) == [20] * 5

    def test_same_seed_identical_regardless_of_workers(self, tmp_path):
        cfg = GenConfig(counts={"train": 6, "val": 2, "test": 2}, duration=0.1, max_order=3)
        generate_dataset(cfg, 11, tmp_path / "a", workers=1)
        generate_dataset(cfg, 11, tmp_path / "b", workers=2)
        generate_dataset(cfg, 12, tmp_path / "c", workers=1)
        assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
        assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")

    def test_refuses_nonempty_out(self, tmp_path):
        (tmp_path / "ds").mkdir()
        (tmp_path / "ds" / "x").write_text("keep")
        with pytest.raises(InvalidArgument):
            generate_dataset(GenConfig(), 0, tmp_path / "ds")
        assert (tmp_path / "ds" / "x").read_text() == "keep"

    def test_failure_leaves_nothing(self, tmp_path, monkeypatch):
        import lightdoa.data as data

        def boom(*_):
            raise RuntimeError("render failed")

        monkeypatch.setattr(data, "render_stereo", boom)
        with pytest.raises(RuntimeError):
            generate_dataset(GenConfig(counts={"train": 2, "val": 0, "test": 0}, duration=0.1), 0, tmp_path / "ds", workers=1)
        assert list(tmp_path.iterdir()) == []

    def test_mixture(self):
        cfg = GenConfig().with_mixture({"room": {"Outdoors": 1}})
        assert cfg.room == {"Outdoors": 1.0}
        with pytest.raises(InvalidArgument):
            GenConfig().with_mixture({"colour": {"Red": 1}})
        with pytest.raises(ValueError):
            GenConfig().with_mixture({"room": {"Cave": 1}})

    def test_load_arrays(self, tmp_path):
        cfg = GenConfig(counts={"train": 3, "val": 0, "test": 0}, duration=0.1, max_order=1)
        m = generate_dataset(cfg, 0, tmp_path / "ds", workers=1)
        x, y, angles = load_arrays(load_split(m["train"]), AngleGrid(9))
        assert x.shape == (3, 1, 257, 5) and x.dtype == np.float32
        assert y.shape == (3,) and np.all((0 <= y) & (y < 9))

    def test_worker_env(self, monkeypatch):
        monkeypatch.setenv("LIGHTDOA_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("LIGHTDOA_THREADS", "x")
        with pytest.raises(InvalidArgument):
            worker_count()

    def test_allocate(self):
        assert _allocate(10, [1, 1, 1]) == [4, 3, 3]
        assert sum(_allocate(2600, [0.87, 0.04, 0.09])) == 2600


class TestHistogram:
    def test_uniform(self):
        grid = AngleGrid(37)
        h = class_histogram(np.repeat(grid.centers(), 10), grid)
        assert h.imbalance_ratio == pytest.approx(1.0) and np.all(h.counts == 10)

    def test_empty(self):
        h = class_histogram([], AngleGrid(9))
        assert not np.any(h.counts) and h.imbalance_ratio is None

    def test_ratio(self):
        h = class_histogram([0, 0, 0, 90], AngleGrid(9))
        assert h.imbalance_ratio == 3.0
