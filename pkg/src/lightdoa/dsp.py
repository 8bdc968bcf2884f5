"""Short-time Fourier analysis and inter-channel phase difference."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

SAMPLE_RATE = 16000
SILENCE_FLOOR = 1e-12


@dataclass(frozen=True)
class AudioBuffer:
    """Multichannel audio, samples shaped (channels, length)."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2 or s.shape[0] not in (1, 2):
            raise InvalidArgument(f"expected 1 or 2 channels, got shape {s.shape}")
        if self.sample_rate <= 0:
            raise InvalidArgument("sample_rate must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop_size: int = 256
    window: str = "hann"

    def __post_init__(self):
        n = self.fft_size
        if n <= 0 or n & (n - 1):
            raise InvalidArgument(f"fft_size must be a power of two, got {n}")
        if not 0 < self.hop_size <= n:
            raise InvalidArgument(f"hop_size must be in (0, fft_size], got {self.hop_size}")
        if self.window.lower() != "hann":
            raise InvalidArgument(f"unsupported window {self.window!r}")

    @property
    def freq_bins(self) -> int:
        return self.fft_size // 2 + 1

    def num_frames(self, length: int) -> int:
        if length < self.fft_size:
            return 0
        return (length - self.fft_size) // self.hop_size + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT bins indexed (frequency, frame)."""

    bins: np.ndarray
    sample_rate: int
    fft_size: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.bins.shape

    def frequencies(self) -> np.ndarray:
        return np.arange(self.bins.shape[0]) * self.sample_rate / self.fft_size


def make_window(kind: str, n: int) -> np.ndarray:
    """Periodic window of length ``n``; only Hann is supported."""
    if n < 1:
        raise InvalidArgument(f"window length must be >= 1, got {n}")
    if kind.lower() != "hann":
        raise InvalidArgument(f"unsupported window {kind!r}")
    i = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * i / n)


def stft(x: np.ndarray, config: StftConfig = StftConfig(), sample_rate: int = SAMPLE_RATE) -> ComplexSpectrogram:
    """Windowed STFT of one channel; the trailing partial frame is dropped.

    Frame ``t`` covers samples ``[t * hop, t * hop + fft_size)``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument("stft expects a single channel")
    if len(x) < config.fft_size:
        raise InvalidArgument(f"signal of length {len(x)} is shorter than fft_size {config.fft_size}")
    frames = np.lib.stride_tricks.sliding_window_view(x, config.fft_size)[:: config.hop_size]
    frames = frames * make_window(config.window, config.fft_size)
    bins = np.fft.rfft(frames, axis=1).T
    return ComplexSpectrogram(bins=bins, sample_rate=sample_rate, fft_size=config.fft_size)


def wrap_phase(phi: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    out = np.mod(phi + np.pi, 2.0 * np.pi) - np.pi
    return np.where(out <= -np.pi, np.pi, out)


def ipd(spec_left: ComplexSpectrogram | np.ndarray, spec_right: ComplexSpectrogram | np.ndarray) -> np.ndarray:
    """Phase of the left channel minus phase of the right, wrapped to (-pi, pi].

    Bins where both channels are below ``SILENCE_FLOOR`` in magnitude are 0.
    """
    a = getattr(spec_left, "bins", spec_left)
    b = getattr(spec_right, "bins", spec_right)
    if a.shape != b.shape:
        raise InvalidArgument(f"spectrogram shapes differ: {a.shape} vs {b.shape}")
    # angle of a * conj(b) avoids accumulating two wrapped phases
    diff = wrap_phase(np.angle(a * np.conj(b)))
    silent = (np.abs(a) < SILENCE_FLOOR) & (np.abs(b) < SILENCE_FLOOR)
    diff[silent] = 0.0
    return diff


def ipd_features(buffer: AudioBuffer, config: StftConfig = StftConfig(), dtype=np.float32) -> np.ndarray:
    """IPD map of a stereo buffer shaped (1, F, T), ready for the network."""
    if buffer.channels != 2:
        raise InvalidArgument(f"IPD needs a stereo buffer, got {buffer.channels} channel(s)")
    left = stft(buffer.samples[0], config, buffer.sample_rate)
    right = stft(buffer.samples[1], config, buffer.sample_rate)
    return ipd(left, right)[None].astype(dtype)
