"""GCC-PHAT delay estimation and far-field azimuth conversion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, UndefinedEstimate
from .room import SPEED_OF_SOUND

PHAT_EPS = 1e-12
MIN_LENGTH = 256


@dataclass(frozen=True)
class TdoaEstimate:
    tau: float  # seconds, positive when x1 leads x2
    peak_value: float


def gcc_phat(x1, x2, fs: float, max_tau: float) -> TdoaEstimate:
    """Delay of ``x2`` relative to ``x1`` from the PHAT-weighted cross-correlation.

    The integer-lag peak inside ``+/- max_tau`` is refined with a parabola
    through its two neighbours.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise InvalidArgument("gcc_phat expects two 1-D signals of equal length")
    if len(x1) < MIN_LENGTH:
        raise InvalidArgument(f"signals must have at least {MIN_LENGTH} samples")
    if max_tau <= 0:
        raise InvalidArgument("max_tau must be positive")
    if not np.any(x1) or not np.any(x2):
        raise UndefinedEstimate("GCC-PHAT is undefined for an all-zero input")

    n = 2 * len(x1)
    cross = np.fft.rfft(x2, n) * np.conj(np.fft.rfft(x1, n))
    cc = np.fft.irfft(cross / (np.abs(cross) + PHAT_EPS), n)

    max_shift = min(int(math.floor(max_tau * fs)), len(x1) - 1)
    window = np.concatenate([cc[-max_shift:], cc[: max_shift + 1]]) if max_shift else cc[:1]
    k = int(np.argmax(window))
    offset = 0.0
    if 0 < k < len(window) - 1:
        y0, y1, y2 = window[k - 1], window[k], window[k + 1]
        denom = y0 - 2.0 * y1 + y2
        if denom < 0:
            offset = 0.5 * (y0 - y2) / denom
    lag = k - max_shift + offset
    tau = float(np.clip(lag / fs, -max_tau, max_tau))
    return TdoaEstimate(tau=tau, peak_value=float(window[k]))


def tdoa_to_azimuth(tau: float, spacing: float, c: float = SPEED_OF_SOUND) -> float:
    """Far-field azimuth in [0, 180] for a delay measured with channel 1 at ``M1 + s/2``."""
    if spacing <= 0:
        raise InvalidArgument("spacing must be positive")
    return math.degrees(math.acos(min(1.0, max(-1.0, c * tau / spacing))))


def estimate_azimuth(x1, x2, fs: float, spacing: float, c: float = SPEED_OF_SOUND, margin: float = 1.1):
    """GCC-PHAT azimuth of a stereo pair; returns ``(azimuth_deg, TdoaEstimate)``."""
    est = gcc_phat(x1, x2, fs, margin * spacing / c)
    return tdoa_to_azimuth(est.tau, spacing, c), est
