import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def direct_dft(frame: np.ndarray) -> np.ndarray:
    """O(n^2) DFT of one frame, bins 0..n/2."""
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    i = np.arange(n)[None, :]
    return (frame[None, :] * np.exp(-2j * np.pi * k * i / n)).sum(axis=1)


def circular_error(a, b):
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))
