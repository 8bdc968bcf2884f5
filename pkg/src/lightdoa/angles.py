"""Azimuth normalization, front-back folding and class discretization.

Angles are in degrees throughout. The folded half-plane [0, 180] is split
into ``K`` classes whose centers sit at ``k * 180 / (K - 1)``, so both
endpoints are class centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

SUPPORTED_CLASS_COUNTS = (9, 13, 19, 37)


@dataclass(frozen=True)
class AngleGrid:
    num_classes: int

    def __post_init__(self):
        if self.num_classes not in SUPPORTED_CLASS_COUNTS:
            raise InvalidArgument(
                f"unsupported class count {self.num_classes}; expected one of {SUPPORTED_CLASS_COUNTS}"
            )

    @property
    def spacing(self) -> float:
        return 180.0 / (self.num_classes - 1)

    def centers(self) -> np.ndarray:
        return np.arange(self.num_classes) * self.spacing


def normalize_angle(theta: float) -> float:
    """Map any finite angle into [0, 360)."""
    if not math.isfinite(theta):
        raise InvalidArgument(f"angle must be finite, got {theta}")
    out = math.fmod(theta, 360.0)
    if out < 0:
        out += 360.0
    # fmod(-1e-17, 360) + 360 rounds to 360.0
    return 0.0 if out >= 360.0 else out


def fold_front_back(theta_norm: float) -> float:
    """Fold [0, 360) onto the front half-plane [0, 180]."""
    if not 0.0 <= theta_norm < 360.0:
        raise InvalidArgument(f"expected an angle in [0, 360), got {theta_norm}")
    return theta_norm if theta_norm <= 180.0 else 360.0 - theta_norm


def fold_angle(theta: float) -> float:
    """``fold_front_back(normalize_angle(theta))``."""
    return fold_front_back(normalize_angle(theta))


def angle_to_class(theta_mapped: float, grid: AngleGrid) -> int:
    """Nearest class center; exact midpoints round up."""
    if not 0.0 <= theta_mapped <= 180.0:
        raise InvalidArgument(f"expected a folded angle in [0, 180], got {theta_mapped}")
    k = math.floor(theta_mapped / grid.spacing + 0.5)
    return min(max(k, 0), grid.num_classes - 1)


def class_to_angle(k: int, grid: AngleGrid) -> float:
    if not 0 <= k < grid.num_classes:
        raise InvalidArgument(f"class {k} outside [0, {grid.num_classes})")
    return k * grid.spacing


def expected_angle(probabilities, grid: AngleGrid, tol: float = 1e-6) -> float:
    """Probability-weighted mean of the class centers."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape != (grid.num_classes,):
        raise InvalidArgument(f"expected {grid.num_classes} probabilities, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)) or abs(p.sum() - 1.0) > tol:
        raise InvalidArgument("probabilities must be nonnegative and sum to 1")
    return float(p @ grid.centers())
