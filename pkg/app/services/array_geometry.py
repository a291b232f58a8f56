"""Grids, steering vectors and dictionaries for sparse linear arrays."""

from typing import Union

import numpy as np

from app.errors import DomainError, InvalidArgumentError
from app.models.geometry import ArrayLayout, Dictionary, FrequencyGrid

ArrayLike = Union[float, np.ndarray]


def circular_distance(a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """Distance on the unit-period frequency circle, in [0, 1/2]."""
    return np.abs(np.mod(np.asarray(a) - np.asarray(b) + 0.5, 1.0) - 0.5)


def steering_vector(layout: ArrayLayout, f: float) -> np.ndarray:
    if not -0.5 <= f < 0.5:
        raise DomainError(f"frequency {f} outside [-1/2, 1/2)")
    return np.exp(2j * np.pi * layout.positions * f)


def steering_matrix(layout: ArrayLayout, freqs: np.ndarray) -> np.ndarray:
    """Columns a(f) for arbitrary frequencies (no range check)."""
    return np.exp(2j * np.pi * np.outer(layout.positions, np.asarray(freqs, dtype=float)))


def build_dictionary(layout: ArrayLayout, grid: FrequencyGrid) -> Dictionary:
    A = steering_matrix(layout, grid.freqs)
    A.setflags(write=False)
    return Dictionary(layout=layout, grid=grid, A=A)


def subsample_positions(full_aperture: int, M: int, rng_seed: int, gamma: float = 0.5) -> ArrayLayout:
    """Draw M lattice positions from {0..full_aperture}, always keeping both endpoints."""
    if full_aperture < 0 or M < 1:
        raise InvalidArgumentError("full_aperture must be >= 0 and M >= 1")
    if M > full_aperture + 1:
        raise InvalidArgumentError(
            f"cannot draw {M} distinct elements from an aperture of {full_aperture + 1} positions"
        )
    if full_aperture == 0:
        return ArrayLayout(positions=np.array([0]), gamma=gamma)
    if M < 2:
        raise InvalidArgumentError("at least two elements are needed to keep the aperture endpoints")
    rng = np.random.default_rng(rng_seed)
    interior = rng.choice(np.arange(1, full_aperture), size=M - 2, replace=False)
    positions = np.sort(np.concatenate(([0, full_aperture], interior)))
    return ArrayLayout(positions=positions, gamma=gamma)


def freq_to_angle(f: ArrayLike, gamma: float) -> ArrayLike:
    """Angle in degrees for grid frequency f, taken as asin(f / gamma)."""
    ratio = np.asarray(f, dtype=float) / gamma
    if np.any(np.abs(ratio) > 1.0):
        raise DomainError(f"|f / gamma| exceeds 1 for gamma={gamma}")
    angle = np.degrees(np.arcsin(ratio))
    return float(angle) if np.ndim(angle) == 0 else angle
