
from dataclasses import dataclass, field

import numpy as np

from app.errors import InvalidArgumentError, ShapeMismatchError


@dataclass(frozen=True)
class ArrayLayout:
    """Element positions p_m on a lattice of spacing gamma*wavelength."""

    positions: np.ndarray
    gamma: float = 0.5

    def __post_init__(self):
        positions = np.asarray(self.positions)
        if positions.ndim != 1 or positions.size == 0:
            raise InvalidArgumentError("positions must be a non-empty 1-D sequence")
        if not np.issubdtype(positions.dtype, np.integer):
            if not np.all(np.equal(np.mod(positions, 1), 0)):
                raise InvalidArgumentError("positions must be integers (off-lattice elements are not supported)")
        positions = positions.astype(np.int64)
        if np.any(positions < 0):
            raise InvalidArgumentError("positions must be non-negative")
        if np.any(np.diff(positions) <= 0):
            raise InvalidArgumentError("positions must be strictly increasing")
        if not 0.0 < float(self.gamma) < 1.0:
            raise InvalidArgumentError(f"gamma must lie in (0, 1), got {self.gamma}")
        positions.setflags(write=False)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def M(self) -> int:
        return int(self.positions.size)


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid freqs[n] = -1/2 + n/N over [-1/2, 1/2)."""

    N: int
    gamma: float = 0.5
    freqs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.N) < 1:
            raise InvalidArgumentError(f"grid size must be positive, got {self.N}")
        object.__setattr__(self, "N", int(self.N))
        freqs = -0.5 + np.arange(self.N) / self.N
        freqs.setflags(write=False)
        object.__setattr__(self, "freqs", freqs)

    @property
    def step(self) -> float:
        return 1.0 / self.N


@dataclass(frozen=True)
class Dictionary:
    layout: ArrayLayout
    grid: FrequencyGrid
    A: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        if self.A.shape != (self.layout.M, self.grid.N):
            raise ShapeMismatchError(
                f"dictionary shape {self.A.shape} does not match (M, N) = ({self.layout.M}, {self.grid.N})"
            )

    @property
    def M(self) -> int:
        return self.layout.M

    @property
    def N(self) -> int:
        return self.grid.N
