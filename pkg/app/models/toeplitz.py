
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from app.errors import InvalidArgumentError


@dataclass(frozen=True)
class HermToeplitz:
    """Hermitian Toeplitz matrix held by its first column t_0..t_{N-1}."""

    gen: np.ndarray

    def __post_init__(self):
        gen = np.array(self.gen, dtype=np.complex128).reshape(-1)
        if gen.size == 0:
            raise InvalidArgumentError("generator must hold at least one entry")
        if abs(gen[0].imag) > 1e-12 * max(1.0, abs(gen[0])):
            raise InvalidArgumentError(f"Hermitian diagonal must be real, got {gen[0]}")
        gen[0] = gen[0].real
        gen.setflags(write=False)
        object.__setattr__(self, "gen", gen)

    @property
    def N(self) -> int:
        return int(self.gen.size)

    def to_dense(self) -> np.ndarray:
        return scipy.linalg.toeplitz(self.gen, np.conj(self.gen))


@dataclass(frozen=True)
class PsdLiftResult:
    lifted_shift: float
    lambda_min: float
    eigvec_min: np.ndarray


@dataclass(frozen=True)
class LiftedToeplitz:
    """The operator T + shift * I."""

    base: HermToeplitz
    shift: float = 0.0

    @property
    def N(self) -> int:
        return self.base.N

    def to_dense(self) -> np.ndarray:
        return self.base.to_dense() + self.shift * np.eye(self.N)

    def as_toeplitz(self) -> HermToeplitz:
        gen = np.array(self.base.gen)
        gen[0] += self.shift
        return HermToeplitz(gen)
