
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Union

import numpy as np

from app.models.geometry import ArrayLayout


class Arch(str, Enum):
    LISTA = "LISTA"
    TLISTA = "TLISTA"
    THLISTA = "THLISTA"
    ADMMNET = "ADMMNet"
    THADMMNET = "THADMMNet"

    @property
    def is_lista(self) -> bool:
        return self in (Arch.LISTA, Arch.TLISTA, Arch.THLISTA)

    @property
    def hermitian_generator(self) -> Optional[str]:
        """Name of the array holding a Hermitian Toeplitz generator, if any."""
        if self == Arch.THLISTA:
            return "W1"
        if self == Arch.THADMMNET:
            return "W"
        return None


def _scalar(value) -> np.ndarray:
    return np.array(float(value), dtype=np.float64)


@dataclass
class ListaLayer:
    """x <- S_beta(W1 x + W2 y).

    W1 is dense (N, N) for LISTA, the first column of a Toeplitz matrix for
    TLISTA (with W1_row holding the rest of the first row) and a Hermitian
    Toeplitz generator for THLISTA.
    """

    W1: np.ndarray
    W2: np.ndarray
    beta_raw: np.ndarray
    W1_row: Optional[np.ndarray] = None

    def __post_init__(self):
        self.W1 = np.ascontiguousarray(self.W1, dtype=np.complex128)
        self.W2 = np.ascontiguousarray(self.W2, dtype=np.complex128)
        self.beta_raw = _scalar(self.beta_raw)
        if self.W1_row is not None:
            self.W1_row = np.ascontiguousarray(self.W1_row, dtype=np.complex128)

    def arrays(self) -> Dict[str, np.ndarray]:
        named = {"W1": self.W1}
        if self.W1_row is not None:
            named["W1_row"] = self.W1_row
        named["W2"] = self.W2
        named["beta_raw"] = self.beta_raw
        return named


@dataclass
class AdmmNetLayer:
    """W is dense (N, N) for ADMM-Net and a Hermitian Toeplitz generator for THADMM-Net."""

    W: np.ndarray
    rho_raw: np.ndarray
    beta_raw: np.ndarray

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=np.complex128)
        self.rho_raw = _scalar(self.rho_raw)
        self.beta_raw = _scalar(self.beta_raw)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {"W": self.W, "rho_raw": self.rho_raw, "beta_raw": self.beta_raw}


Layer = Union[ListaLayer, AdmmNetLayer]


@dataclass
class Network:
    arch: Arch
    M: int
    N: int
    layers: List[Layer] = field(default_factory=list)
    layout: Optional[ArrayLayout] = None

    @property
    def T(self) -> int:
        return len(self.layers)

    def parameter_arrays(self) -> List[Dict[str, np.ndarray]]:
        return [layer.arrays() for layer in self.layers]

    def copy(self) -> "Network":
        layers: List[Layer] = []
        for layer in self.layers:
            arrays = {name: value.copy() for name, value in layer.arrays().items()}
            layers.append(type(layer)(**arrays))
        return Network(arch=self.arch, M=self.M, N=self.N, layers=layers, layout=self.layout)


@dataclass
class GradientSet:
    """Per-layer gradients keyed like ``Layer.arrays()``.

    Complex entries hold dL/dRe + j dL/dIm, i.e. the (re, im) gradient pair.
    """

    layers: List[Dict[str, np.ndarray]]

    @classmethod
    def zeros_like(cls, net: Network) -> "GradientSet":
        return cls([{name: np.zeros_like(value) for name, value in arrays.items()}
                    for arrays in net.parameter_arrays()])

    def items(self):
        for index, grads in enumerate(self.layers):
            for name, value in grads.items():
                yield index, name, value

    def scale(self, factor: float) -> "GradientSet":
        return GradientSet([{name: factor * value for name, value in grads.items()} for grads in self.layers])

    def __add__(self, other: "GradientSet") -> "GradientSet":
        return GradientSet([
            {name: mine[name] + theirs[name] for name in mine}
            for mine, theirs in zip(self.layers, other.layers)
        ])

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(np.abs(value) ** 2)) for _, _, value in self.items())))

    def all_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(value))) for _, _, value in self.items())
