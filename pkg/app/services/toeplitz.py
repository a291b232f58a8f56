"""Hermitian Toeplitz algebra: products, Levinson solves, lambda_min and the PSD lift."""

import logging
from typing import List, Tuple

import numpy as np
import scipy.linalg

from app.errors import InvalidArgumentError, NumericalError, ShapeMismatchError, SingularityError
from app.models.geometry import Dictionary
from app.models.toeplitz import HermToeplitz, LiftedToeplitz, PsdLiftResult

logger = logging.getLogger(__name__)

# reflection coefficients of a PD matrix stay strictly inside the unit disk
BREAKDOWN_TOL = 1e-12
# eigenvalues this close to zero (relative to the generator norm) are rounding noise
EIG_ZERO_TOL = 1e-12


def to_dense(T: HermToeplitz) -> np.ndarray:
    return T.to_dense()


def toeplitz_dense(col: np.ndarray, row_tail: np.ndarray) -> np.ndarray:
    """General Toeplitz matrix from its first column and the rest of its first row."""
    return scipy.linalg.toeplitz(col, np.concatenate((col[:1], row_tail)))


def matvec(T: HermToeplitz, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != T.N:
        raise ShapeMismatchError(f"vector of length {v.shape[0]} against a {T.N}x{T.N} operator")
    if T.N == 1:
        return T.gen[0] * v.astype(np.complex128)
    return scipy.linalg.matmul_toeplitz((T.gen, np.conj(T.gen)), v)


def gram_generator(D: Dictionary) -> HermToeplitz:
    """First column of A^H A, which is Toeplitz on a uniform grid."""
    N = D.grid.N
    steps = np.diff(D.grid.freqs)
    if steps.size and not np.allclose(steps, 1.0 / N, rtol=0, atol=1e-12):
        raise InvalidArgumentError("Gram matrix is Toeplitz only on a uniform grid")
    lags = np.arange(N)
    gen = np.exp(-2j * np.pi * np.outer(lags, D.layout.positions) / N).sum(axis=1)
    return HermToeplitz(gen)


class LevinsonFactor:
    """Levinson recursion for (T + shift*I) x = b, run once and reused per right-hand side.

    Keeps the backward vectors g_n (T_n g_n = e_n) of every order; a solve then
    costs O(N^2) per right-hand side and batches over columns of b.
    """

    def __init__(self, T: HermToeplitz, shift: float = 0.0):
        t = np.array(T.gen, dtype=np.complex128)
        t[0] += shift
        N = t.size
        self.N = N
        self.shift = float(shift)
        self._t = t
        if not t[0].real > 0.0:
            raise SingularityError("Levinson breakdown: non-positive diagonal", order=1)

        forward = np.array([1.0 / t[0].real], dtype=np.complex128)
        backward: List[np.ndarray] = [forward.copy()]
        for n in range(1, N):
            eps = t[n:0:-1] @ forward
            mag = abs(eps)
            if mag >= 1.0 - BREAKDOWN_TOL:
                raise SingularityError(
                    f"Levinson breakdown at order {n + 1}: reflection magnitude {mag:.6g}",
                    order=n + 1,
                )
            flipped = np.conj(forward[::-1])
            forward = (np.append(forward, 0.0) - eps * np.insert(flipped, 0, 0.0)) / (1.0 - mag * mag)
            backward.append(np.conj(forward[::-1]))
        self._backward = backward

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.complex128)
        if b.shape[0] != self.N:
            raise ShapeMismatchError(f"right-hand side of length {b.shape[0]} against order {self.N}")
        rhs = b.reshape(self.N, -1)
        x = np.zeros_like(rhs)
        t = self._t
        for n in range(self.N):
            residual = rhs[n] - t[n:0:-1] @ x[:n] if n else rhs[0]
            x[: n + 1] += np.outer(self._backward[n], residual)
        return x.reshape(b.shape)


def levinson_solve(T: HermToeplitz, shift: float, b: np.ndarray) -> np.ndarray:
    return LevinsonFactor(T, shift).solve(b)


def min_eigenvalue(T: HermToeplitz) -> PsdLiftResult:
    """Smallest eigenpair from the dense Hermitian eigensolver (LAPACK caps the iterations)."""
    if not np.all(np.isfinite(T.gen)):
        raise NumericalError("generator holds non-finite entries")
    dense = T.to_dense()
    try:
        values, vectors = scipy.linalg.eigh(dense, subset_by_index=[0, 0])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    lam = float(values[0])
    scale = max(1.0, float(np.linalg.norm(T.gen)))
    if abs(lam) <= EIG_ZERO_TOL * scale:
        lam = 0.0
    vec = vectors[:, 0]
    vec = vec / np.linalg.norm(vec)
    residual = float(np.linalg.norm(dense @ vec - lam * vec))
    if residual > 1e-6 * scale:
        raise NumericalError("eigenpair residual above tolerance", residual=residual)
    return PsdLiftResult(lifted_shift=-lam if lam < 0.0 else 0.0, lambda_min=lam, eigvec_min=vec)


def psd_lift(T: HermToeplitz) -> Tuple[LiftedToeplitz, PsdLiftResult]:
    """T + max(-lambda_min(T), 0) I; leaves a PSD input untouched."""
    result = min_eigenvalue(T)
    return LiftedToeplitz(base=T, shift=result.lifted_shift), result


def diagonal_sums(G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sums of G along its diagonals: (lower[d] over i-j=d, upper[d] over j-i=d), d = 0..N-1."""
    N = G.shape[0]
    offsets = (np.arange(N)[:, None] - np.arange(N)[None, :]).ravel() + (N - 1)
    real = np.bincount(offsets, weights=G.real.ravel(), minlength=2 * N - 1)
    imag = np.bincount(offsets, weights=G.imag.ravel(), minlength=2 * N - 1)
    sums = real + 1j * imag
    return sums[N - 1:], sums[N - 1::-1]


def toeplitz_adjoint(G: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Pull a dense gradient back onto (column, row tail) generators of a general Toeplitz matrix."""
    lower, upper = diagonal_sums(G)
    return lower, upper[1:]


def hermitian_adjoint(G: np.ndarray) -> np.ndarray:
    """Pull a dense gradient back onto a Hermitian Toeplitz generator.

    Upper-triangle entries hold conj(gen), so their sums enter conjugated; the
    diagonal is a single real degree of freedom.
    """
    lower, upper = diagonal_sums(G)
    grad = lower + np.conj(upper)
    grad[0] = lower[0].real
    return grad
