"""Complex LASSO baselines: soft thresholding, ISTA and ADMM.

Measurements may be a single vector of length M or a batch of shape (B, M);
iterates follow the same layout with N columns.
"""

from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from app.errors import NumericalError, ShapeMismatchError
from app.models.geometry import Dictionary
from app.schemas.solvers import AdmmConfig, IstaConfig
from app.services.toeplitz import LevinsonFactor, gram_generator

AdmmIterate = Tuple[np.ndarray, np.ndarray, np.ndarray]


def soft_threshold(z, kappa) -> Union[complex, np.ndarray]:
    """e^{j arg z} max(|z| - kappa, 0); exactly zero inside the dead zone."""
    z = np.asarray(z, dtype=np.complex128)
    mag = np.abs(z)
    active = mag > kappa
    ratio = np.divide(kappa, mag, out=np.zeros_like(mag), where=active)
    out = np.where(active, z * (1.0 - ratio), 0.0 + 0.0j)
    return complex(out) if out.ndim == 0 else out


def max_singular_value(D: Dictionary) -> float:
    try:
        return float(scipy.linalg.svdvals(D.A)[0])
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc


def lasso_objective(D: Dictionary, y: np.ndarray, x: np.ndarray, tau: float) -> float:
    y = np.asarray(y)
    x = np.asarray(x)
    if y.shape != (D.M,) or x.shape != (D.N,):
        raise ShapeMismatchError(f"expected y of shape ({D.M},) and x of shape ({D.N},)")
    residual = y - D.A @ x
    return 0.5 * float(np.vdot(residual, residual).real) + tau * float(np.abs(x).sum())


def as_rows(v: np.ndarray, width: int, name: str) -> Tuple[np.ndarray, bool]:
    v = np.asarray(v, dtype=np.complex128)
    single = v.ndim == 1
    rows = v[None, :] if single else v
    if rows.ndim != 2 or rows.shape[1] != width:
        raise ShapeMismatchError(f"{name} must have trailing dimension {width}, got shape {v.shape}")
    return rows, single


def _start(v0: Optional[np.ndarray], batch: int, N: int, name: str) -> np.ndarray:
    if v0 is None:
        return np.zeros((batch, N), dtype=np.complex128)
    rows, _ = as_rows(v0, N, name)
    return np.broadcast_to(rows, (batch, N)).copy()


def ista_run(
    D: Dictionary,
    y: np.ndarray,
    cfg: IstaConfig,
    x0: Optional[np.ndarray] = None,
    trace: bool = True,
) -> Union[List[np.ndarray], np.ndarray]:
    """x <- S_{mu tau}((I - mu A^H A) x + mu A^H y); trace[t] is x^(t), trace[0] = x0."""
    Y, single = as_rows(y, D.M, "y")
    A = D.A
    W1 = np.eye(D.N) - cfg.mu * (A.conj().T @ A)
    W2 = cfg.mu * A.conj().T
    bias = Y @ W2.T
    X = _start(x0, Y.shape[0], D.N, "x0")

    unpack = (lambda v: v[0]) if single else (lambda v: v)
    iterates = [unpack(X)]
    for _ in range(cfg.iterations):
        X = soft_threshold(X @ W1.T + bias, cfg.kappa)
        if trace:
            iterates.append(unpack(X))
    return iterates if trace else unpack(X)


def admm_run(
    D: Dictionary,
    y: np.ndarray,
    cfg: AdmmConfig,
    x0: Optional[np.ndarray] = None,
    z0: Optional[np.ndarray] = None,
    v0: Optional[np.ndarray] = None,
    trace: bool = True,
) -> Union[List[AdmmIterate], AdmmIterate]:
    """Scaled-dual ADMM for the complex LASSO.

    The x-update matrix A^H A + rho I is Hermitian Toeplitz plus a scalar, so its
    Levinson factor is built once and reused by every iteration.
    """
    Y, single = as_rows(y, D.M, "y")
    batch = Y.shape[0]
    factor = LevinsonFactor(gram_generator(D), cfg.rho)
    AhY = Y @ D.A.conj()
    X = _start(x0, batch, D.N, "x0")
    Z = _start(z0, batch, D.N, "z0")
    V = _start(v0, batch, D.N, "v0")

    unpack = (lambda v: v[0]) if single else (lambda v: v)
    iterates = [(unpack(X), unpack(Z), unpack(V))]
    for _ in range(cfg.iterations):
        X = factor.solve((AhY + cfg.rho * (Z - V)).T).T
        Z = soft_threshold(X + V, cfg.kappa)
        V = V + X - Z
        if trace:
            iterates.append((unpack(X), unpack(Z), unpack(V)))
    final = (unpack(X), unpack(Z), unpack(V))
    return iterates if trace else final
