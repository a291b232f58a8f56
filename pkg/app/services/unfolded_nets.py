"""Deep-unfolded networks: LISTA, TLISTA, THLISTA, ADMM-Net and THADMM-Net."""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

from app import settings
from app.errors import ConditioningError, InvalidArgumentError, InvariantViolation, ShapeMismatchError
from app.models.geometry import Dictionary
from app.models.network import AdmmNetLayer, Arch, ListaLayer, Network
from app.models.toeplitz import HermToeplitz, PsdLiftResult
from app.services.classic_solvers import as_rows, max_singular_value, soft_threshold
from app.services.toeplitz import LevinsonFactor, gram_generator, min_eigenvalue, toeplitz_dense

logger = logging.getLogger(__name__)

INIT_BETA = 0.1
INIT_RHO = 1.0
# above this (W + rho I) is treated as numerically singular
MAX_CONDITION = 1e12


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(y: float) -> float:
    if y <= 0:
        raise InvalidArgumentError(f"softplus only reaches positive values, got {y}")
    return float(y + np.log(-np.expm1(-y)))


@dataclass
class ListaActivation:
    x_in: np.ndarray
    u: np.ndarray
    W1: np.ndarray
    beta: float


@dataclass
class AdmmActivation:
    z_in: np.ndarray
    v_in: np.ndarray
    x: np.ndarray
    p: np.ndarray
    beta: float
    rho: float
    eta: float
    solver: Union[LevinsonFactor, Tuple[np.ndarray, np.ndarray]]
    lift: Optional[PsdLiftResult] = None


Activation = Union[ListaActivation, AdmmActivation]


@dataclass
class ForwardResult:
    output: np.ndarray
    y: np.ndarray
    activations: List[Activation]
    single: bool

    @property
    def x_hat(self) -> np.ndarray:
        return self.output[0] if self.single else self.output


def param_count(arch: Union[Arch, str], T: int, M: int, N: int) -> int:
    """Learnable parameters counted per complex entry, as the architectures are usually reported."""
    arch = Arch(arch)
    per_layer = {
        Arch.LISTA: N * N + M * N + 1,
        Arch.TLISTA: 2 * N + M * N,
        Arch.THLISTA: N + M * N + 1,
        Arch.ADMMNET: N * N + 2,
        Arch.THADMMNET: N + 2,
    }[arch]
    return T * per_layer


def init_network(arch: Union[Arch, str], T: int, D: Dictionary) -> Network:
    """Every layer starts from the matrices of the iteration it unfolds."""
    arch = Arch(arch)
    if T < 1:
        raise InvalidArgumentError(f"depth must be at least 1, got {T}")
    N = D.N
    gram = gram_generator(D)
    beta_raw = inverse_softplus(INIT_BETA)

    layers = []
    if arch.is_lista:
        mu = 1.0 / max_singular_value(D) ** 2
        identity_gen = np.zeros(N, dtype=np.complex128)
        identity_gen[0] = 1.0
        W2 = mu * D.A.conj().T
        for _ in range(T):
            if arch == Arch.LISTA:
                layer = ListaLayer(W1=np.eye(N) - mu * (D.A.conj().T @ D.A), W2=W2.copy(), beta_raw=beta_raw)
            elif arch == Arch.TLISTA:
                col = identity_gen - mu * gram.gen
                layer = ListaLayer(W1=col, W1_row=np.conj(col[1:]), W2=W2.copy(), beta_raw=beta_raw)
            else:
                layer = ListaLayer(W1=identity_gen - mu * gram.gen, W2=W2.copy(), beta_raw=beta_raw)
            layers.append(layer)
    else:
        rho_raw = inverse_softplus(INIT_RHO)
        for _ in range(T):
            W = D.A.conj().T @ D.A if arch == Arch.ADMMNET else gram.gen.copy()
            layers.append(AdmmNetLayer(W=W, rho_raw=rho_raw, beta_raw=beta_raw))
    return Network(arch=arch, M=D.M, N=N, layers=layers, layout=D.layout)


def _check_dims(net: Network, D: Dictionary) -> None:
    if (net.M, net.N) != (D.M, D.N):
        raise ShapeMismatchError(f"network built for (M, N) = ({net.M}, {net.N}), dictionary is ({D.M}, {D.N})")


def lista_matrix(arch: Arch, layer: ListaLayer) -> np.ndarray:
    if arch == Arch.LISTA:
        return layer.W1
    if arch == Arch.TLISTA:
        return toeplitz_dense(layer.W1, layer.W1_row)
    return HermToeplitz(layer.W1).to_dense()


def forward_lista(net: Network, y: np.ndarray, D: Dictionary) -> ForwardResult:
    """x^(t+1) = S_beta(W1 x^(t) + W2 y), x^(0) = 0."""
    if not net.arch.is_lista:
        raise InvalidArgumentError(f"{net.arch.value} is not a LISTA-type network")
    _check_dims(net, D)
    Y, single = as_rows(y, net.M, "y")
    X = np.zeros((Y.shape[0], net.N), dtype=np.complex128)
    activations: List[Activation] = []
    for layer in net.layers:
        W1 = lista_matrix(net.arch, layer)
        beta = float(softplus(layer.beta_raw))
        U = X @ W1.T + Y @ layer.W2.T
        activations.append(ListaActivation(x_in=X, u=U, W1=W1, beta=beta))
        X = soft_threshold(U, beta)
    return ForwardResult(output=X, y=Y, activations=activations, single=single)


def _dense_solver(W: np.ndarray, rho: float) -> Tuple[np.ndarray, np.ndarray]:
    B = W + rho * np.eye(W.shape[0])
    condition = float(np.linalg.cond(B))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise ConditioningError("W + rho I is numerically singular", condition=condition)
    return scipy.linalg.lu_factor(B)


def _forward_admm(net: Network, y: np.ndarray, D: Dictionary) -> ForwardResult:
    _check_dims(net, D)
    Y, single = as_rows(y, net.M, "y")
    AhY = Y @ D.A.conj()  # shared by every layer
    Z = np.zeros((Y.shape[0], net.N), dtype=np.complex128)
    V = np.zeros_like(Z)
    debug = settings.debug_checks_enabled()
    activations: List[Activation] = []
    for index, layer in enumerate(net.layers):
        rho = float(softplus(layer.rho_raw))
        beta = float(softplus(layer.beta_raw))
        lift = None
        if net.arch == Arch.THADMMNET:
            lift = min_eigenvalue(HermToeplitz(layer.W))
            eta = lift.lifted_shift + rho
            if debug and not lift.lambda_min + eta > 0.0:
                raise InvariantViolation(f"layer {index}: W_TH + eta I is not positive definite")
            solver = LevinsonFactor(HermToeplitz(layer.W), eta)
            X = solver.solve((AhY + eta * (Z - V)).T).T
        else:
            eta = rho
            solver = _dense_solver(layer.W, rho)
            X = scipy.linalg.lu_solve(solver, (AhY + rho * (Z - V)).T).T
        P = X + V
        Z_next = soft_threshold(P, beta)
        activations.append(AdmmActivation(
            z_in=Z, v_in=V, x=X, p=P, beta=beta, rho=rho, eta=eta, solver=solver, lift=lift,
        ))
        V = V + X - Z_next
        Z = Z_next
    return ForwardResult(output=Z, y=Y, activations=activations, single=single)


def forward_thadmm(net: Network, y: np.ndarray, D: Dictionary) -> ForwardResult:
    """THADMM-Net: Levinson x-update with eta = max(-lambda_min(W_TH), 0) + rho."""
    if net.arch != Arch.THADMMNET:
        raise InvalidArgumentError(f"expected a THADMMNet, got {net.arch.value}")
    return _forward_admm(net, y, D)


def forward_admmnet(net: Network, y: np.ndarray, D: Dictionary) -> ForwardResult:
    if net.arch != Arch.ADMMNET:
        raise InvalidArgumentError(f"expected an ADMMNet, got {net.arch.value}")
    return _forward_admm(net, y, D)


def forward(net: Network, y: np.ndarray, D: Dictionary) -> ForwardResult:
    if net.arch.is_lista:
        return forward_lista(net, y, D)
    if net.arch == Arch.THADMMNET:
        return forward_thadmm(net, y, D)
    return forward_admmnet(net, y, D)


def assert_operators_positive_definite(net: Network) -> None:
    """Every THADMM-Net layer operator W_TH + eta I must have a positive smallest eigenvalue."""
    if net.arch != Arch.THADMMNET:
        return
    for index, layer in enumerate(net.layers):
        lift = min_eigenvalue(HermToeplitz(layer.W))
        eta = lift.lifted_shift + float(softplus(layer.rho_raw))
        if not lift.lambda_min + eta > 0.0:
            raise InvariantViolation(
                f"layer {index}: lambda_min(W_TH + eta I) = {lift.lambda_min + eta:.3g}",
            )
