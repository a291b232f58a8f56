"""Reverse-mode gradients of the NMSE loss for every unfolded architecture.

Complex quantities carry their gradient as G = dL/dRe + j dL/dIm. With that
convention a product y = W x pulls back as G_x = W^H G_y and G_W = G_y x^H,
which is what every adjoint below is built from. Batches are stored as rows.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import expit

from app.errors import ShapeMismatchError, ZeroSignalError
from app.models.geometry import Dictionary
from app.models.network import Arch, GradientSet, Network
from app.services.classic_solvers import as_rows
from app.services.toeplitz import hermitian_adjoint, toeplitz_adjoint
from app.services.unfolded_nets import AdmmActivation, ForwardResult, ListaActivation, forward

logger = logging.getLogger(__name__)


def nmse_per_sample(x_hat: np.ndarray, x: np.ndarray) -> np.ndarray:
    X_hat, _ = as_rows(x_hat, np.shape(x)[-1], "x_hat")
    X, _ = as_rows(x, np.shape(x)[-1], "x")
    if X_hat.shape != X.shape:
        raise ShapeMismatchError(f"estimate {X_hat.shape} against ground truth {X.shape}")
    energy = np.sum(np.abs(X) ** 2, axis=1)
    if np.any(energy == 0.0):
        raise ZeroSignalError("NMSE is undefined for an all-zero ground truth")
    return np.sum(np.abs(X_hat - X) ** 2, axis=1) / energy


def nmse_value_and_grad(x_hat: np.ndarray, x: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean NMSE over the batch and its gradient with respect to the estimate rows."""
    X_hat, _ = as_rows(x_hat, np.shape(x)[-1], "x_hat")
    X, _ = as_rows(x, np.shape(x)[-1], "x")
    losses = nmse_per_sample(X_hat, X)
    energy = np.sum(np.abs(X) ** 2, axis=1)
    grad = (2.0 / X.shape[0]) * (X_hat - X) / energy[:, None]
    return float(np.mean(losses)), grad


def soft_threshold_adjoint(u: np.ndarray, beta: float, G: np.ndarray) -> Tuple[np.ndarray, float]:
    """Pull G back through z(1 - beta/|z|); the dead zone |z| <= beta passes nothing."""
    r = np.abs(u)
    active = r > beta
    safe = np.where(active, r, 1.0)
    alignment = np.real(np.conj(G) * u)
    G_u = np.where(active, (1.0 - beta / safe) * G + beta * alignment * u / safe ** 3, 0.0)
    g_beta = -float(np.sum(np.where(active, alignment / safe, 0.0)))
    return G_u, g_beta


def _backward_lista(net: Network, result: ForwardResult, G_out: np.ndarray) -> GradientSet:
    layers = [None] * net.T
    G_X = G_out
    for t in reversed(range(net.T)):
        act: ListaActivation = result.activations[t]
        layer = net.layers[t]
        G_U, g_beta = soft_threshold_adjoint(act.u, act.beta, G_X)
        G_W1 = G_U.T @ act.x_in.conj()
        grads = {}
        if net.arch == Arch.LISTA:
            grads["W1"] = G_W1
        elif net.arch == Arch.TLISTA:
            grads["W1"], grads["W1_row"] = toeplitz_adjoint(G_W1)
        else:
            grads["W1"] = hermitian_adjoint(G_W1)
        grads["W2"] = G_U.T @ result.y.conj()
        grads["beta_raw"] = np.array(g_beta * expit(layer.beta_raw))
        layers[t] = grads
        G_X = G_U @ act.W1.conj()
    return GradientSet(layers)


def _adjoint_solve(act: AdmmActivation, G: np.ndarray) -> np.ndarray:
    if isinstance(act.solver, tuple):
        return scipy.linalg.lu_solve(act.solver, G.T, trans=2).T
    # W_TH + eta I is Hermitian, so the forward factor serves the adjoint too
    return act.solver.solve(G.T).T


def _backward_admm(net: Network, result: ForwardResult, G_out: np.ndarray, stop_gradient_eta: bool) -> GradientSet:
    layers = [None] * net.T
    G_Z = G_out
    G_V = np.zeros_like(G_out)
    for t in reversed(range(net.T)):
        act: AdmmActivation = result.activations[t]
        layer = net.layers[t]

        # v' = v + x - z'
        G_X = G_V.copy()
        G_V_in = G_V.copy()
        G_P, g_beta = soft_threshold_adjoint(act.p, act.beta, G_Z - G_V)
        G_X += G_P
        G_V_in += G_P

        # x = B^{-1} (A^H y + eta (z - v)), no gradient into A^H y
        G_R = _adjoint_solve(act, G_X)
        G_B = -(G_R.T @ act.x.conj())
        g_eta = float(np.real(np.trace(G_B))) + float(np.sum(np.real(np.conj(G_R) * (act.z_in - act.v_in))))
        G_Z_in = act.eta * G_R
        G_V_in -= act.eta * G_R

        if net.arch == Arch.THADMMNET:
            g_W = hermitian_adjoint(G_B)
            lift = act.lift
            # max(-lambda, 0) contributes only on its active branch
            if lift is not None and lift.lambda_min < 0.0 and not stop_gradient_eta:
                v = lift.eigvec_min
                g_W = g_W - g_eta * hermitian_adjoint(np.outer(v, v.conj()))
        else:
            g_W = G_B
        layers[t] = {
            "W": g_W,
            "rho_raw": np.array(g_eta * expit(layer.rho_raw)),
            "beta_raw": np.array(g_beta * expit(layer.beta_raw)),
        }
        G_Z, G_V = G_Z_in, G_V_in
    return GradientSet(layers)


def backward(net: Network, result: ForwardResult, loss_grad: np.ndarray, stop_gradient_eta: bool = False) -> GradientSet:
    """Exact gradient of a real loss with respect to every raw parameter of ``net``."""
    if len(result.activations) != net.T:
        raise ShapeMismatchError(f"{len(result.activations)} recorded layers for a {net.T}-layer network")
    G_out, _ = as_rows(loss_grad, net.N, "loss_grad")
    if G_out.shape != result.output.shape:
        raise ShapeMismatchError(f"loss gradient {G_out.shape} against output {result.output.shape}")
    if net.T == 0:
        return GradientSet([])
    if net.arch.is_lista:
        return _backward_lista(net, result, G_out)
    return _backward_admm(net, result, G_out, stop_gradient_eta)


def loss_and_gradients(net: Network, D: Dictionary, y: np.ndarray, x: np.ndarray,
                       stop_gradient_eta: bool = False) -> Tuple[float, GradientSet]:
    result = forward(net, y, D)
    loss, G = nmse_value_and_grad(result.output, x)
    return loss, backward(net, result, G, stop_gradient_eta=stop_gradient_eta)


@dataclass
class Coordinate:
    layer: int
    name: str
    index: Tuple[int, ...]
    component: str  # "re" or "im"

    def __str__(self) -> str:
        return f"layer {self.layer} {self.name}{list(self.index)}.{self.component}"


@dataclass
class FiniteDiffReport:
    tolerance: float
    checked: int = 0
    worst_rel_error: float = 0.0
    worst: Optional[Coordinate] = None
    failures: List[Tuple[Coordinate, float]] = field(default_factory=list)
    excluded: bool = False
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.excluded or not self.failures


def nondifferentiable_reason(net: Network, result: ForwardResult, margin: float) -> str:
    for t, act in enumerate(result.activations):
        pre = act.u if isinstance(act, ListaActivation) else act.p
        gap = float(np.min(np.abs(np.abs(pre) - act.beta)))
        if gap < margin:
            return f"layer {t}: soft-threshold input within {gap:.2e} of its dead-zone edge"
        if isinstance(act, AdmmActivation) and act.lift is not None and abs(act.lift.lambda_min) < margin:
            return f"layer {t}: lambda_min = {act.lift.lambda_min:.2e} sits on the lift kink"
    return ""


def real_coordinates(net: Network):
    """Every raw real degree of freedom as (layer, name, index, component)."""
    herm = net.arch.hermitian_generator
    for t, arrays in enumerate(net.parameter_arrays()):
        for name, value in arrays.items():
            for index in np.ndindex(value.shape):
                yield Coordinate(t, name, index, "re")
                if np.iscomplexobj(value) and not (name == herm and index == (0,)):
                    yield Coordinate(t, name, index, "im")


def finite_diff_check(net: Network, D: Dictionary, y: np.ndarray, x: np.ndarray,
                      step: float = 1e-5, tolerance: float = 1e-4,
                      stop_gradient_eta: bool = False) -> FiniteDiffReport:
    """Compare ``backward`` against central differences on every raw real coordinate."""
    report = FiniteDiffReport(tolerance=tolerance)
    result = forward(net, y, D)
    reason = nondifferentiable_reason(net, result, 10.0 * step)
    if reason:
        report.excluded = True
        report.reason = reason
        return report

    _, G = nmse_value_and_grad(result.output, x)
    grads = backward(net, result, G, stop_gradient_eta=stop_gradient_eta)
    scale = max((float(np.max(np.abs(g))) for _, _, g in grads.items() if g.size), default=0.0)
    floor = max(1e-8, 1e-3 * scale)

    trial = net.copy()
    for coord in real_coordinates(trial):
        array = trial.layers[coord.layer].arrays()[coord.name]
        original = array[coord.index]
        delta = step if coord.component == "re" else 1j * step
        array[coord.index] = original + delta
        plus = float(np.mean(nmse_per_sample(forward(trial, y, D).output, x)))
        array[coord.index] = original - delta
        minus = float(np.mean(nmse_per_sample(forward(trial, y, D).output, x)))
        array[coord.index] = original

        numeric = (plus - minus) / (2.0 * step)
        exact = grads.layers[coord.layer][coord.name][coord.index]
        exact = float(exact.real if coord.component == "re" else exact.imag)
        error = abs(numeric - exact) / max(abs(numeric), abs(exact), floor)
        report.checked += 1
        if error > report.worst_rel_error:
            report.worst_rel_error = error
            report.worst = coord
        if error > tolerance:
            report.failures.append((coord, error))

    logger.info("finite-difference check on %s: %d coordinates, worst %.2e at %s",
                net.arch.value, report.checked, report.worst_rel_error, report.worst)
    return report


def perturb_network(net: Network, rng: np.random.Generator, scale: float = 0.05) -> Network:
    """Copy of ``net`` with Gaussian noise on every raw parameter, moving it off the init kinks.

    A Hermitian generator keeps a real zero-lag entry.
    """
    trial = net.copy()
    herm = net.arch.hermitian_generator
    for arrays in trial.parameter_arrays():
        for name, value in arrays.items():
            if value.ndim == 0:
                value += scale * rng.standard_normal()
                continue
            noise = rng.standard_normal(value.shape) + 1j * rng.standard_normal(value.shape)
            if name == herm:
                noise[0] = noise[0].real
            value += scale * noise
    return trial
