"""Named estimators for evaluation sweeps: trained networks and the reference solvers."""

from typing import Callable, Dict, Sequence

import numpy as np

from app.errors import InvalidArgumentError
from app.models.geometry import Dictionary
from app.models.network import Network
from app.models.scene import Dataset
from app.schemas.config import EvalConfig
from app.schemas.solvers import AdmmConfig, IstaConfig
from app.services.classic_solvers import admm_run, ista_run, max_singular_value
from app.services.trainer import EVAL_CHUNK
from app.services.unfolded_nets import forward

Estimator = Callable[[Dataset], np.ndarray]

BASELINES = ("oracle", "zero", "ista", "admm")


def _chunked(run: Callable[[np.ndarray], np.ndarray]) -> Estimator:
    def estimate(dataset: Dataset) -> np.ndarray:
        out = np.empty_like(dataset.x)
        for start in range(0, len(dataset), EVAL_CHUNK):
            chunk = slice(start, start + EVAL_CHUNK)
            out[chunk] = run(dataset.y[chunk])
        return out
    return estimate


def network_name(net: Network) -> str:
    return f"{net.arch.value}-{net.T}"


def network_estimator(net: Network, D: Dictionary) -> Estimator:
    return _chunked(lambda Y: forward(net, Y, D).output)


def baseline_estimators(names: Sequence[str], D: Dictionary, cfg: EvalConfig) -> Dict[str, Estimator]:
    """oracle and zero are harness self-tests; ista and admm are the iterative reference solvers."""
    estimators: Dict[str, Estimator] = {}
    for name in names:
        if name == "oracle":
            estimators["oracle"] = lambda dataset: dataset.x.copy()
        elif name == "zero":
            estimators["zero"] = lambda dataset: np.zeros_like(dataset.x)
        elif name == "ista":
            ista = IstaConfig(mu=1.0 / max_singular_value(D) ** 2, tau=cfg.baseline_tau,
                              iterations=cfg.ista_iterations)
            estimators[f"ISTA-{ista.iterations}"] = _chunked(
                lambda Y, ista=ista: ista_run(D, Y, ista, trace=False))
        elif name == "admm":
            admm = AdmmConfig(rho=cfg.admm_rho, tau=cfg.baseline_tau, iterations=cfg.admm_iterations,
                              threshold_convention=cfg.threshold_convention)
            estimators[f"ADMM-{admm.iterations}"] = _chunked(
                lambda Y, admm=admm: admm_run(D, Y, admm, trace=False)[1])
        else:
            raise InvalidArgumentError(f"unknown baseline '{name}', expected one of {list(BASELINES)}")
    return estimators
