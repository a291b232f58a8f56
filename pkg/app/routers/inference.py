from typing import List

import numpy as np
from fastapi import APIRouter, Depends, Query

from app.engine import Engine, get_engine
from app.errors import ShapeMismatchError
from app.models.geometry import Dictionary
from app.models.network import Arch
from app.schemas.api import (
    EngineInfo,
    InferRequest,
    InferResponse,
    ParamCountResponse,
    Peak,
    SolveRequest,
    SolveResponse,
)
from app.schemas.solvers import AdmmConfig, IstaConfig
from app.services.array_geometry import freq_to_angle
from app.services.classic_solvers import admm_run, ista_run, lasso_objective, max_singular_value
from app.services.eval_metrics import circular_bin_distance, find_peaks
from app.services.unfolded_nets import forward, param_count

router = APIRouter(prefix="", tags=["inference"])


def _measurement(pairs: List[List[float]], D: Dictionary) -> np.ndarray:
    values = np.asarray(pairs, dtype=np.float64)
    if values.ndim != 2 or values.shape[1] != 2:
        raise ShapeMismatchError("measurement must be a list of [re, im] pairs")
    if values.shape[0] != D.M:
        raise ShapeMismatchError(f"measurement has {values.shape[0]} entries, the served array has {D.M}",
                                 expected=D.M, got=values.shape[0])
    return values[:, 0] + 1j * values[:, 1]


def _peaks(x_hat: np.ndarray, D: Dictionary) -> List[Peak]:
    pk = find_peaks(x_hat)
    return [
        Peak(bin=int(n), freq=float(D.grid.freqs[n]), angle_deg=float(freq_to_angle(D.grid.freqs[n], D.layout.gamma)),
             magnitude=float(value))
        for n, value in zip(pk.indices, pk.values)
    ]


def _detect(peaks: List[Peak], delta1: int, delta2: float, N: int) -> List[Peak]:
    """Strongest first; a peak survives if it reaches delta2 of the maximum and no kept peak lies within delta1 bins."""
    kept: List[Peak] = []
    for peak in sorted(peaks, key=lambda p: -p.magnitude):
        if kept and peak.magnitude < delta2 * kept[0].magnitude:
            break
        if all(circular_bin_distance(peak.bin, other.bin, N) > delta1 for other in kept):
            kept.append(peak)
    return sorted(kept, key=lambda p: p.bin)


@router.get("/networks/param-count", response_model=ParamCountResponse)
def get_param_count(arch: Arch, depth: int = Query(..., gt=0), M: int = Query(20, gt=0),
                    N: int = Query(256, gt=1)):
    return ParamCountResponse(arch=arch, depth=depth, M=M, N=N, parameters=param_count(arch, depth, M, N))


@router.get("/engine", response_model=EngineInfo)
def describe_engine(engine: Engine = Depends(get_engine)):
    net, D = engine.network, engine.D
    return EngineInfo(arch=net.arch, depth=net.T, M=net.M, N=net.N, gamma=D.layout.gamma,
                      positions=D.layout.positions.tolist(), checkpoint=engine.checkpoint)


@router.post("/infer", response_model=InferResponse)
def infer(body: InferRequest, engine: Engine = Depends(get_engine)):
    y = _measurement(body.measurement, engine.D)
    x_hat = forward(engine.network, y, engine.D).x_hat
    peaks = _detect(_peaks(x_hat, engine.D), body.delta1, body.delta2, engine.D.N)
    return InferResponse(arch=engine.network.arch, depth=engine.network.T,
                         magnitudes=np.abs(x_hat).tolist(), peaks=peaks)


@router.post("/solve", response_model=SolveResponse)
def solve(body: SolveRequest, engine: Engine = Depends(get_engine)):
    D = engine.D
    y = _measurement(body.measurement, D)
    if body.method == "ista":
        cfg = IstaConfig(mu=1.0 / max_singular_value(D) ** 2, tau=body.tau, iterations=body.iterations)
        x_hat = ista_run(D, y, cfg, trace=False)
    else:
        cfg = AdmmConfig(rho=body.rho, tau=body.tau, iterations=body.iterations)
        x_hat = admm_run(D, y, cfg, trace=False)[1]
    return SolveResponse(method=body.method, iterations=body.iterations,
                         objective=lasso_objective(D, y, x_hat, body.tau),
                         magnitudes=np.abs(x_hat).tolist(), peaks=_peaks(x_hat, D))
