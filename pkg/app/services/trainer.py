"""NMSE training of unfolded networks with Adam, plus checkpoint I/O."""

import csv
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app import settings
from app.errors import (
    CheckpointFormatError,
    CheckpointMismatchError,
    InvalidArgumentError,
    NonFiniteError,
    ShapeMismatchError,
)
from app.models.geometry import ArrayLayout, Dictionary
from app.models.network import AdmmNetLayer, Arch, GradientSet, ListaLayer, Network
from app.models.scene import Dataset
from app.schemas.train import (
    CHECKPOINT_FORMAT_VERSION,
    CheckpointDocument,
    ComplexArrayPayload,
    EpochRecordPayload,
    LayoutPayload,
    OptimizerPayload,
    RealArrayPayload,
    TrainConfig,
)
from app.services.grad_engine import loss_and_gradients, nmse_per_sample
from app.services.unfolded_nets import assert_operators_positive_definite, forward

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DB_FLOOR = -100.0
EVAL_CHUNK = 4096


def nmse_loss(x_hat: np.ndarray, x: np.ndarray) -> float:
    """||x_hat - x||^2 / ||x||^2, averaged when given a batch of rows."""
    return float(np.mean(nmse_per_sample(x_hat, x)))


def to_db(value: float) -> float:
    if value <= 0.0:
        return DB_FLOOR
    return max(DB_FLOOR, 10.0 * float(np.log10(value)))


def real_view(array: np.ndarray) -> np.ndarray:
    """Flat float64 view sharing memory with ``array``: complex entries become (re, im) pairs."""
    if np.iscomplexobj(array):
        return array.view(np.float64).reshape(-1)
    return array.reshape(-1)


@dataclass
class EpochRecord:
    epoch: int
    train_nmse_db: float
    val_nmse_db: float
    wall_seconds: float


@dataclass
class TrainState:
    network: Network
    m: List[Dict[str, np.ndarray]]
    v: List[Dict[str, np.ndarray]]
    rng: np.random.Generator
    step: int = 0
    epoch: int = 0
    history: List[EpochRecord] = field(default_factory=list)

    @classmethod
    def fresh(cls, network: Network, seed: int = 0) -> "TrainState":
        moments = lambda: [{name: np.zeros_like(real_view(value)) for name, value in arrays.items()}
                           for arrays in network.parameter_arrays()]
        return cls(network=network, m=moments(), v=moments(), rng=np.random.default_rng(seed))


def adam_step(state: TrainState, grads: GradientSet, cfg: TrainConfig) -> TrainState:
    """Bias-corrected Adam over every raw real degree of freedom, in place."""
    params = state.network.parameter_arrays()
    if len(grads.layers) != len(params):
        raise ShapeMismatchError(f"{len(grads.layers)} gradient layers for {len(params)} parameter layers")
    for index, name, value in grads.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"non-finite gradient in layer {index} '{name}' at step {state.step}",
                                 layer=index, name=name, step=state.step)
    if cfg.grad_clip is not None:
        norm = grads.global_norm()
        if norm > cfg.grad_clip:
            grads = grads.scale(cfg.grad_clip / norm)

    state.step += 1
    correction1 = 1.0 - cfg.beta1 ** state.step
    correction2 = 1.0 - cfg.beta2 ** state.step
    for index, name, value in grads.items():
        param = real_view(params[index][name])
        g = real_view(np.ascontiguousarray(value))
        if g.shape != param.shape:
            raise ShapeMismatchError(f"gradient for layer {index} '{name}' has {g.size} entries, parameter {param.size}")
        m = state.m[index][name]
        v = state.v[index][name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        param -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.eps)
    return state


def mean_nmse(net: Network, D: Dictionary, dataset: Dataset) -> float:
    total = 0.0
    for start in range(0, len(dataset), EVAL_CHUNK):
        chunk = slice(start, start + EVAL_CHUNK)
        estimate = forward(net, dataset.y[chunk], D).output
        total += float(np.sum(nmse_per_sample(estimate, dataset.x[chunk])))
    return total / len(dataset)


def train(
    net: Network,
    D: Dictionary,
    train_set: Dataset,
    val_set: Dataset,
    cfg: TrainConfig,
    out_dir: Optional[PathLike] = None,
    state: Optional[TrainState] = None,
    on_step: Optional[Callable[[TrainState], None]] = None,
) -> Tuple[Network, List[EpochRecord]]:
    """Shuffle, forward, NMSE, backward and Adam for every batch; the last epoch is the reported model."""
    for name, dataset in (("training", train_set), ("validation", val_set)):
        if (dataset.M, dataset.N) != (net.M, net.N):
            raise ShapeMismatchError(
                f"{name} set is ({dataset.M}, {dataset.N}), network expects ({net.M}, {net.N})")
    if cfg.batch_size > len(train_set):
        raise InvalidArgumentError(f"batch size {cfg.batch_size} exceeds the {len(train_set)} training samples")
    if state is None:
        state = TrainState.fresh(net, cfg.seed)
    elif state.network is not net:
        raise InvalidArgumentError("resumed state belongs to a different network")
    debug = settings.debug_checks_enabled()

    while state.epoch < cfg.epochs:
        started = time.perf_counter()
        order = state.rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(net, D, train_set.y[batch], train_set.x[batch],
                                             stop_gradient_eta=cfg.stop_gradient_eta)
            if not np.isfinite(loss):
                raise NonFiniteError(f"non-finite training loss at step {state.step}", step=state.step)
            total += loss * batch.size
            seen += batch.size
            adam_step(state, grads, cfg)
            if debug:
                assert_operators_positive_definite(net)
            if on_step is not None:
                on_step(state)
            if cfg.max_steps is not None and state.step >= cfg.max_steps:
                break

        state.epoch += 1
        record = EpochRecord(
            epoch=state.epoch,
            train_nmse_db=to_db(total / seen),
            val_nmse_db=to_db(mean_nmse(net, D, val_set)),
            wall_seconds=time.perf_counter() - started,
        )
        state.history.append(record)
        logger.info("%s epoch %d: train %.3f dB, validation %.3f dB (%.1fs)", net.arch.value, record.epoch,
                    record.train_nmse_db, record.val_nmse_db, record.wall_seconds)
        if out_dir is not None and cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
            save_checkpoint(state, Path(out_dir) / f"{net.arch.value}-T{net.T}-epoch{state.epoch}.json")
        if cfg.max_steps is not None and state.step >= cfg.max_steps:
            break
    return net, state.history


def _encode_complex(array: np.ndarray) -> ComplexArrayPayload:
    pairs = np.stack((array.real, array.imag), axis=-1).reshape(-1, 2)
    return ComplexArrayPayload(shape=list(array.shape), data=pairs.tolist())


def _decode_complex(payload: ComplexArrayPayload) -> np.ndarray:
    pairs = np.asarray(payload.data, dtype=np.float64).reshape(tuple(payload.shape) + (2,))
    out = np.empty(tuple(payload.shape), dtype=np.complex128)
    out.real = pairs[..., 0]
    out.imag = pairs[..., 1]
    return out


def _expected_shapes(arch: Arch, M: int, N: int) -> Dict[str, Tuple[int, ...]]:
    if arch == Arch.LISTA:
        return {"W1": (N, N), "W2": (N, M), "beta_raw": ()}
    if arch == Arch.TLISTA:
        return {"W1": (N,), "W1_row": (N - 1,), "W2": (N, M), "beta_raw": ()}
    if arch == Arch.THLISTA:
        return {"W1": (N,), "W2": (N, M), "beta_raw": ()}
    if arch == Arch.ADMMNET:
        return {"W": (N, N), "rho_raw": (), "beta_raw": ()}
    return {"W": (N,), "rho_raw": (), "beta_raw": ()}


def checkpoint_document(state: TrainState, include_optimizer: bool = True) -> CheckpointDocument:
    net = state.network
    layers = []
    for arrays in net.parameter_arrays():
        layers.append({name: float(value) if value.ndim == 0 else _encode_complex(value)
                       for name, value in arrays.items()})
    document = CheckpointDocument(
        format_version=CHECKPOINT_FORMAT_VERSION, arch=net.arch, T=net.T, M=net.M, N=net.N, layers=layers,
        history=[EpochRecordPayload(**vars(record)) for record in state.history],
    )
    if net.layout is not None:
        document.layout = LayoutPayload(positions=net.layout.positions.tolist(), gamma=net.layout.gamma)
    if include_optimizer:
        encode = lambda moments: [{name: RealArrayPayload(shape=list(value.shape), data=value.tolist())
                                   for name, value in layer.items()} for layer in moments]
        document.optimizer = OptimizerPayload(step=state.step, epoch=state.epoch, m=encode(state.m), v=encode(state.v))
        document.rng_state = state.rng.bit_generator.state
    return document


def save_checkpoint(state: TrainState, path: PathLike, include_optimizer: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(checkpoint_document(state, include_optimizer).model_dump(mode="json"), indent=1)
    partial = path.with_name(path.name + ".part")
    partial.write_text(text)
    os.replace(partial, path)
    logger.info("checkpoint saved to %s", path)
    return path


def load_checkpoint(path: PathLike, expected_arch: Optional[Union[Arch, str]] = None) -> TrainState:
    """Rebuild a TrainState; nothing is returned unless the whole document validates."""
    try:
        raw = json.loads(Path(path).read_text())
        document = CheckpointDocument.model_validate(raw)
    except (json.JSONDecodeError, ValidationError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: not a valid checkpoint ({exc.__class__.__name__})") from exc
    if document.format_version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointMismatchError(f"{path}: checkpoint format {document.format_version} is not supported")
    if expected_arch is not None and Arch(expected_arch) != document.arch:
        raise CheckpointMismatchError(
            f"{path}: checkpoint holds a {document.arch.value}, expected {Arch(expected_arch).value}")
    if len(document.layers) != document.T:
        raise CheckpointFormatError(f"{path}: T={document.T} but {len(document.layers)} layers stored")

    shapes = _expected_shapes(document.arch, document.M, document.N)
    layers = []
    for index, stored in enumerate(document.layers):
        if list(stored) != list(shapes):
            raise CheckpointFormatError(f"{path}: layer {index} holds {list(stored)}, expected {list(shapes)}")
        arrays = {}
        for name, shape in shapes.items():
            payload = stored[name]
            if shape == ():
                if not isinstance(payload, float):
                    raise CheckpointFormatError(f"{path}: layer {index} '{name}' must be a scalar")
                arrays[name] = np.array(payload, dtype=np.float64)
            else:
                if not isinstance(payload, ComplexArrayPayload) or tuple(payload.shape) != shape \
                        or len(payload.data) != int(np.prod(shape)):
                    raise CheckpointFormatError(f"{path}: layer {index} '{name}' does not have shape {shape}")
                arrays[name] = _decode_complex(payload)
        layer_type = ListaLayer if document.arch.is_lista else AdmmNetLayer
        layers.append(layer_type(**arrays))

    layout = None
    if document.layout is not None:
        layout = ArrayLayout(positions=np.asarray(document.layout.positions), gamma=document.layout.gamma)
    net = Network(arch=document.arch, M=document.M, N=document.N, layers=layers, layout=layout)

    state = TrainState.fresh(net)
    if document.optimizer is not None:
        for target, stored in ((state.m, document.optimizer.m), (state.v, document.optimizer.v)):
            if len(stored) != len(target):
                raise CheckpointFormatError(f"{path}: optimizer buffers do not match the layers")
            for layer_target, layer_stored in zip(target, stored):
                for name, buffer in layer_target.items():
                    if name not in layer_stored or len(layer_stored[name].data) != buffer.size:
                        raise CheckpointFormatError(f"{path}: optimizer buffer '{name}' does not match")
                    buffer[:] = np.asarray(layer_stored[name].data, dtype=np.float64)
        state.step = document.optimizer.step
        state.epoch = document.optimizer.epoch
    if document.rng_state is not None:
        state.rng.bit_generator.state = document.rng_state
    state.history = [EpochRecord(**record.model_dump()) for record in document.history]
    return state


def write_loss_csv(history: List[EpochRecord], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_nmse_db", "val_nmse_db", "wall_seconds"])
        for record in history:
            writer.writerow([record.epoch, repr(record.train_nmse_db), repr(record.val_nmse_db),
                             f"{record.wall_seconds:.3f}"])
    return path
