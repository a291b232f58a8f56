"""Synthetic single-snapshot scenes, measurements and dataset files."""

import logging
import os
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from app.errors import BinCollisionError, DatasetFormatError, FeasibilityError, ZeroSignalError
from app.models.geometry import ArrayLayout, FrequencyGrid
from app.models.scene import (
    FLAG_FIXED_SNR,
    FLAG_NOISE_PER_COMPONENT,
    FORMAT_VERSION,
    HEADER_DTYPE,
    MAGIC,
    Dataset,
    DatasetHeader,
    Sample,
    Scene,
    record_dtype,
)
from app.schemas.data import DatasetSpec
from app.services.array_geometry import circular_distance, steering_matrix

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
MAX_SCENE_ATTEMPTS = 10_000
CHUNK = 1024


def sample_scene(rng: np.random.Generator, M: int, min_sep: float,
                 k_range: Tuple[int, int] = (1, 8), max_attempts: int = MAX_SCENE_ATTEMPTS) -> Scene:
    """Draw K uniformly, then frequencies by rejection until every circular gap is >= min_sep."""
    k_min, k_max = k_range
    if min_sep * k_max >= 1.0:
        raise FeasibilityError(f"{k_max} targets cannot keep a separation of {min_sep:.4g} on the unit circle")
    K = int(rng.integers(k_min, k_max + 1))
    for _ in range(max_attempts):
        freqs = rng.uniform(-0.5, 0.5, size=K)
        if K < 2:
            break
        gaps = circular_distance(freqs[:, None], freqs[None, :])
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= min_sep:
            break
    else:
        raise FeasibilityError(f"no admissible frequencies for K={K} after {max_attempts} draws")
    amps = rng.uniform(0.0, 1.0, size=K) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=K))
    return Scene(freqs=freqs, amps=amps)


def synthesize_measurement(scene: Scene, layout: ArrayLayout) -> np.ndarray:
    """Noise-free superposition of off-grid steering vectors."""
    return steering_matrix(layout, scene.freqs) @ scene.amps.astype(np.complex128)


def add_noise_at_snr(y_c: np.ndarray, snr_db: float, rng: np.random.Generator,
                     noise_per_component: bool = False) -> Tuple[np.ndarray, float]:
    """Add circular Gaussian noise so that ||y_c||^2 / sigma2 hits snr_db.

    By default sigma2 is the expected total noise energy (each of the M entries
    gets sigma2 / M); ``noise_per_component`` gives every entry variance sigma2.
    """
    energy = float(np.vdot(y_c, y_c).real)
    if energy == 0.0:
        raise ZeroSignalError("cannot set an SNR on a zero measurement")
    sigma2 = energy / 10.0 ** (snr_db / 10.0)
    M = y_c.size
    variance = sigma2 if noise_per_component else sigma2 / M
    noise = np.sqrt(variance / 2.0) * (rng.standard_normal(M) + 1j * rng.standard_normal(M))
    return y_c + noise, sigma2


def grid_ground_truth(scene: Scene, grid: FrequencyGrid) -> np.ndarray:
    """Place every amplitude on its circularly nearest bin; ties go to the lower index."""
    x = np.zeros(grid.N, dtype=np.complex128)
    if scene.K == 0:
        return x
    distances = circular_distance(scene.freqs[:, None], grid.freqs[None, :])
    bins = np.argmin(distances, axis=1)
    if np.unique(bins).size != bins.size:
        raise BinCollisionError("two targets share a grid bin")
    x[bins] = scene.amps
    return x


def draw_sample(rng: np.random.Generator, layout: ArrayLayout, grid: FrequencyGrid, snr_db: float,
                min_sep: float, k_range: Tuple[int, int], noise_per_component: bool = False) -> Sample:
    for _ in range(MAX_SCENE_ATTEMPTS):
        scene = sample_scene(rng, layout.M, min_sep, k_range)
        try:
            x = grid_ground_truth(scene, grid)
        except BinCollisionError:
            continue
        y, sigma2 = add_noise_at_snr(synthesize_measurement(scene, layout), snr_db, rng, noise_per_component)
        return Sample(y=y, x=x, snr_db=float(snr_db), scene=scene, sigma2=sigma2)
    raise FeasibilityError("every redrawn scene collided on the grid")


def _pairs(v: np.ndarray) -> np.ndarray:
    return np.stack((v.real, v.imag), axis=-1)


def _complex(pairs: np.ndarray) -> np.ndarray:
    out = np.empty(pairs.shape[:-1], dtype=np.complex128)
    out.real = pairs[..., 0]
    out.imag = pairs[..., 1]
    return out


def _header_bytes(header: DatasetHeader) -> bytes:
    record = np.zeros((), dtype=HEADER_DTYPE)
    record["magic"] = MAGIC
    record["version"] = header.version
    record["M"] = header.M
    record["N"] = header.N
    record["count"] = header.count
    record["flags"] = header.flags
    return record.tobytes()


def generate_dataset(spec: DatasetSpec, layout: ArrayLayout, grid: FrequencyGrid, path: PathLike,
                     noise_per_component: bool = False) -> DatasetHeader:
    """Stream ``spec.total`` samples to ``path``; sample i uses the RNG stream (seed, stream, i)."""
    min_sep = spec.min_sep(layout.M)
    flags = (FLAG_FIXED_SNR if len(spec.snr_db) == 1 else 0)
    flags |= FLAG_NOISE_PER_COMPONENT if noise_per_component else 0
    header = DatasetHeader(M=layout.M, N=grid.N, count=spec.total, flags=flags)
    dtype = record_dtype(layout.M, grid.N)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    partial = path.with_name(path.name + ".part")
    with open(partial, "wb") as handle:
        handle.write(_header_bytes(header))
        for start in range(0, spec.total, CHUNK):
            stop = min(start + CHUNK, spec.total)
            records = np.zeros(stop - start, dtype=dtype)
            for offset, index in enumerate(range(start, stop)):
                rng = np.random.default_rng([spec.seed, spec.stream, index])
                snr = spec.snr_db[index // spec.count]
                sample = draw_sample(rng, layout, grid, snr, min_sep, (spec.k_min, spec.k_max), noise_per_component)
                records["snr_db"][offset] = sample.snr_db
                records["K"][offset] = sample.scene.K
                records["y"][offset] = _pairs(sample.y)
                records["x"][offset] = _pairs(sample.x)
            handle.write(records.tobytes())
    os.replace(partial, path)
    logger.info("wrote %s: %d samples, SNR %s dB, min_sep %.4g", path, spec.total, spec.snr_db, min_sep)
    return header


def write_dataset(samples: List[Sample], path: PathLike, M: int, N: int, flags: int = 0) -> DatasetHeader:
    header = DatasetHeader(M=M, N=N, count=len(samples), flags=flags)
    records = np.zeros(len(samples), dtype=record_dtype(M, N))
    for i, sample in enumerate(samples):
        records["snr_db"][i] = sample.snr_db
        records["K"][i] = sample.scene.K
        records["y"][i] = _pairs(sample.y)
        records["x"][i] = _pairs(sample.x)
    with open(path, "wb") as handle:
        handle.write(_header_bytes(header))
        handle.write(records.tobytes())
    return header


def read_dataset(path: PathLike) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER_DTYPE.itemsize:
        raise DatasetFormatError(f"{path}: file shorter than the dataset header")
    head = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    if bytes(head["magic"]) != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {bytes(head['magic'])!r}")
    if int(head["version"]) != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {int(head['version'])}")
    header = DatasetHeader(M=int(head["M"]), N=int(head["N"]), count=int(head["count"]),
                           flags=int(head["flags"]), version=int(head["version"]))
    dtype = record_dtype(header.M, header.N)
    expected = HEADER_DTYPE.itemsize + header.count * dtype.itemsize
    if len(raw) != expected:
        raise DatasetFormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    records = np.frombuffer(raw, dtype=dtype, count=header.count, offset=HEADER_DTYPE.itemsize)
    y = _complex(records["y"])
    x = _complex(records["x"])
    return Dataset(header=header, snr_db=records["snr_db"].astype(np.float64),
                   K=records["K"].astype(np.int64), y=y, x=x)


def validate_dataset(dataset: Dataset, min_sep: float) -> List[int]:
    """Indices violating the K-sparsity or the (gridded) separation rule."""
    bad = []
    N = dataset.N
    min_bins = min_sep * N - 1.0
    for i in range(len(dataset)):
        support = np.flatnonzero(dataset.x[i])
        if support.size != dataset.K[i]:
            bad.append(i)
            continue
        if support.size > 1:
            gaps = np.abs(support[:, None] - support[None, :])
            gaps = np.minimum(gaps, N - gaps)
            np.fill_diagonal(gaps, N)
            if gaps.min() < min_bins:
                bad.append(i)
    return bad
