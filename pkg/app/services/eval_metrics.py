"""Peak picking, detection rate, angular RMSE and NMSE over SNR sweeps."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from app.errors import InvalidArgumentError
from app.models.geometry import FrequencyGrid
from app.models.scene import Dataset
from app.services.array_geometry import freq_to_angle
from app.services.grad_engine import nmse_per_sample

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Estimator = Callable[[Dataset], np.ndarray]
NMSE_FLOOR_DB = -100.0


@dataclass(frozen=True)
class PeakSpectrum:
    indices: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class TargetMatch:
    q: int
    candidates: np.ndarray
    accepted: np.ndarray
    matched: Optional[int]

    @property
    def detected(self) -> bool:
        return self.matched is not None


@dataclass(frozen=True)
class MatchResult:
    targets: List[TargetMatch]

    @property
    def n_detected(self) -> int:
        return sum(1 for target in self.targets if target.detected)


@dataclass
class SnrMetrics:
    snr_db: float
    method: str
    detection_rate: float
    rmse_deg: Optional[float]
    nmse_db: float
    n_vectors: int
    n_rmse_vectors: int = 0


@dataclass
class MetricsReport:
    method: str
    rows: List[SnrMetrics] = field(default_factory=list)


def circular_bin_distance(a, b, N: int):
    d = np.abs(np.asarray(a) - np.asarray(b)) % N
    return np.minimum(d, N - d)


def find_peaks(x_hat: np.ndarray) -> PeakSpectrum:
    """Circular local maxima of |x_hat|; a flat top counts once, at its leftmost bin.

    Runs of equal magnitude are compared as a whole, so a shoulder (a plateau with a
    higher run on one side) is not a peak even though each of its bins is >= both
    neighbours.
    """
    mag = np.abs(np.asarray(x_hat))
    N = mag.size
    empty = PeakSpectrum(indices=np.zeros(0, dtype=np.int64), values=np.zeros(0))
    changes = np.flatnonzero(mag != np.roll(mag, 1))
    if N < 2 or changes.size == 0:
        return empty
    # rotate so the sequence starts on a run boundary, then compare whole runs
    shift = int(changes[0])
    rotated = np.roll(mag, -shift)
    starts = np.flatnonzero(np.concatenate(([True], rotated[1:] != rotated[:-1])))
    levels = rotated[starts]
    is_peak = (levels > np.roll(levels, 1)) & (levels > np.roll(levels, -1)) & (levels > 0)
    indices = np.sort((starts[is_peak] + shift) % N)
    return PeakSpectrum(indices=indices, values=mag[indices])


def match_targets(x: np.ndarray, pk: PeakSpectrum, delta1: int, delta2: float) -> MatchResult:
    """Per ground-truth bin q: peaks within delta1 bins, kept when their ratio to |x(q)| reaches delta2."""
    if not 0.0 < delta2 <= 1.0:
        raise InvalidArgumentError(f"delta2 must lie in (0, 1], got {delta2}")
    if delta1 < 0 or int(delta1) != delta1:
        raise InvalidArgumentError(f"delta1 must be a non-negative integer, got {delta1}")
    x = np.asarray(x)
    N = x.size
    targets = []
    for q in np.flatnonzero(x):
        distance = circular_bin_distance(pk.indices, q, N)
        near = distance <= delta1
        candidates = pk.indices[near]
        accepted_mask = near & (pk.values / np.abs(x[q]) >= delta2)
        accepted = pk.indices[accepted_mask]
        matched = None
        if accepted.size:
            # accepted is sorted, so argmin breaks ties toward the lower index
            matched = int(accepted[np.argmin(distance[accepted_mask])])
        targets.append(TargetMatch(q=int(q), candidates=candidates, accepted=accepted, matched=matched))
    return MatchResult(targets=targets)


def detection_rate(m: MatchResult, K: int) -> float:
    if K < 1:
        raise InvalidArgumentError("detection rate needs at least one target")
    return m.n_detected / K


def squared_angular_error(m: MatchResult, grid: FrequencyGrid, gamma: float) -> Optional[float]:
    """Mean squared angle offset over the detected targets of one vector, None if none was detected."""
    detected = [target for target in m.targets if target.detected]
    if not detected:
        return None
    truth = freq_to_angle(grid.freqs[[t.q for t in detected]], gamma)
    found = freq_to_angle(grid.freqs[[t.matched for t in detected]], gamma)
    return float(np.mean((np.asarray(truth) - np.asarray(found)) ** 2))


def angular_rmse(matches: Sequence[MatchResult], grid: FrequencyGrid, gamma: float) -> Optional[float]:
    """Root of the per-vector mean squared error averaged over vectors with a detection; None when absent."""
    errors = [e for e in (squared_angular_error(m, grid, gamma) for m in matches) if e is not None]
    if not errors:
        return None
    return float(np.sqrt(np.mean(errors)))


def nmse_db(x_hat: np.ndarray, x: np.ndarray, floor_db: float = NMSE_FLOOR_DB) -> float:
    value = float(np.mean(nmse_per_sample(x_hat, x)))
    if value <= 0.0:
        return floor_db
    return max(floor_db, 10.0 * float(np.log10(value)))


def evaluate_sweep(method: str, estimator: Estimator, test_set: Dataset, grid: FrequencyGrid, gamma: float,
                   delta1: int = 2, delta2: float = 0.4) -> MetricsReport:
    """Group the test set by SNR and score one estimator at every level."""
    estimates = np.asarray(estimator(test_set))
    if estimates.shape != test_set.x.shape:
        raise InvalidArgumentError(f"{method} returned {estimates.shape}, expected {test_set.x.shape}")
    report = MetricsReport(method=method)
    for level in test_set.snr_levels():
        rows = np.flatnonzero(test_set.snr_db == level)
        matches, rates = [], []
        for i in rows:
            m = match_targets(test_set.x[i], find_peaks(estimates[i]), delta1, delta2)
            matches.append(m)
            rates.append(detection_rate(m, len(m.targets)))
        errors = [e for e in (squared_angular_error(m, grid, gamma) for m in matches) if e is not None]
        report.rows.append(SnrMetrics(
            snr_db=float(level),
            method=method,
            detection_rate=float(np.mean(rates)),
            rmse_deg=float(np.sqrt(np.mean(errors))) if errors else None,
            nmse_db=nmse_db(estimates[rows], test_set.x[rows]),
            n_vectors=int(rows.size),
            n_rmse_vectors=len(errors),
        ))
    logger.info("%s: mean detection rate %.3f over %d SNR levels", method,
                float(np.mean([row.detection_rate for row in report.rows])), len(report.rows))
    return report


def write_results_csv(reports: Sequence[MetricsReport], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = sorted((row for report in reports for row in report.rows), key=lambda r: r.snr_db)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["snr_db", "method", "detection_rate", "rmse_deg", "nmse_db", "n_vectors"])
        for row in rows:
            writer.writerow([
                f"{row.snr_db:g}", row.method, f"{row.detection_rate:.6f}",
                "" if row.rmse_deg is None else f"{row.rmse_deg:.6f}",
                f"{row.nmse_db:.6f}", row.n_vectors,
            ])
    return path


def write_spectra_csv(grid: FrequencyGrid, gamma: float, truth: np.ndarray,
                      spectra: Dict[str, np.ndarray], path: PathLike) -> Path:
    """One row per bin: bin, freq, angle_deg, |truth| and |x_hat| for every method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    angles = freq_to_angle(grid.freqs, gamma)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["bin", "freq", "angle_deg", "truth", *spectra])
        for n in range(grid.N):
            writer.writerow([n, f"{grid.freqs[n]:.8f}", f"{angles[n]:.6f}", f"{abs(truth[n]):.8f}",
                             *(f"{abs(values[n]):.8f}" for values in spectra.values())])
    return path
