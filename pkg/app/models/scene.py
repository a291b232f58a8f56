
from dataclasses import dataclass
from typing import Optional

import numpy as np

MAGIC = b"THDN"
FORMAT_VERSION = 1
FLAG_FIXED_SNR = 1 << 0
FLAG_NOISE_PER_COMPONENT = 1 << 1

HEADER_DTYPE = np.dtype([
    ("magic", "S4"),
    ("version", "<u4"),
    ("M", "<u4"),
    ("N", "<u4"),
    ("count", "<u8"),
    ("flags", "<u4"),
])


def record_dtype(M: int, N: int) -> np.dtype:
    """Little-endian per-sample record: snr_db, K, y as (re, im) pairs, x as (re, im) pairs."""
    return np.dtype([
        ("snr_db", "<f8"),
        ("K", "<u4"),
        ("y", "<f8", (M, 2)),
        ("x", "<f8", (N, 2)),
    ])


@dataclass(frozen=True)
class Scene:
    freqs: np.ndarray
    amps: np.ndarray

    @property
    def K(self) -> int:
        return int(self.freqs.size)


@dataclass(frozen=True)
class Sample:
    y: np.ndarray
    x: np.ndarray
    snr_db: float
    scene: Scene
    sigma2: Optional[float] = None


@dataclass(frozen=True)
class DatasetHeader:
    M: int
    N: int
    count: int
    flags: int = 0
    version: int = FORMAT_VERSION

    @property
    def fixed_snr(self) -> bool:
        return bool(self.flags & FLAG_FIXED_SNR)

    @property
    def noise_per_component(self) -> bool:
        return bool(self.flags & FLAG_NOISE_PER_COMPONENT)


@dataclass
class Dataset:
    header: DatasetHeader
    snr_db: np.ndarray
    K: np.ndarray
    y: np.ndarray
    x: np.ndarray

    def __len__(self) -> int:
        return int(self.snr_db.size)

    @property
    def M(self) -> int:
        return self.header.M

    @property
    def N(self) -> int:
        return self.header.N

    def snr_levels(self) -> np.ndarray:
        return np.unique(self.snr_db)

    def subset(self, indices: np.ndarray) -> "Dataset":
        indices = np.asarray(indices)
        header = DatasetHeader(M=self.M, N=self.N, count=int(indices.size),
                               flags=self.header.flags, version=self.header.version)
        return Dataset(header=header, snr_db=self.snr_db[indices], K=self.K[indices],
                       y=self.y[indices], x=self.x[indices])
