from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field

from app import settings
from app.models.network import Arch
from app.schemas.data import DatasetSpec
from app.schemas.solvers import ThresholdConvention
from app.schemas.train import TrainConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ArrayConfig(_Strict):
    gamma: float = Field(default=0.5, ge=0.5, lt=1,
                         description="Element spacing in wavelengths; below 1/2 part of the grid has no angle")
    full_aperture: int = Field(default=50, ge=0, description="Aperture of the parent ULA in lattice steps")
    M: int = Field(default=20, gt=0)
    seed: int = Field(default=0, ge=0)


class GridConfig(_Strict):
    N: int = Field(default=256, gt=1)


class DataConfig(_Strict):
    train: DatasetSpec
    val: DatasetSpec
    test: DatasetSpec
    noise_per_component: bool = False


class ModelConfig(_Strict):
    arch: Arch = Arch.THADMMNET
    depth: int = Field(default=15, gt=0)


class EvalConfig(_Strict):
    delta1: int = Field(default=2, ge=0)
    delta2: float = Field(default=0.4, gt=0, le=1)
    baseline_tau: float = Field(..., gt=0, description="LASSO weight for the ISTA/ADMM baselines")
    ista_iterations: int = Field(default=100, gt=0)
    admm_iterations: int = Field(default=50, gt=0)
    admm_rho: float = Field(default=1.0, gt=0)
    threshold_convention: ThresholdConvention = ThresholdConvention.PAPER


class PathsConfig(_Strict):
    out_dir: str = Field(default_factory=lambda: settings.OUT_DIR)
    train_file: str = "train.thdn"
    val_file: str = "val.thdn"
    test_file: str = "test.thdn"


class RunConfig(_Strict):
    experiment: str = "thadmm"
    profile: str = "paper"
    array: ArrayConfig = Field(default_factory=ArrayConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    data: DataConfig
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig
    paths: PathsConfig = Field(default_factory=PathsConfig)


TEST_SNRS = [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0]

PROFILES: Dict[str, Dict[str, Any]] = {
    "paper": {
        "experiment": "thadmm-paper",
        "profile": "paper",
        "array": {"gamma": 0.5, "full_aperture": 50, "M": 20, "seed": 0},
        "grid": {"N": 256},
        "data": {
            "train": {"count": 100_000, "snr_db": [15.0], "min_sep_scale": 1.0, "seed": 0, "stream": 1},
            "val": {"count": 20_000, "snr_db": [15.0], "min_sep_scale": 1.0, "seed": 0, "stream": 2},
            "test": {"count": 1_000, "snr_db": TEST_SNRS, "min_sep_scale": 3.0, "seed": 0, "stream": 3},
        },
        "model": {"arch": "THADMMNet", "depth": 15},
        "train": {"epochs": 30, "batch_size": 2048, "learning_rate": 1e-4},
        "eval": {"delta1": 2, "delta2": 0.4, "baseline_tau": 1.0},
    },
    "desk": {
        "experiment": "thadmm-desk",
        "profile": "desk",
        "array": {"gamma": 0.5, "full_aperture": 50, "M": 20, "seed": 0},
        "grid": {"N": 128},
        "data": {
            "train": {"count": 20_000, "snr_db": [15.0], "min_sep_scale": 1.0, "seed": 0, "stream": 1},
            "val": {"count": 4_000, "snr_db": [15.0], "min_sep_scale": 1.0, "seed": 0, "stream": 2},
            "test": {"count": 800, "snr_db": TEST_SNRS, "min_sep_scale": 3.0, "seed": 0, "stream": 3},
        },
        "model": {"arch": "THADMMNet", "depth": 15},
        "train": {"epochs": 20, "batch_size": 2048, "learning_rate": 1e-4},
        "eval": {"delta1": 2, "delta2": 0.4, "baseline_tau": 1.0},
    },
}
