from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field

from app.models.network import Arch

CHECKPOINT_FORMAT_VERSION = 1


class TrainConfig(BaseModel):
    epochs: int = Field(default=30, gt=0)
    batch_size: int = Field(default=2048, gt=0)
    learning_rate: float = Field(default=1e-4, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    seed: int = Field(default=0, ge=0)
    checkpoint_every: int = Field(default=0, ge=0, description="Epochs between checkpoints, 0 = final only")
    grad_clip: Optional[float] = Field(default=None, gt=0, description="Global gradient-norm clip, off by default")
    stop_gradient_eta: bool = Field(default=False, description="Do not differentiate through the PSD lift")
    max_steps: Optional[int] = Field(default=None, gt=0, description="Stop after this many optimizer steps")


class ComplexArrayPayload(BaseModel):
    shape: List[int]
    data: List[List[float]] = Field(..., description="[re, im] pairs in C order")


class RealArrayPayload(BaseModel):
    shape: List[int]
    data: List[float]


class LayoutPayload(BaseModel):
    positions: List[int]
    gamma: float


class OptimizerPayload(BaseModel):
    step: int = Field(..., ge=0)
    epoch: int = Field(default=0, ge=0)
    m: List[Dict[str, RealArrayPayload]]
    v: List[Dict[str, RealArrayPayload]]


class EpochRecordPayload(BaseModel):
    epoch: int
    train_nmse_db: float
    val_nmse_db: float
    wall_seconds: float


class CheckpointDocument(BaseModel):
    format_version: int
    arch: Arch
    T: int = Field(..., ge=0)
    M: int = Field(..., gt=0)
    N: int = Field(..., gt=0)
    layers: List[Dict[str, Union[ComplexArrayPayload, float]]]
    layout: Optional[LayoutPayload] = None
    optimizer: Optional[OptimizerPayload] = None
    rng_state: Optional[Dict[str, Any]] = None
    history: List[EpochRecordPayload] = Field(default_factory=list)
