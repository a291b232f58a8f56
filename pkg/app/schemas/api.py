from typing import List, Optional

from pydantic import BaseModel, Field

from app.models.network import Arch


class InferRequest(BaseModel):
    measurement: List[List[float]] = Field(..., min_length=1, description="Snapshot y as [re, im] pairs")
    delta1: int = Field(default=2, ge=0, description="Peak search radius in bins")
    delta2: float = Field(default=0.4, gt=0, le=1, description="Minimum peak-to-target magnitude ratio")


class Peak(BaseModel):
    bin: int
    freq: float
    angle_deg: float
    magnitude: float


class InferResponse(BaseModel):
    arch: Arch
    depth: int
    magnitudes: List[float]
    peaks: List[Peak]


class SolveRequest(BaseModel):
    measurement: List[List[float]] = Field(..., min_length=1)
    method: str = Field(default="admm", pattern="^(ista|admm)$")
    tau: float = Field(..., gt=0)
    iterations: int = Field(default=50, gt=0, le=10_000)
    rho: float = Field(default=1.0, gt=0)


class SolveResponse(BaseModel):
    method: str
    iterations: int
    objective: float
    magnitudes: List[float]
    peaks: List[Peak]


class ParamCountResponse(BaseModel):
    arch: Arch
    depth: int
    M: int
    N: int
    parameters: int


class EngineInfo(BaseModel):
    arch: Arch
    depth: int
    M: int
    N: int
    gamma: float
    positions: List[int]
    checkpoint: Optional[str] = None
