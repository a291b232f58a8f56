from enum import Enum

from pydantic import BaseModel, Field


class ThresholdConvention(str, Enum):
    PAPER = "paper"        # kappa2 = rho * tau
    STANDARD = "standard"  # kappa2 = tau / rho


class IstaConfig(BaseModel):
    mu: float = Field(..., gt=0, description="Step size, 1 / sigma_max(A)^2")
    tau: float = Field(..., gt=0, description="Sparsity weight")
    iterations: int = Field(default=100, ge=0)

    @property
    def kappa(self) -> float:
        return self.mu * self.tau


class AdmmConfig(BaseModel):
    rho: float = Field(default=1.0, gt=0)
    tau: float = Field(..., gt=0)
    iterations: int = Field(default=50, ge=0)
    threshold_convention: ThresholdConvention = ThresholdConvention.PAPER

    @property
    def kappa(self) -> float:
        if self.threshold_convention == ThresholdConvention.PAPER:
            return self.rho * self.tau
        return self.tau / self.rho
