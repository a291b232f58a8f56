from typing import List

from pydantic import BaseModel, Field, model_validator


class DatasetSpec(BaseModel):
    """One dataset file. ``count`` vectors are drawn at every level in ``snr_db``."""

    count: int = Field(..., gt=0, description="Vectors per SNR level")
    snr_db: List[float] = Field(..., min_length=1)
    min_sep_scale: float = Field(default=1.0, gt=0, description="Minimum separation is 1 / (scale * M)")
    k_min: int = Field(default=1, ge=1)
    k_max: int = Field(default=8, ge=1)
    seed: int = Field(default=0, ge=0)
    stream: int = Field(default=0, ge=0, description="Keeps train/val/test draws apart under one seed")

    @model_validator(mode="after")
    def _check_k_range(self):
        if self.k_min > self.k_max:
            raise ValueError("k_min must not exceed k_max")
        return self

    def min_sep(self, M: int) -> float:
        return 1.0 / (self.min_sep_scale * M)

    @property
    def total(self) -> int:
        return self.count * len(self.snr_db)
