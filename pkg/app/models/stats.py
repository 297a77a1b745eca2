from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator


class EmpiricalPmf(BaseModel):
    """Histogram weights over k = 0..k_max; masses are counts / total."""

    counts: List[float]
    total: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _weights(self):
        if not self.counts:
            raise ValueError("histogram needs at least one bin")
        if any(c < 0 for c in self.counts):
            raise ValueError("histogram weights must be nonnegative")
        return self

    @property
    def k_max(self) -> int:
        return len(self.counts) - 1

    @property
    def masses(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.total


class DecayFit(BaseModel):
    kappa_hat: float
    intercept: float
    r_squared: float = Field(..., ge=0.0, le=1.0)
    points: List[Tuple[float, float]]
    dropped: int = 0


class TVDistance(BaseModel):
    l1: float
    tv: float


class DistanceCI(BaseModel):
    value: float
    low: float
    high: float
