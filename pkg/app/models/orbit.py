from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from app.models.systems import BallSpec


class HitSeries(BaseModel):
    """Visits X_n = 1_B(T^n start), n = 0..N-1, with the parameters that produced them."""

    bits: List[int]
    ball: BallSpec
    t_param: float = Field(..., gt=0.0)
    N: int = Field(..., ge=0)
    mu_ball: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.bits) != self.N:
            raise ValueError(f"expected {self.N} bits, got {len(self.bits)}")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0 or 1")
        return self


class VerdictStatus(str, Enum):
    INTERSECTS = "intersects"
    DISJOINT = "disjoint"
    UNKNOWN = "unknown"


class IntersectionTest(str, Enum):
    SUFFICIENT_CENTER = "sufficient_center"
    NECESSARY_LIPSCHITZ = "necessary_lipschitz"
    EXACT_INTERVAL = "exact_interval"
    EXACT_LINEAR = "exact_linear"


class ShortReturnVerdict(BaseModel):
    status: VerdictStatus
    witness_n: Optional[int] = Field(default=None, ge=1)
    test_used: IntersectionTest
    horizon_J: Optional[int] = None

    @model_validator(mode="after")
    def _witness(self):
        if self.status == VerdictStatus.INTERSECTS and self.witness_n is None:
            raise ValueError("an intersecting verdict needs a witness n")
        return self


class VMeasureEstimate(BaseModel):
    lower: float
    upper: float
    se: float
    se_lower: float = 0.0
    samples: int
    horizon_J: int
    n_intersects: int = 0
    n_unknown: int = 0
    level_counts: Dict[int, int] = Field(default_factory=dict, description="Intersects per first witness n")


class InflationRow(BaseModel):
    n: int
    p: int
    log_s_p: float
    s_p: float
    inflated_rho: float
    n_prime: int
    in_range: bool
