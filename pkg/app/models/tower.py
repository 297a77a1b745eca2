import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TowerSpec(BaseModel):
    """Abstract Young tower with a full-branch piecewise-linear realization of the base."""

    model_config = ConfigDict(frozen=True)

    lambda_tail: float = Field(..., gt=4.0)
    C1_tail: float = Field(..., gt=0.0)
    max_R: int = Field(..., ge=1)
    base_masses: List[float]
    return_times: List[int]
    alpha_contract: float = Field(..., gt=0.0, lt=1.0)
    C0_dist: float = Field(default=1.0, gt=0.0)
    slope_wobble: float = Field(default=0.0, ge=0.0, lt=1.0, description="Amplitude of the per-branch slope perturbation")
    truncated_mass: float = Field(default=0.0, ge=0.0, description="Law mass removed by truncating at max_R")

    @model_validator(mode="after")
    def _beams(self):
        if len(self.base_masses) != len(self.return_times):
            raise ValueError("one mass per return time")
        if not self.base_masses:
            raise ValueError("tower needs at least one beam")
        if any(m <= 0 for m in self.base_masses):
            raise ValueError("beam masses must be positive")
        if any(r < 1 or r > self.max_R for r in self.return_times):
            raise ValueError("return times must lie in [1, max_R]")
        return self

    @property
    def n_beams(self) -> int:
        return len(self.base_masses)

    @property
    def log_slope_lipschitz(self) -> float:
        """Lipschitz constant of log(branch slope) in the image coordinate."""
        eps = self.slope_wobble
        return 2.0 * math.pi * eps / (1.0 - eps) ** 2


class TowerPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    base_index: int = Field(..., ge=0)
    level: int = Field(..., ge=0)
    fiber_coord: float = Field(..., ge=0.0, lt=1.0)


class CylinderIndex(BaseModel):
    model_config = ConfigDict(frozen=True)

    indices: List[int] = Field(..., min_length=1)

    @property
    def length_l(self) -> int:
        return len(self.indices) - 1


class AssumptionParams(BaseModel):
    """Existence hypotheses on dimensions and regularity; recorded, never computed."""

    varsigma: Optional[float] = None
    varsigma_hat: Optional[float] = None
    xi: Optional[float] = None
    regularity_a: Optional[float] = None
    g_description: Optional[str] = None
    notes: str = (
        "xi is defined as varsigma*(lambda-1) - varsigma_hat; an alternative form varsigma*(lambda-2) "
        "also appears in the literature; neither is computed here"
    )


class KacCheck(BaseModel):
    steps: int
    empirical: float
    expected: float
    se: float

    @property
    def z_score(self) -> float:
        return abs(self.empirical - self.expected) / self.se if self.se > 0 else 0.0


class TailFit(BaseModel):
    exponent: float
    offset: float
    log_constant: float
    k_range: List[int]
    samples: int
    censored: int
