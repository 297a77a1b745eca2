from typing import Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

from app.models.orbit import InflationRow, VMeasureEstimate
from app.models.stats import DecayFit, DistanceCI
from app.models.systems import SystemConfig
from app.models.tower import AssumptionParams, KacCheck, TailFit


class ExperimentConfig(BaseModel):
    system: SystemConfig = Field(default_factory=SystemConfig)
    t_param: float = Field(default=1.0, gt=0.0)
    rho_grid: List[float] = Field(..., min_length=1)
    n_centers: int = Field(default=1000, ge=1)
    n_starts_per_center: int = Field(default=10, ge=1)
    a_frak: Optional[float] = Field(default=None, gt=0.0, description="Short-return horizon constant; (4 log A)^-1 when omitted")
    b_frak: float = Field(default=0.25, gt=0.0, lt=1.0 / 3.0)
    seed: int
    output_dir: str = "results"
    candidate_factor: int = Field(default=10, ge=1, description="Candidate centers drawn per requested center")
    v_samples: int = Field(default=1000, ge=100)
    bootstrap_resamples: Optional[int] = Field(default=None, ge=0)

    @field_validator("rho_grid")
    @classmethod
    def _decreasing(cls, v: List[float]) -> List[float]:
        if any(r <= 0 for r in v):
            raise ValueError("radii must be positive")
        if any(b >= a for a, b in zip(v, v[1:])):
            raise ValueError("rho_grid must be strictly decreasing")
        return v


class CenterRecord(BaseModel):
    index: int
    center: List[float]
    mu_ball: float
    N: int
    mean_visits: float
    sup_distance: float


class RhoRecord(BaseModel):
    rho: float
    mu_ball: float
    mu_ball_se: float = 0.0
    N: int
    horizon_J: int
    pmf: List[float]
    poisson: List[float]
    sup_distance: DistanceCI
    tv_distance: DistanceCI
    n_centers: int
    n_excluded: int
    n_unknown: int
    centers: List[CenterRecord] = Field(default_factory=list)


class RunMetadata(BaseModel):
    version: str
    numpy: str
    scipy: str
    lipschitz_A: float
    a_frak: float
    config: Dict


class ExperimentResult(BaseModel):
    records: List[RhoRecord] = Field(default_factory=list)
    v_estimates: Dict[str, VMeasureEstimate] = Field(default_factory=dict)
    decay_fit: Optional[DecayFit] = None
    assumptions: AssumptionParams = Field(default_factory=AssumptionParams)
    metadata: Optional[RunMetadata] = None


class ShortReturnScanRow(BaseModel):
    rho: float
    estimate: VMeasureEstimate
    inflation: List[InflationRow]


class ShortReturnScanResult(BaseModel):
    rows: List[ShortReturnScanRow]
    metadata: RunMetadata


class ChenSteinSuiteConfig(BaseModel):
    seed: int
    n_markov: int = Field(default=50, ge=0)
    N_max: int = Field(default=12, ge=3)
    p_values: List[int] = Field(default_factory=lambda: [2, 3, 4])
    iid_eps: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    iid_t: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    binomial_N: List[int] = Field(default_factory=lambda: [10, 100, 1000])
    initial: Optional[List[float]] = Field(default=None, description="Non-stationary start applied to every Markov instance")
    output_dir: str = "results"


class ChenSteinInstance(BaseModel):
    label: str
    model: Dict
    eps: float
    t_param: float
    N: int
    p_gap: int
    R1: float
    R2: float
    R1_argmax: Optional[List[int]] = None
    bound_per_k: float
    binomial_poisson_term: float
    exact_pmf: List[float]
    max_singleton_deviation: float
    max_interval_deviation: float
    singleton_bound: float
    singleton_ratio: float
    violations: int


class ChenSteinSuiteResult(BaseModel):
    instances: List[ChenSteinInstance]
    binomial_poisson: List[Dict]
    total_violations: int
    metadata: Dict


class TowerCheckConfig(BaseModel):
    seed: int
    lambda_values: List[float] = Field(default_factory=lambda: [5.0, 7.0, 9.0])
    max_R: int = Field(default=10_000, ge=3)
    n_beams_per_height: int = Field(default=4, ge=1, description="Beams per height; several keep the wobbled branches contracting")
    kac_steps: int = Field(default=1_000_000, ge=1000)
    distortion_samples: int = Field(default=200, ge=1)
    distortion_q: int = Field(default=8, ge=0)
    slope_wobble: float = Field(default=0.05, ge=0.0, lt=1.0)
    intermittent_alphas: List[float] = Field(default_factory=lambda: [0.2, 0.5])
    tail_samples: int = Field(default=100_000, ge=1000)
    output_dir: str = "results"


class TowerLambdaReport(BaseModel):
    lambda_tail: float
    theta: float
    omega_slope: float
    omega_table: List[List[float]]
    kac: KacCheck
    distortion_linear: float
    distortion_wobble: float
    distortion_wobble_bound: float
    tail_constant: float
    truncated_mass: float


class TowerCheckResult(BaseModel):
    towers: List[TowerLambdaReport]
    intermittent_tails: Dict[str, TailFit]
    metadata: Dict
