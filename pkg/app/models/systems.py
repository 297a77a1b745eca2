from enum import Enum
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class SystemKind(str, Enum):
    DOUBLING = "doubling"
    CAT_MAP = "cat"
    INTERMITTENT = "intermittent"
    GAUSS = "gauss"


class Metric(str, Enum):
    INTERVAL = "interval"
    TORUS_MAX = "torus_max"
    TORUS_EUCLID = "torus_euclid"


class MeasureKind(str, Enum):
    LEBESGUE_1D = "lebesgue_1d"
    LEBESGUE_2D = "lebesgue_2d"
    GAUSS_1D = "gauss_1d"
    EMPIRICAL_BIRKHOFF = "empirical_birkhoff"


class ExactBits(BaseModel):
    """Dyadic point digits / 2**length of the circle; the doubling map drops the leading digit."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["exact_bits"] = "exact_bits"
    digits: int = Field(..., ge=0)
    length: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _digits_fit(self):
        if self.digits >> self.length:
            raise ValueError(f"digits need more than {self.length} bits")
        return self

    @property
    def value(self) -> float:
        # top 53 digits carry every bit a double can hold
        shift = max(self.length - 53, 0)
        return (self.digits >> shift) / float(1 << (self.length - shift))


class ExactRational2D(BaseModel):
    """Torus point (p/denominator, q/denominator)."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["exact_rational_2d"] = "exact_rational_2d"
    p: int
    q: int
    denominator: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _reduced(self):
        if not (0 <= self.p < self.denominator and 0 <= self.q < self.denominator):
            raise ValueError("entries must be reduced modulo the denominator")
        return self

    @property
    def value(self) -> tuple[float, float]:
        return self.p / self.denominator, self.q / self.denominator


class Float1D(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["float_1d"] = "float_1d"
    x: float

    @field_validator("x")
    @classmethod
    def _unit(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError("coordinate must lie in [0, 1)")
        return v

    @property
    def value(self) -> float:
        return self.x


class Float2D(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["float_2d"] = "float_2d"
    x: float
    y: float

    @field_validator("x", "y")
    @classmethod
    def _unit(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError("coordinates must lie in [0, 1)")
        return v

    @property
    def value(self) -> tuple[float, float]:
        return self.x, self.y


Point = Annotated[Union[ExactBits, ExactRational2D, Float1D, Float2D], Field(discriminator="kind")]


class SystemSpec(BaseModel):
    """A concrete map together with its metric, Lipschitz data and invariant measure."""

    model_config = ConfigDict(frozen=True)

    kind: SystemKind
    alpha_pm: Optional[float] = Field(default=None, gt=0.0, lt=1.0, description="Intermittency exponent of the LSV map")
    lipschitz_A: float = Field(..., ge=2.0, description="A = |DT| + |DT^-1| or its documented surrogate")
    measure: MeasureKind
    metric: Metric
    birkhoff_length: int = Field(default=10_000_000, ge=1000)

    @model_validator(mode="after")
    def _intermittent_needs_alpha(self):
        if self.kind == SystemKind.INTERMITTENT and self.alpha_pm is None:
            raise ValueError("intermittent systems need alpha_pm")
        if self.kind != SystemKind.INTERMITTENT and self.alpha_pm is not None:
            raise ValueError("alpha_pm only applies to the intermittent map")
        return self

    @property
    def dimension(self) -> int:
        return 2 if self.kind == SystemKind.CAT_MAP else 1

    @property
    def tail_exponent(self) -> Optional[float]:
        return 1.0 / self.alpha_pm if self.alpha_pm else None


class BallSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    center: Point
    radius_rho: float = Field(..., gt=0.0, lt=0.25)
    metric: Metric


class SystemConfig(BaseModel):
    """User-facing system parameters; resolved into a SystemSpec by make_system."""

    kind: SystemKind = SystemKind.DOUBLING
    alpha_pm: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    metric: Optional[Metric] = None
    lipschitz_A: Optional[float] = Field(default=None, ge=2.0)
    birkhoff_length: Optional[int] = Field(default=None, ge=1000)


class MeasureEstimate(BaseModel):
    value: float
    se: float = 0.0
    orbit_length: Optional[int] = None
