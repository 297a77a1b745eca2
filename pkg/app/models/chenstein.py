from typing import Annotated, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator, model_validator


class IIDBernoulli(BaseModel):
    kind: Literal["iid"] = "iid"
    eps: float = Field(..., ge=0.0, le=1.0)


class TwoStateMarkov(BaseModel):
    """transition[a][b] = P(X_{n+1} = b | X_n = a); started from `initial`, stationary when omitted."""

    kind: Literal["markov"] = "markov"
    transition: List[List[float]]
    initial: Optional[List[float]] = None

    @field_validator("transition")
    @classmethod
    def _stochastic(cls, v: List[List[float]]) -> List[List[float]]:
        if len(v) != 2 or any(len(row) != 2 for row in v):
            raise ValueError("transition must be 2x2")
        for row in v:
            if any(p < 0 for p in row) or abs(sum(row) - 1.0) > 1e-12:
                raise ValueError("transition rows must be probability vectors")
        return v

    @model_validator(mode="after")
    def _irreducible(self):
        if self.transition[0][1] + self.transition[1][0] <= 0:
            raise ValueError("chain without switching has no unique stationary law")
        if self.initial is not None and (len(self.initial) != 2 or abs(sum(self.initial) - 1.0) > 1e-12):
            raise ValueError("initial must be a probability vector of length 2")
        return self


class EmpiricalSamples(BaseModel):
    kind: Literal["empirical"] = "empirical"
    trajectories: List[List[int]] = Field(..., min_length=1)

    @field_validator("trajectories")
    @classmethod
    def _rectangular(cls, v: List[List[int]]) -> List[List[int]]:
        width = len(v[0])
        if any(len(row) != width for row in v):
            raise ValueError("trajectories must share one length")
        return v


BinaryProcessModel = Annotated[Union[IIDBernoulli, TwoStateMarkov, EmpiricalSamples], Field(discriminator="kind")]


class Estimate(BaseModel):
    value: float
    se: float = 0.0


class R1Result(BaseModel):
    value: float = Field(..., ge=0.0)
    j: Optional[int] = None
    q: Optional[int] = None


class ChenSteinInputs(BaseModel):
    eps: float
    N: int
    t_param: float
    p_gap: int
    R1: float = Field(..., ge=0.0)
    R2: float = Field(..., ge=0.0)


class ChenSteinReport(ChenSteinInputs):
    bound_per_k: float
    binomial_poisson_term: float
    R1_argmax: Optional[List[int]] = None

    def bound_total(self, E_size: int) -> float:
        return E_size * self.bound_per_k + self.binomial_poisson_term


class BinomialPoissonGap(BaseModel):
    """exact_tv is the full sum of absolute differences, the quantity bounded by 2t^2/N."""

    N: int
    t_param: float
    exact_tv: float
    bound: float


class DeviationReport(BaseModel):
    max_singleton: float
    max_interval: float
    worst_singleton_bound: float
    worst_interval_bound: float
    singleton_violations: int
    interval_violations: int
