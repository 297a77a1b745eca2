import logging
import math
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.errors import ConfigError, ExactnessBudgetError, MeasureUnderflowError, RepresentationMismatchError
from app.core.rng import BIRKHOFF, stream_rng
from app.models.systems import (
    BallSpec,
    ExactBits,
    ExactRational2D,
    Float1D,
    Float2D,
    MeasureEstimate,
    MeasureKind,
    Metric,
    SystemConfig,
    SystemKind,
    SystemSpec,
)

logger = logging.getLogger(__name__)

Point = Union[ExactBits, ExactRational2D, Float1D, Float2D]

CAT_MATRIX = ((2, 1), (1, 1))
CAT_INVERSE = ((1, -1), (-1, 2))
GOLDEN_SQUARED = (3.0 + math.sqrt(5.0)) / 2.0


def default_lipschitz(kind: SystemKind, alpha_pm: Optional[float] = None) -> float:
    """A = sup|T'| + sup|1/T'| for each map (a surrogate where one of the norms is infinite)."""
    if kind == SystemKind.DOUBLING:
        return 2.0 + 0.5
    if kind == SystemKind.CAT_MAP:
        return 2.0 * GOLDEN_SQUARED
    if kind == SystemKind.INTERMITTENT:
        # T' runs from 1 at the neutral fixed point to 2 + alpha at 1/2
        return (2.0 + alpha_pm) + 1.0
    # Gauss: |T'| = x^-2 is unbounded, so the sup is taken over [GAUSS_CUTOFF, 1)
    return 1.0 / settings.GAUSS_CUTOFF**2 + 1.0


def make_system(config: SystemConfig) -> SystemSpec:
    kind = config.kind
    if kind == SystemKind.CAT_MAP:
        metric = config.metric or Metric.TORUS_MAX
        if metric == Metric.INTERVAL:
            raise ConfigError("the cat map lives on the torus; use torus_max or torus_euclid")
        measure = MeasureKind.LEBESGUE_2D
    elif kind == SystemKind.GAUSS:
        metric = config.metric or Metric.INTERVAL
        measure = MeasureKind.GAUSS_1D
    elif kind == SystemKind.INTERMITTENT:
        if config.alpha_pm is None:
            raise ConfigError("the intermittent map needs alpha_pm in (0, 1)")
        metric = config.metric or Metric.TORUS_MAX
        measure = MeasureKind.EMPIRICAL_BIRKHOFF
    else:
        metric = config.metric or Metric.TORUS_MAX
        measure = MeasureKind.LEBESGUE_1D
    lipschitz = config.lipschitz_A or default_lipschitz(kind, config.alpha_pm)
    return SystemSpec(
        kind=kind,
        alpha_pm=config.alpha_pm,
        lipschitz_A=lipschitz,
        measure=measure,
        metric=metric,
        birkhoff_length=config.birkhoff_length or settings.BIRKHOFF_LENGTH,
    )


def default_a_frak(system: SystemSpec) -> float:
    return 1.0 / (4.0 * math.log(system.lipschitz_A))


def short_return_horizon(rho: float, a_frak: float) -> int:
    """J = floor(a |log rho|)."""
    return int(math.floor(a_frak * abs(math.log(rho))))


# ---------------------------------------------------------------------------
# Single-point dynamics
# ---------------------------------------------------------------------------

def _intermittent(x: float, alpha: float) -> float:
    if x <= 0.5:
        y = x * (1.0 + (2.0 * x) ** alpha)
    else:
        y = 2.0 * x - 1.0
    return y - 1.0 if y >= 1.0 else y


def _gauss(x: float) -> float:
    if x == 0.0:
        return 0.0
    y = 1.0 / x
    return y - math.floor(y)


def _mat_mul_mod(a, b, mod: Optional[int]):
    c = (
        (a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]),
        (a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]),
    )
    if mod is None:
        return c
    return tuple(tuple(v % mod for v in row) for row in c)


def cat_power(n: int, mod: Optional[int] = None, backward: bool = False):
    """M^n (or M^-n) by repeated squaring, optionally reduced modulo `mod`."""
    if n < 0:
        raise ConfigError(f"matrix power needs n >= 0, got {n}")
    base = CAT_INVERSE if backward else CAT_MATRIX
    if mod is not None:
        base = tuple(tuple(v % mod for v in row) for row in base)
    result = ((1, 0), (0, 1))
    while n:
        if n & 1:
            result = _mat_mul_mod(result, base, mod)
        base = _mat_mul_mod(base, base, mod)
        n >>= 1
    return result


def _mismatch(system: SystemSpec, x) -> RepresentationMismatchError:
    return RepresentationMismatchError(f"{type(x).__name__} point cannot be used with the {system.kind.value} map")


def apply(system: SystemSpec, x: Point) -> Point:
    return apply_n(system, x, 1)


def apply_n(system: SystemSpec, x: Point, n: int) -> Point:
    if n < 0:
        raise ConfigError(f"n must be >= 0, got {n}")
    if system.kind == SystemKind.DOUBLING:
        if isinstance(x, ExactBits):
            if n >= x.length:
                raise ExactnessBudgetError(n, x.length - 1)
            keep = x.length - n
            return ExactBits(digits=x.digits & ((1 << keep) - 1), length=keep)
        if isinstance(x, Float1D):
            v = x.x
            for _ in range(n):
                v = (2.0 * v) % 1.0
            return Float1D(x=v)
        raise _mismatch(system, x)
    if system.kind == SystemKind.CAT_MAP:
        if isinstance(x, ExactRational2D):
            m = cat_power(n, x.denominator)
            d = x.denominator
            return ExactRational2D(
                p=(m[0][0] * x.p + m[0][1] * x.q) % d,
                q=(m[1][0] * x.p + m[1][1] * x.q) % d,
                denominator=d,
            )
        if isinstance(x, Float2D):
            u, v = x.x, x.y
            for _ in range(n):
                u, v = (2.0 * u + v) % 1.0, (u + v) % 1.0
            return Float2D(x=u, y=v)
        raise _mismatch(system, x)
    if not isinstance(x, Float1D):
        raise _mismatch(system, x)
    v = x.x
    if system.kind == SystemKind.INTERMITTENT:
        for _ in range(n):
            v = _intermittent(v, system.alpha_pm)
    else:
        for _ in range(n):
            v = _gauss(v)
    return Float1D(x=v)


# ---------------------------------------------------------------------------
# Vectorized float dynamics (ensembles, witnesses, Birkhoff sums)
# ---------------------------------------------------------------------------

def step_array(system: SystemSpec, x: np.ndarray) -> np.ndarray:
    """One float step applied to an ensemble; 2D states have shape (..., 2)."""
    if system.kind == SystemKind.DOUBLING:
        return np.mod(2.0 * x, 1.0)
    if system.kind == SystemKind.CAT_MAP:
        u, v = x[..., 0], x[..., 1]
        return np.stack([np.mod(2.0 * u + v, 1.0), np.mod(u + v, 1.0)], axis=-1)
    if system.kind == SystemKind.INTERMITTENT:
        a = system.alpha_pm
        y = np.where(x <= 0.5, x * (1.0 + np.power(2.0 * x, a)), 2.0 * x - 1.0)
        return np.where(y >= 1.0, y - 1.0, y)
    with np.errstate(divide="ignore"):
        inv = np.where(x > 0.0, 1.0 / np.where(x > 0.0, x, 1.0), 0.0)
    return inv - np.floor(inv)


def iterate_array(system: SystemSpec, x: np.ndarray, n: int) -> np.ndarray:
    for _ in range(n):
        x = step_array(system, x)
    return x


def metric_distance(metric: Metric, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance on [0,1) (interval or circle) or on the 2-torus, broadcasting over ensembles."""
    diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if metric == Metric.INTERVAL:
        return diff
    diff = np.minimum(diff, 1.0 - diff)
    if diff.ndim == 0 or diff.shape[-1] != 2:
        return diff
    if metric == Metric.TORUS_MAX:
        return diff.max(axis=-1)
    return np.sqrt((diff**2).sum(axis=-1))


def point_value(x: Point) -> np.ndarray:
    return np.asarray(x.value, dtype=float)


def distance(system: SystemSpec, x: Point, y: Point) -> float:
    if type(x) is not type(y):
        raise RepresentationMismatchError(f"cannot compare {type(x).__name__} with {type(y).__name__}")
    if isinstance(x, ExactBits):
        length = max(x.length, y.length)
        a = x.digits << (length - x.length)
        b = y.digits << (length - y.length)
        diff = abs(a - b)
        if system.metric != Metric.INTERVAL:
            diff = min(diff, (1 << length) - diff)
        return diff / (1 << length)
    if isinstance(x, ExactRational2D):
        if x.denominator != y.denominator:
            return float(metric_distance(system.metric, point_value(x), point_value(y)))
        d = x.denominator
        dp = abs(x.p - y.p)
        dq = abs(x.q - y.q)
        dp, dq = min(dp, d - dp), min(dq, d - dq)
        if system.metric == Metric.TORUS_EUCLID:
            return math.hypot(dp, dq) / d
        return max(dp, dq) / d
    return float(metric_distance(system.metric, point_value(x), point_value(y)))


# ---------------------------------------------------------------------------
# Invariant measures
# ---------------------------------------------------------------------------

def _interval_clip(center: float, rho: float) -> Tuple[float, float]:
    return max(center - rho, 0.0), min(center + rho, 1.0)


def exact_ball_mass(system: SystemSpec, center: np.ndarray, rho: float) -> float:
    """mu(B_rho(center)) for measures with a closed form."""
    if system.measure == MeasureKind.LEBESGUE_1D:
        if system.metric == Metric.INTERVAL:
            lo, hi = _interval_clip(float(center), rho)
            return hi - lo
        return min(2.0 * rho, 1.0)
    if system.measure == MeasureKind.LEBESGUE_2D:
        if system.metric == Metric.TORUS_MAX:
            return min(2.0 * rho, 1.0) ** 2
        if rho <= 0.5:
            return math.pi * rho**2
        if rho >= math.sqrt(0.5):
            return 1.0
        raise ConfigError("euclidean torus balls with 1/2 < rho < 1/sqrt(2) overlap themselves")
    if system.measure == MeasureKind.GAUSS_1D:
        if system.metric == Metric.INTERVAL:
            lo, hi = _interval_clip(float(center), rho)
            return math.log2((1.0 + hi) / (1.0 + lo))
        c = float(center)
        if rho >= 0.5:
            return 1.0
        pieces = [(c - rho, c + rho)]
        if c - rho < 0.0:
            pieces = [(0.0, c + rho), (1.0 + c - rho, 1.0)]
        elif c + rho > 1.0:
            pieces = [(c - rho, 1.0), (0.0, c + rho - 1.0)]
        return sum(math.log2((1.0 + hi) / (1.0 + lo)) for lo, hi in pieces)
    raise ConfigError(f"{system.measure.value} has no closed form")


@lru_cache(maxsize=4)
def _birkhoff_chains(system: SystemSpec, seed: int, length: int, chains: int) -> np.ndarray:
    """Sorted orbit samples, one row per independent chain, burn-in discarded."""
    rng = stream_rng(seed, BIRKHOFF)
    steps = max(length // chains, 1)
    x = rng.random(chains)
    x = iterate_array(system, x, settings.BIRKHOFF_BURN_IN)
    orbit = np.empty((chains, steps))
    for n in range(steps):
        orbit[:, n] = x
        x = step_array(system, x)
    orbit.sort(axis=1)
    logger.info(f"Birkhoff orbit ready: {chains} chains x {steps} steps for {system.kind.value}")
    return orbit


def _count_in_ball(sorted_row: np.ndarray, centers: np.ndarray, rho: float, metric: Metric) -> np.ndarray:
    def count(lo, hi):
        return np.searchsorted(sorted_row, hi, side="left") - np.searchsorted(sorted_row, lo, side="right")

    lo, hi = centers - rho, centers + rho
    if metric == Metric.INTERVAL:
        return count(lo, hi)
    total = count(np.maximum(lo, 0.0), np.minimum(hi, 1.0))
    total += np.where(lo < 0.0, count(lo + 1.0, np.ones_like(lo)), 0)
    total += np.where(hi > 1.0, count(np.zeros_like(hi), hi - 1.0), 0)
    return total


def birkhoff_ball_masses(
    system: SystemSpec,
    centers: Sequence[float],
    rho: float,
    seed: int = 0,
    length: Optional[int] = None,
    chains: int = 1000,
) -> Tuple[np.ndarray, np.ndarray]:
    """Birkhoff averages of 1_B over one shared orbit ensemble, with standard errors.

    The orbit is split into independent chains; the standard error is the spread of the
    per-chain averages, so autocorrelation inside a chain is accounted for.
    """
    if system.dimension != 1:
        raise ConfigError("Birkhoff ball masses are implemented for interval maps")
    length = length or system.birkhoff_length
    chains = min(chains, max(length // 100, 2))
    orbit = _birkhoff_chains(system, seed, length, chains)
    centers = np.asarray(centers, dtype=float)
    per_chain = np.stack([_count_in_ball(row, centers, rho, system.metric) for row in orbit])
    fractions = per_chain / orbit.shape[1]
    values = fractions.mean(axis=0)
    ses = fractions.std(axis=0, ddof=1) / math.sqrt(orbit.shape[0])
    if np.any(values == 0.0):
        raise MeasureUnderflowError(rho, orbit.size)
    return values, ses


def ball_measures(system: SystemSpec, centers: np.ndarray, rho: float, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """mu(B_rho(c)) for every center (1D values or (M, 2) pairs) and the matching standard errors."""
    centers = np.asarray(centers, dtype=float)
    if system.measure == MeasureKind.EMPIRICAL_BIRKHOFF:
        return birkhoff_ball_masses(system, centers, rho, seed)
    count = centers.shape[0]
    values = np.array([exact_ball_mass(system, centers[i], rho) for i in range(count)])
    return values, np.zeros(count)


def ball_measure(system: SystemSpec, ball: BallSpec, seed: int = 0) -> MeasureEstimate:
    center = point_value(ball.center)
    if system.measure == MeasureKind.EMPIRICAL_BIRKHOFF:
        values, ses = birkhoff_ball_masses(system, [float(center)], ball.radius_rho, seed)
        return MeasureEstimate(value=float(values[0]), se=float(ses[0]), orbit_length=system.birkhoff_length)
    return MeasureEstimate(value=exact_ball_mass(system, center, ball.radius_rho))


def annulus_ratio(system: SystemSpec, ball: BallSpec, w: float, seed: int = 0) -> float:
    """mu(B_{rho+rho^w} minus B_{rho-rho^w}) / mu(B_rho) around the ball's center."""
    rho = ball.radius_rho
    width = rho**w
    center = point_value(ball.center)
    inner_rho = rho - width
    if system.measure == MeasureKind.EMPIRICAL_BIRKHOFF:
        radii = [r for r in (rho + width, inner_rho, rho) if r > 0]
        masses = [birkhoff_ball_masses(system, [float(center)], r, seed)[0][0] for r in radii]
        outer, mid = masses[0], masses[-1]
        inner = masses[1] if inner_rho > 0 else 0.0
    else:
        outer = exact_ball_mass(system, center, rho + width)
        inner = exact_ball_mass(system, center, inner_rho) if inner_rho > 0 else 0.0
        mid = exact_ball_mass(system, center, rho)
    return (outer - inner) / mid


# ---------------------------------------------------------------------------
# Sampling from the invariant measure
# ---------------------------------------------------------------------------

def _bits_from_rng(rng: np.random.Generator, count: int, length: int) -> np.ndarray:
    nbytes = (length + 7) // 8
    raw = np.frombuffer(rng.bytes(count * nbytes), dtype=np.uint8).reshape(count, nbytes)
    return np.unpackbits(raw, axis=1)[:, :length]


def draw_states(system: SystemSpec, rng: np.random.Generator, count: int, horizon: int = 0) -> np.ndarray:
    """Initial conditions distributed by mu, in the system's working representation.

    Doubling: uint8 digit rows of length horizon + GUARD_BITS. Cat map: int64 numerators over
    CAT_DENOMINATOR. Intermittent and Gauss: float64 coordinates.
    """
    if system.kind == SystemKind.DOUBLING:
        return _bits_from_rng(rng, count, horizon + settings.GUARD_BITS)
    if system.kind == SystemKind.CAT_MAP:
        return rng.integers(0, settings.CAT_DENOMINATOR, size=(count, 2), dtype=np.int64)
    u = rng.random(count)
    if system.kind == SystemKind.GAUSS:
        return np.exp2(u) - 1.0
    return iterate_array(system, u, settings.BURN_IN)


def draw_indexed_states(
    system: SystemSpec, seed: int, stream: Sequence[int], indices: Sequence[int], horizon: int = 0
) -> np.ndarray:
    """One state per index, each from its own stream, so chunking never changes a draw."""
    if system.kind == SystemKind.INTERMITTENT:
        u = np.array([stream_rng(seed, *stream, i).random() for i in indices])
        return iterate_array(system, u, settings.BURN_IN)
    rows = [draw_states(system, stream_rng(seed, *stream, i), 1, horizon) for i in indices]
    if not rows:
        return np.empty((0,))
    return np.concatenate(rows, axis=0)


def state_values(system: SystemSpec, states: np.ndarray) -> np.ndarray:
    """Float coordinates of a state batch: (M,) for interval maps, (M, 2) for the cat map."""
    if system.kind == SystemKind.DOUBLING:
        width = min(states.shape[1], 53)
        weights = np.exp2(-np.arange(1, width + 1))
        return states[:, :width] @ weights
    if system.kind == SystemKind.CAT_MAP:
        return states / float(settings.CAT_DENOMINATOR)
    return states


def state_to_point(system: SystemSpec, state) -> Point:
    if system.kind == SystemKind.DOUBLING:
        row = np.asarray(state, dtype=np.uint8)
        packed = np.packbits(row)
        digits = int.from_bytes(packed.tobytes(), "big") >> (8 * packed.size - row.size)
        return ExactBits(digits=digits, length=int(row.size))
    if system.kind == SystemKind.CAT_MAP:
        return ExactRational2D(p=int(state[0]), q=int(state[1]), denominator=settings.CAT_DENOMINATOR)
    return Float1D(x=float(state))


def point_to_bits(x: ExactBits) -> np.ndarray:
    nbytes = (x.length + 7) // 8
    raw = np.frombuffer((x.digits << (8 * nbytes - x.length)).to_bytes(nbytes, "big"), dtype=np.uint8)
    return np.unpackbits(raw)[: x.length]


def sample_invariant(system: SystemSpec, seed: int, horizon: Optional[int] = None) -> Point:
    horizon = settings.DEFAULT_HORIZON if horizon is None else horizon
    states = draw_states(system, stream_rng(seed), 1, horizon)
    return state_to_point(system, states[0])


def sample_invariant_many(
    system: SystemSpec, seed: int, count: int, stream: Sequence[int] = (), horizon: int = 0
) -> np.ndarray:
    """`count` draws from one stream, returned in the working representation."""
    return draw_states(system, stream_rng(seed, *stream), count, horizon)
