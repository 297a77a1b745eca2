import logging
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.core.config import settings
from app.core.errors import ConfigError, ExactnessBudgetError, RepresentationMismatchError
from app.core.rng import SHORT_RETURN, stream_rng
from app.models.orbit import (
    HitSeries,
    InflationRow,
    IntersectionTest,
    ShortReturnVerdict,
    VerdictStatus,
    VMeasureEstimate,
)
from app.models.systems import (
    BallSpec,
    ExactBits,
    ExactRational2D,
    Float2D,
    Metric,
    SystemKind,
    SystemSpec,
)
from app.services import interval_images
from app.services.systems_service import (
    Point,
    apply_n,
    ball_measure,
    cat_power,
    default_a_frak,
    distance,
    draw_indexed_states,
    draw_states,
    iterate_array,
    metric_distance,
    point_to_bits,
    point_value,
    short_return_horizon,
    state_to_point,
    state_values,
    step_array,
)

logger = logging.getLogger(__name__)

BIT_WEIGHTS = np.exp2(-np.arange(1, 54))


# ---------------------------------------------------------------------------
# Hit sequences
# ---------------------------------------------------------------------------

def _bit_row_values(row: np.ndarray, N: int) -> np.ndarray:
    """x_n = T^n x for n < N from one digit row, read through a 53-digit window."""
    if row.size < N + settings.GUARD_BITS:
        raise ExactnessBudgetError(N, max(row.size - settings.GUARD_BITS, 0))
    if N == 0:
        return np.empty(0)
    return sliding_window_view(row[: N + 52].astype(float), 53) @ BIT_WEIGHTS


def _rational_array(values, den: int) -> np.ndarray:
    """Integer states modulo `den`; Python ints once 2p + q could leave int64."""
    if 3 * den < 2**63:
        return np.asarray(values, dtype=np.int64)
    return np.asarray(values, dtype=object)


def _rational_center(center, den: int) -> Tuple:
    """Center coordinates in units of 1/den, exact when the center shares the lattice."""
    if isinstance(center, ExactRational2D) and den % center.denominator == 0:
        scale = den // center.denominator
        return center.p * scale, center.q * scale
    c = np.asarray(point_value(center) if isinstance(center, ExactRational2D) else center, dtype=float)
    return c[..., 0] * den, c[..., 1] * den


def _rational_hits(
    system: SystemSpec, center, rho: float, states: np.ndarray, N: np.ndarray, den: Optional[int] = None
) -> np.ndarray:
    den = den or settings.CAT_DENOMINATOR
    p = _rational_array(states[:, 0], den)
    q = _rational_array(states[:, 1], den)
    cp, cq = _rational_center(center, den)
    radius = rho * den
    counts = np.zeros(len(states), dtype=np.int64)
    for n in range(int(N.max(initial=0))):
        dp = np.abs(p - cp)
        dq = np.abs(q - cq)
        dp, dq = np.minimum(dp, den - dp), np.minimum(dq, den - dq)
        if system.metric == Metric.TORUS_EUCLID:
            d = np.hypot(np.asarray(dp, dtype=float), np.asarray(dq, dtype=float))
        else:
            d = np.maximum(dp, dq)
        counts += np.asarray(d < radius, dtype=bool) & (n < N)
        p, q = (2 * p + q) % den, (p + q) % den
    return counts


def _float_hits(system: SystemSpec, center: np.ndarray, rho: float, states: np.ndarray, N: np.ndarray) -> np.ndarray:
    x = np.asarray(states, dtype=float)
    counts = np.zeros(len(x), dtype=np.int64)
    for n in range(int(N.max(initial=0))):
        counts += (metric_distance(system.metric, x, center) < rho) & (n < N)
        x = step_array(system, x)
    return counts


def batch_visit_counts(
    system: SystemSpec,
    centers,
    rho: float,
    states: np.ndarray,
    N: Sequence[int],
    denominator: Optional[int] = None,
) -> np.ndarray:
    """Visit counts S_i = #{n < N_i : T^n x_i in B_rho(c_i)} for a batch of starts.

    `states` use the working representation of draw_states; `centers` hold one float
    center per row (broadcastable). Integer cat-map states are numerators over
    `denominator` (CAT_DENOMINATOR when omitted), and an ExactRational2D center is
    compared exactly.
    """
    N = np.asarray(N, dtype=np.int64)
    if system.kind == SystemKind.CAT_MAP and (np.issubdtype(states.dtype, np.integer) or states.dtype == object):
        return _rational_hits(system, centers, rho, states, N, denominator)
    centers = np.asarray(point_value(centers) if isinstance(centers, ExactRational2D) else centers, dtype=float)
    if system.kind == SystemKind.DOUBLING and states.dtype == np.uint8:
        counts = np.zeros(len(states), dtype=np.int64)
        centers = np.broadcast_to(centers, (len(states),))
        for i, row in enumerate(states):
            values = _bit_row_values(row, int(N[i]))
            counts[i] = int(np.count_nonzero(metric_distance(system.metric, values, centers[i]) < rho))
        return counts
    return _float_hits(system, centers, rho, states, N)


def _start_states(system: SystemSpec, start: Point) -> Tuple[np.ndarray, Optional[int]]:
    """Working states for one start and, for rational torus points, their denominator."""
    if isinstance(start, ExactBits):
        if system.kind != SystemKind.DOUBLING:
            raise RepresentationMismatchError("dyadic digit points only iterate under the doubling map")
        return point_to_bits(start)[None, :], None
    if isinstance(start, ExactRational2D):
        if system.kind != SystemKind.CAT_MAP:
            raise RepresentationMismatchError("rational torus points only iterate under the cat map")
        return _rational_array([[start.p, start.q]], start.denominator), start.denominator
    if isinstance(start, Float2D) != (system.dimension == 2):
        raise RepresentationMismatchError(f"{type(start).__name__} does not match the {system.kind.value} map")
    return (np.atleast_2d(point_value(start)) if system.dimension == 2 else np.array([start.x])), None


def _ball_center(system: SystemSpec, ball: BallSpec):
    # rational centers stay exact for the integer cat-map counter
    if system.kind == SystemKind.CAT_MAP and isinstance(ball.center, ExactRational2D):
        return ball.center
    return point_value(ball.center)


def hit_sequence(system: SystemSpec, ball: BallSpec, start: Point, t_param: float, seed: int = 0) -> HitSeries:
    mu = ball_measure(system, ball, seed).value
    N = int(math.floor(t_param / mu))
    states, den = _start_states(system, start)
    center = _ball_center(system, ball)
    if system.kind == SystemKind.DOUBLING and states.dtype == np.uint8:
        values = _bit_row_values(states[0], N)
        bits = (metric_distance(system.metric, values, center) < ball.radius_rho).astype(int)
    else:
        bits = np.zeros(N, dtype=int)
        for n in range(N):
            bits[n] = int(batch_visit_counts(system, center, ball.radius_rho, states, [1], den)[0])
            states = _advance(system, states, den)
    return HitSeries(bits=bits.tolist(), ball=ball, t_param=t_param, N=N, mu_ball=mu)


def _advance(system: SystemSpec, states: np.ndarray, den: Optional[int] = None) -> np.ndarray:
    if system.kind == SystemKind.CAT_MAP and (np.issubdtype(states.dtype, np.integer) or states.dtype == object):
        den = den or settings.CAT_DENOMINATOR
        p, q = states[:, 0], states[:, 1]
        return np.stack([(2 * p + q) % den, (p + q) % den], axis=1)
    return step_array(system, states)


def count_visits(series: HitSeries) -> int:
    return int(sum(series.bits))


def visit_counts(
    system: SystemSpec, ball: BallSpec, starts: Sequence[Point], t_param: float, seed: int = 0
) -> np.ndarray:
    """S for several starts sharing one ball."""
    mu = ball_measure(system, ball, seed).value
    N = int(math.floor(t_param / mu))
    center = _ball_center(system, ball)
    counts = []
    for s in starts:
        states, den = _start_states(system, s)
        counts.append(int(batch_visit_counts(system, center, ball.radius_rho, states, [N], den)[0]))
    return np.asarray(counts, dtype=np.int64)


# ---------------------------------------------------------------------------
# Short returns
# ---------------------------------------------------------------------------

def _exact_test(system: SystemSpec) -> IntersectionTest:
    return IntersectionTest.EXACT_LINEAR if system.kind == SystemKind.CAT_MAP else IntersectionTest.EXACT_INTERVAL


def _cat_shift(center: Point, n: int, backward: bool) -> Tuple[tuple, Tuple[float, float]]:
    if isinstance(center, ExactRational2D):
        d = center.denominator
        m = cat_power(n, d, backward)
        sp = (m[0][0] * center.p + m[0][1] * center.q - center.p) % d
        sq = (m[1][0] * center.p + m[1][1] * center.q - center.q) % d
        return cat_power(n, None, backward), (sp / d, sq / d)
    m = cat_power(n, None, backward)
    x, y = center.value
    return m, ((m[0][0] * x + m[0][1] * y - x) % 1.0, (m[1][0] * x + m[1][1] * y - y) % 1.0)


def _exact_intersects(system: SystemSpec, center: Point, rho: float, n: int, backward: bool) -> bool:
    if system.kind == SystemKind.CAT_MAP:
        matrix, shift = _cat_shift(center, n, backward)
        return interval_images.linear_image_intersects(matrix, shift, rho, system.metric)
    if backward:
        raise ConfigError("backward images are only available for the invertible cat map")
    return interval_images.interval_image_intersects(system, float(point_value(center)), rho, n)


def _witness_grid(system: SystemSpec, center: np.ndarray, rho: float) -> np.ndarray:
    side = settings.WITNESS_GRID
    if system.dimension == 2:
        side = max(int(math.isqrt(side)), 2)
    offsets = rho * np.linspace(-1.0, 1.0, side + 2)[1:-1]
    if system.dimension == 1:
        grid = np.concatenate([[float(center)], center + offsets])
        return np.mod(grid, 1.0)
    gx, gy = np.meshgrid(center[0] + offsets, center[1] + offsets)
    grid = np.concatenate([[center], np.stack([gx.ravel(), gy.ravel()], axis=1)])
    return np.mod(grid, 1.0)


def _crosses_branch_point(system: SystemSpec, lo: float, hi: float) -> bool:
    if system.kind == SystemKind.GAUSS:
        # branch points 1/k; the smallest k above 1/hi is the candidate
        k = math.floor(1.0 / hi) + 1
        return k * lo < 1.0
    return lo < 0.5 < hi


def lipschitz_bound_holds(system: SystemSpec, center: float, rho: float, n: int) -> bool:
    """Whether d(T^n y, T^n c) <= A^n d(y, c) is guaranteed on the ball around c.

    Circle maps that are continuous on the circle always qualify. Otherwise every image
    T^k B with k < n must be one interval inside a single branch, and for the Gauss map it
    must also stay in [GAUSS_CUTOFF, 1] where A bounds |T'|.
    """
    if system.dimension == 2:
        return True
    continuous_on_circle = system.kind in (SystemKind.DOUBLING, SystemKind.INTERMITTENT)
    if continuous_on_circle and system.metric != Metric.INTERVAL:
        return True
    pieces = interval_images.ball_intervals(center, rho, system.metric)
    for _ in range(n):
        if len(pieces) != 1:
            return False
        lo, hi = pieces[0]
        if system.kind == SystemKind.GAUSS and lo < settings.GAUSS_CUTOFF:
            return False
        if _crosses_branch_point(system, lo, hi):
            return False
        pieces = interval_images.image(system, pieces)
    return True


def _lipschitz_verdict(system: SystemSpec, center: Point, rho: float, n: int) -> Tuple[VerdictStatus, IntersectionTest]:
    c = point_value(center)
    image = apply_n(system, center, n)
    gap = distance(system, image, center)
    if gap > (system.lipschitz_A**n + 1.0) * rho and lipschitz_bound_holds(system, float(c), rho, n):
        return VerdictStatus.DISJOINT, IntersectionTest.NECESSARY_LIPSCHITZ
    grid = _witness_grid(system, c, rho)
    inside = metric_distance(system.metric, grid, c) < rho
    landed = metric_distance(system.metric, iterate_array(system, grid, n), c) < rho
    if np.any(inside & landed):
        return VerdictStatus.INTERSECTS, IntersectionTest.SUFFICIENT_CENTER
    return VerdictStatus.UNKNOWN, IntersectionTest.NECESSARY_LIPSCHITZ


def _image_verdict(
    system: SystemSpec, center: Point, rho: float, n: int, method: str, backward: bool
) -> Tuple[VerdictStatus, IntersectionTest]:
    if method == "auto":
        hit = _exact_intersects(system, center, rho, n, backward)
        return (VerdictStatus.INTERSECTS if hit else VerdictStatus.DISJOINT), _exact_test(system)
    if method == "lipschitz":
        if backward:
            raise ConfigError("the Lipschitz tier only tests forward images")
        return _lipschitz_verdict(system, center, rho, n)
    raise ConfigError(f"unknown intersection method {method!r}; use 'auto' or 'lipschitz'")


def ball_image_intersects(
    system: SystemSpec, ball: BallSpec, n: int, method: str = "auto", backward: bool = False
) -> ShortReturnVerdict:
    """Decide whether T^n(B) meets B (T^-n(B) with backward=True on the cat map)."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    status, test = _image_verdict(system, ball.center, ball.radius_rho, n, method, backward)
    return ShortReturnVerdict(
        status=status, witness_n=n if status == VerdictStatus.INTERSECTS else None, test_used=test
    )


def is_short_return_center(
    system: SystemSpec, center: Point, rho: float, a_frak: Optional[float] = None, method: str = "auto"
) -> ShortReturnVerdict:
    """First n in [1, J) with T^n(B) meeting B, if any; J = floor(a |log rho|)."""
    a_frak = default_a_frak(system) if a_frak is None else a_frak
    J = short_return_horizon(rho, a_frak)
    default_test = _exact_test(system) if method == "auto" else IntersectionTest.NECESSARY_LIPSCHITZ
    unknown_test = None
    for n in range(1, J):
        status, test = _image_verdict(system, center, rho, n, method, False)
        if status == VerdictStatus.INTERSECTS:
            return ShortReturnVerdict(status=status, witness_n=n, test_used=test, horizon_J=J)
        if status == VerdictStatus.UNKNOWN:
            unknown_test = test
    if unknown_test is not None:
        return ShortReturnVerdict(status=VerdictStatus.UNKNOWN, test_used=unknown_test, horizon_J=J)
    return ShortReturnVerdict(status=VerdictStatus.DISJOINT, test_used=default_test, horizon_J=J)


def screen_centers(
    system: SystemSpec,
    rho: float,
    a_frak: float,
    seed: int,
    stream: Sequence[int],
    start: int,
    stop: int,
    method: str = "auto",
) -> List[Tuple[str, Optional[int]]]:
    """Short-return verdicts for the centers drawn from indices start..stop-1 of one stream."""
    states = draw_indexed_states(system, seed, stream, range(start, stop))
    verdicts = []
    for state in states:
        verdict = is_short_return_center(system, state_to_point(system, state), rho, a_frak, method)
        verdicts.append((verdict.status.value, verdict.witness_n))
    return verdicts


def estimate_V_measure(
    system: SystemSpec,
    rho: float,
    a_frak: Optional[float] = None,
    samples: int = 1000,
    seed: int = 0,
    method: str = "auto",
    stream: Sequence[int] = (SHORT_RETURN,),
) -> VMeasureEstimate:
    """Monte Carlo bracket on mu(V_rho); Unknown verdicts widen the bracket, never the point estimate."""
    if samples < 100:
        raise ConfigError(f"V_rho estimates need at least 100 samples, got {samples}")
    a_frak = default_a_frak(system) if a_frak is None else a_frak
    J = short_return_horizon(rho, a_frak)
    if J <= 1:
        return VMeasureEstimate(lower=0.0, upper=0.0, se=0.0, samples=samples, horizon_J=J)

    # Import at runtime to avoid circular import
    from app.tasks.dispatch import chunk_ranges, map_chunks
    from app.tasks.monte_carlo_tasks import screen_centers_chunk

    payloads = [
        {
            "system": system.model_dump(mode="json"),
            "rho": rho,
            "a_frak": a_frak,
            "seed": seed,
            "stream": list(stream),
            "start": lo,
            "stop": hi,
            "method": method,
        }
        for lo, hi in chunk_ranges(samples)
    ]
    verdicts = [v for chunk in map_chunks(screen_centers_chunk, payloads) for v in chunk]
    n_hit = sum(1 for status, _ in verdicts if status == VerdictStatus.INTERSECTS.value)
    n_unknown = sum(1 for status, _ in verdicts if status == VerdictStatus.UNKNOWN.value)
    levels: Dict[int, int] = {}
    for status, witness in verdicts:
        if status == VerdictStatus.INTERSECTS.value:
            levels[witness] = levels.get(witness, 0) + 1
    lower = n_hit / samples
    upper = (n_hit + n_unknown) / samples
    logger.info(f"V_rho at rho={rho}: [{lower:.4f}, {upper:.4f}] over {samples} centers, J={J}")
    return VMeasureEstimate(
        lower=lower,
        upper=upper,
        se=math.sqrt(upper * (1.0 - upper) / samples),
        se_lower=math.sqrt(lower * (1.0 - lower) / samples),
        samples=samples,
        horizon_J=J,
        n_intersects=n_hit,
        n_unknown=n_unknown,
        level_counts=dict(sorted(levels.items())),
    )


def _log_power_minus_one(log_A: float, m: int) -> float:
    """log(A^m - 1) without forming A^m."""
    return m * log_A + math.log1p(-math.exp(-m * log_A))


def inflation_table(lipschitz_A: float, J: int, b_frak: float, rho: float) -> List[InflationRow]:
    """Radius inflation s_p rho and dyadic lift n' = n 2^p for every n <= b J."""
    if not 0.0 < b_frak < 1.0 / 3.0:
        raise ConfigError(f"b_frak must lie in (0, 1/3), got {b_frak}")
    bJ = Fraction(b_frak) * J
    log_A = math.log(lipschitz_A)
    lower, upper = math.ceil(bJ), 2 * bJ
    rows = []
    for n in range(1, math.floor(bJ) + 1):
        ratio = bJ / n
        p = (ratio.numerator // ratio.denominator).bit_length()
        n_prime = n << p
        log_s = p * math.log(2.0) + _log_power_minus_one(log_A, n_prime) - _log_power_minus_one(log_A, n)
        with np.errstate(over="ignore"):
            s_p = float(np.exp(log_s))
            inflated = float(np.exp(log_s + math.log(rho)))
        rows.append(
            InflationRow(
                n=n,
                p=p,
                log_s_p=log_s,
                s_p=s_p,
                inflated_rho=inflated,
                n_prime=n_prime,
                in_range=lower <= n_prime <= upper,
            )
        )
    return rows


def sample_center_starts(
    system: SystemSpec, seed: int, stream: Sequence[int], index: int, count: int, horizon: int
) -> np.ndarray:
    """`count` starts for one center, drawn from that center's own stream."""
    return draw_states(system, stream_rng(seed, *stream, index), count, horizon)


def center_visit_counts(
    system: SystemSpec,
    rho: float,
    seed: int,
    stream: Sequence[int],
    centers: Sequence[Dict],
    n_starts: int,
) -> List[List[int]]:
    """Visit counts for every start of every center; each center dict holds index, value and N."""
    results = []
    for center in centers:
        N = int(center["N"])
        states = sample_center_starts(system, seed, stream, int(center["index"]), n_starts, N)
        value = np.asarray(center["value"], dtype=float)
        counts = batch_visit_counts(system, value, rho, states, [N] * n_starts)
        results.append([int(c) for c in counts])
    return results


def center_values(system: SystemSpec, seed: int, stream: Sequence[int], indices: Sequence[int]) -> np.ndarray:
    return state_values(system, draw_indexed_states(system, seed, stream, indices))
