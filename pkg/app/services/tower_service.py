"""Abstract Young towers realized as full-branch maps of the unit interval.

Each beam i has base mass m_i and height R_i. Its base is the interval
[a_i, a_i + m_i) with a_i = m_0 + ... + m_{i-1}, and the return map sends it
onto [0, 1) through a_i + m_i phi^-1(y). phi is the identity for the linear
model and u + (eps / 2 pi) sin(2 pi u) for the wobbled one.
"""
import bisect
import logging
import math
from functools import reduce
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import brentq, curve_fit
from scipy.special import zeta

from app.core.errors import (
    ConfigError,
    EmptyCylinderError,
    InsufficientDataError,
    TowerParameterError,
)
from app.core.rng import TOWER, stream_rng
from app.models.systems import SystemKind, SystemSpec
from app.models.tower import CylinderIndex, KacCheck, TailFit, TowerPoint, TowerSpec
from app.services.systems_service import step_array

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
FIBER_BITS = 32


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

def _return_law(tower_masses: np.ndarray, heights: np.ndarray, max_R: int) -> np.ndarray:
    law = np.zeros(max_R + 1)
    np.add.at(law, heights, tower_masses)
    return law


def tail_constant(tower: TowerSpec) -> float:
    """Smallest C1 with m(R > k) <= C1 k^-lambda for every k >= 1."""
    law = _return_law(np.asarray(tower.base_masses), np.asarray(tower.return_times), tower.max_R)
    survival = law[::-1].cumsum()[::-1]  # survival[k] = m(R >= k)
    k = np.arange(1, tower.max_R)
    exceed = survival[2:]  # m(R > k) for k = 1..max_R-1
    if k.size == 0:
        return float("nan")
    return float(np.max(exceed * np.power(k, tower.lambda_tail)))


def _finish(
    masses: np.ndarray,
    heights: np.ndarray,
    lambda_tail: float,
    max_R: int,
    C0_dist: float,
    slope_wobble: float,
    truncated_mass: float,
) -> TowerSpec:
    alpha = float(masses.max()) / (1.0 - slope_wobble)
    if alpha >= 1.0:
        raise TowerParameterError(
            f"base branches do not contract (alpha = {alpha:.4f}); add beams or lower the slope wobble"
        )
    draft = TowerSpec(
        lambda_tail=lambda_tail,
        C1_tail=1.0,
        max_R=max_R,
        base_masses=masses.tolist(),
        return_times=heights.tolist(),
        alpha_contract=alpha,
        C0_dist=C0_dist,
        slope_wobble=slope_wobble,
        truncated_mass=truncated_mass,
    )
    c1 = tail_constant(draft)
    return draft.model_copy(update={"C1_tail": c1 if c1 > 0 else 1.0})


def build_tower(
    lambda_tail: float,
    max_R: int,
    n_beams_per_height: int = 1,
    C0_dist: float = 1.0,
    slope_wobble: float = 0.0,
) -> TowerSpec:
    """Tower with m(R = k) proportional to k^-(lambda+1), truncated at max_R."""
    if lambda_tail <= 4.0:
        raise TowerParameterError(f"lambda_tail must exceed 4, got {lambda_tail}")
    if max_R < 3:
        raise TowerParameterError(f"max_R must be at least 3, got {max_R}")
    if n_beams_per_height < 1:
        raise TowerParameterError("each height needs at least one beam")
    k = np.arange(1, max_R + 1)
    weights = np.power(k, -(lambda_tail + 1.0))
    full = float(zeta(lambda_tail + 1.0, 1.0))
    truncated = float(zeta(lambda_tail + 1.0, max_R + 1.0)) / full
    law = weights / weights.sum()
    masses = np.repeat(law / n_beams_per_height, n_beams_per_height)
    heights = np.repeat(k, n_beams_per_height)
    logger.info(f"Built tower lambda={lambda_tail} max_R={max_R} with {masses.size} beams")
    return _finish(masses, heights, lambda_tail, max_R, C0_dist, slope_wobble, truncated)


def build_tower_from_law(
    return_times: Sequence[int],
    masses: Sequence[float],
    lambda_tail: float,
    C0_dist: float = 1.0,
    slope_wobble: float = 0.0,
) -> TowerSpec:
    """Tower from an explicit list of beams; masses are normalized to total 1."""
    heights = np.asarray(return_times, dtype=np.int64)
    weights = np.asarray(masses, dtype=float)
    if heights.size == 0 or heights.size != weights.size:
        raise TowerParameterError("need one positive mass per return time")
    if np.any(weights <= 0) or np.any(heights < 1):
        raise TowerParameterError("masses must be positive and return times at least 1")
    if lambda_tail <= 4.0:
        raise TowerParameterError(f"lambda_tail must exceed 4, got {lambda_tail}")
    if reduce(math.gcd, (int(h) for h in heights)) != 1:
        raise TowerParameterError("return times must have gcd 1 (the tower would be periodic)")
    return _finish(weights / weights.sum(), heights, lambda_tail, int(heights.max()), C0_dist, slope_wobble, 0.0)


def _offsets(tower: TowerSpec) -> np.ndarray:
    masses = np.asarray(tower.base_masses)
    return np.concatenate([[0.0], np.cumsum(masses)[:-1]])


# ---------------------------------------------------------------------------
# Tail and correlation diagnostics
# ---------------------------------------------------------------------------

def omega(tower: TowerSpec, s: float) -> float:
    """sqrt of the mass carried by levels of beams taller than s."""
    heights = np.asarray(tower.return_times, dtype=float)
    masses = np.asarray(tower.base_masses)
    tall = heights > s
    return math.sqrt(float(np.sum(heights[tall] * masses[tall])))


def _omega_window(tower: TowerSpec) -> Tuple[float, float]:
    return 4.0, tower.max_R / 10.0


def default_s_range(tower: TowerSpec, points: int = 16) -> List[float]:
    low, high = _omega_window(tower)
    if high < 10.0 * low:
        raise InsufficientDataError(
            f"max_R = {tower.max_R} leaves less than a decade in [{low:g}, max_R/10]; use max_R >= 400"
        )
    return sorted({float(min(round(s), high)) for s in np.geomspace(low, high, points)})


def check_omega_decay(tower: TowerSpec, s_range: Optional[Sequence[float]] = None) -> float:
    """Log-log slope of omega(s); close to -(lambda - 1)/2 when the tail law holds.

    s_range must lie in [4, max_R/10] and span at least a decade.
    """
    s_range = default_s_range(tower) if s_range is None else list(s_range)
    low, high = _omega_window(tower)
    if not s_range or min(s_range) < low or max(s_range) > high:
        raise InsufficientDataError(f"omega radii must lie in [{low:g}, {high:g}]")
    if max(s_range) < 10.0 * min(s_range):
        raise InsufficientDataError(
            f"omega radii span {min(s_range):g}..{max(s_range):g}, less than a decade"
        )
    usable = [(s, omega(tower, s)) for s in s_range]
    usable = [(s, w) for s, w in usable if w > 0.0]
    if len(usable) < 3:
        raise InsufficientDataError(f"omega decay needs 3 radii with tall beams, got {len(usable)}")
    s, w = np.array(usable).T
    fit = stats.linregress(np.log(s), np.log(w))
    return float(fit.slope)


def correlation_decay_bound(tower: TowerSpec, n: int) -> float:
    """sum over k > n of m(R > k): the polynomial rate a tower with this tail mixes at."""
    law = _return_law(np.asarray(tower.base_masses), np.asarray(tower.return_times), tower.max_R)
    exceed = law[::-1].cumsum()[::-1][1:]  # exceed[k] = m(R > k)
    exceed = np.append(exceed, 0.0)
    return float(exceed[n + 1 :].sum()) if n + 1 < exceed.size else 0.0


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------

def _phi(u: float, eps: float) -> float:
    return u + eps / TWO_PI * math.sin(TWO_PI * u)


def _phi_inverse(y: float, eps: float) -> float:
    if eps == 0.0 or y <= 0.0 or y >= 1.0:
        return y
    return brentq(lambda u: _phi(u, eps) - y, 0.0, 1.0, xtol=1e-15)


def _log_phi_slope(u: float, eps: float) -> float:
    return math.log(1.0 + eps * math.cos(TWO_PI * u))


def _land(offsets: List[float], masses: Sequence[float], y: float) -> Tuple[int, float]:
    j = bisect.bisect_right(offsets, y) - 1
    fiber = (y - offsets[j]) / masses[j]
    return j, min(max(fiber, 0.0), math.nextafter(1.0, 0.0))


def tower_step(tower: TowerSpec, x: TowerPoint) -> TowerPoint:
    if x.base_index >= tower.n_beams:
        raise ConfigError(f"beam {x.base_index} does not exist")
    if x.level < tower.return_times[x.base_index] - 1:
        return TowerPoint(base_index=x.base_index, level=x.level + 1, fiber_coord=x.fiber_coord)
    y = _phi(x.fiber_coord, tower.slope_wobble)
    j, fiber = _land(_offsets(tower).tolist(), tower.base_masses, y)
    return TowerPoint(base_index=j, level=0, fiber_coord=fiber)


def return_map(tower: TowerSpec, x: TowerPoint) -> TowerPoint:
    """First return of a base point to the base."""
    if x.level != 0:
        raise ConfigError("the return map acts on base points (level 0)")
    y = _phi(x.fiber_coord, tower.slope_wobble)
    j, fiber = _land(_offsets(tower).tolist(), tower.base_masses, y)
    return TowerPoint(base_index=j, level=0, fiber_coord=fiber)


def separation_time(tower: TowerSpec, x: TowerPoint, y: TowerPoint, horizon: int = 64) -> int:
    """Returns until x and y land in different beams; `horizon` means not before the horizon."""
    if x.level != 0 or y.level != 0:
        raise ConfigError("separation time is defined for base points")
    for k in range(horizon):
        if x.base_index != y.base_index:
            return k
        x, y = return_map(tower, x), return_map(tower, y)
    return horizon


def _check_cylinder(tower: TowerSpec, cylinder: CylinderIndex):
    bad = [i for i in cylinder.indices if not 0 <= i < tower.n_beams]
    if bad:
        raise EmptyCylinderError(f"beam indices {bad} are outside 0..{tower.n_beams - 1}")


def cylinder_interval(tower: TowerSpec, cylinder: CylinderIndex) -> Tuple[float, float]:
    """Base interval of points whose first returns visit the beams in order."""
    _check_cylinder(tower, cylinder)
    offsets = _offsets(tower)
    lo, hi = 0.0, 1.0
    for i in reversed(cylinder.indices):
        m = tower.base_masses[i]
        lo = offsets[i] + m * _phi_inverse(lo, tower.slope_wobble)
        hi = offsets[i] + m * _phi_inverse(hi, tower.slope_wobble)
    return float(lo), float(hi)


def cylinder_diameter(tower: TowerSpec, cylinder: CylinderIndex) -> float:
    _check_cylinder(tower, cylinder)
    if tower.slope_wobble == 0.0:
        return float(np.prod([tower.base_masses[i] for i in cylinder.indices]))
    lo, hi = cylinder_interval(tower, cylinder)
    return hi - lo


def check_distortion(tower: TowerSpec, samples: int, q: int, seed: int) -> float:
    """Largest |log J_q(x) - log J_q(y)| over random pairs sharing a q-cylinder."""
    if q == 0:
        return 0.0
    rng = stream_rng(seed, TOWER)
    masses = np.asarray(tower.base_masses)
    offsets = _offsets(tower)
    eps = tower.slope_wobble
    worst = 0.0
    for _ in range(samples):
        itinerary = rng.choice(tower.n_beams, size=q, p=masses / masses.sum())
        ends = rng.random(2)
        logs = []
        for end in ends:
            position, total = float(end), 0.0
            for i in itinerary[::-1]:
                u = _phi_inverse(position, eps)
                total += _log_phi_slope(u, eps) - math.log(masses[i])
                position = offsets[i] + masses[i] * u
            logs.append(total)
        worst = max(worst, abs(logs[0] - logs[1]))
    return worst


def distortion_bound(tower: TowerSpec) -> float:
    """delta / (1 - alpha), with delta the Lipschitz constant of log phi' along images."""
    return tower.log_slope_lipschitz / (1.0 - tower.alpha_contract)


def kac_ratio(tower: TowerSpec, steps: int, seed: int, batches: int = 100) -> KacCheck:
    """Fraction of time spent on the base against 1 / sum R_i m_i.

    The fiber coordinate keeps its top FIBER_BITS bits after each return and the rest are
    redrawn, so the orbit never collapses onto the dyadic grid of doubles.
    """
    rng = stream_rng(seed, TOWER, 1)
    masses = list(tower.base_masses)
    heights = tower.return_times
    offsets = _offsets(tower).tolist()
    eps = tower.slope_wobble
    scale = float(1 << FIBER_BITS)
    indicator = np.zeros(steps, dtype=np.int8)
    j, fiber = _land(offsets, masses, float(rng.random()))
    noise = rng.random(4096)
    used = 0
    n = 0
    while n < steps:
        indicator[n] = 1
        n += heights[j]
        y = _phi(fiber, eps) if eps else fiber
        j, fiber = _land(offsets, masses, y)
        if used == noise.size:
            noise, used = rng.random(4096), 0
        fiber = (math.floor(fiber * scale) + noise[used]) / scale
        used += 1
    expected = 1.0 / float(np.dot(heights, masses))
    batch_means = indicator[: steps - steps % batches].reshape(batches, -1).mean(axis=1)
    return KacCheck(
        steps=steps,
        empirical=float(indicator.mean()),
        expected=expected,
        se=float(batch_means.std(ddof=1) / math.sqrt(batches)),
    )


# ---------------------------------------------------------------------------
# Intermittent return tails
# ---------------------------------------------------------------------------

def _shifted_power(log_k: np.ndarray, log_c: float, gamma: float, offset: float) -> np.ndarray:
    return log_c - gamma * np.log(np.exp(log_k) + offset)


def intermittent_return_tail(
    system: SystemSpec,
    samples: int,
    seed: int,
    max_steps: int = 1_000_000,
    min_tail_count: int = 10,
) -> TailFit:
    """Fit P(R > k) = C (k + k0)^-gamma for returns to (1/2, 1] of the intermittent map.

    gamma should come out near 1/alpha.
    """
    if system.kind != SystemKind.INTERMITTENT:
        raise ConfigError("return tails are measured on the intermittent map")
    rng = stream_rng(seed, TOWER, 2)
    x = 0.5 + 0.5 * rng.random(samples)
    x = np.where(x <= 0.5, np.nextafter(0.5, 1.0), x)
    returns = np.full(samples, max_steps + 1, dtype=np.int64)
    active = np.arange(samples)
    for k in range(1, max_steps + 1):
        x = step_array(system, x)
        back = x > 0.5
        returns[active[back]] = k
        active, x = active[~back], x[~back]
        if active.size == 0:
            break
    censored = int(active.size)
    grid = np.unique(np.round(np.geomspace(1, max(returns.max(), 2), 60)).astype(np.int64))
    exceed = np.array([np.count_nonzero(returns > k) for k in grid])
    keep = (exceed >= min_tail_count) & (grid <= max_steps)
    if np.count_nonzero(keep) < 5:
        largest = int(grid[keep].max()) if keep.any() else 0
        raise InsufficientDataError(
            f"only {np.count_nonzero(keep)} tail points with {min_tail_count} exceedances (largest k = {largest}); "
            f"draw more samples"
        )
    k, counts = grid[keep], exceed[keep]
    survival = counts / samples
    slope = stats.linregress(np.log(k), np.log(survival)).slope
    params, _ = curve_fit(
        _shifted_power,
        np.log(k.astype(float)),
        np.log(survival),
        p0=[0.0, max(-slope, 0.5), 1.0],
        sigma=1.0 / np.sqrt(counts),
        bounds=([-np.inf, 0.0, 0.0], [np.inf, 50.0, 1000.0]),
        maxfev=20_000,
    )
    log_c, gamma, offset = (float(v) for v in params)
    logger.info(f"Intermittent alpha={system.alpha_pm}: tail exponent {gamma:.3f} (offset {offset:.2f})")
    return TailFit(
        exponent=gamma,
        offset=offset,
        log_constant=log_c,
        k_range=[int(k[0]), int(k[-1])],
        samples=samples,
        censored=censored,
    )
