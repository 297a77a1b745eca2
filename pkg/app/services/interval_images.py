"""Exact forward images of balls.

Interval maps: a ball is a finite union of intervals and every branch is monotone and
continuous, so each iterate maps endpoints to endpoints. The cat map is linear on the
universal cover, so T^n(B) meets B exactly when some lattice translate of M^n c - c lies in
M^n S - S, with S the ball of radius rho at the origin.
"""
import logging
import math
from typing import Callable, List, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import ConvexHull

from app.core.config import settings
from app.core.errors import ConfigError, IntervalBudgetError
from app.models.systems import Metric, SystemKind, SystemSpec

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]

WHOLE: List[Interval] = [(0.0, 1.0)]


def ball_intervals(center: float, rho: float, metric: Metric) -> List[Interval]:
    """The open ball as a sorted list of intervals inside [0, 1]."""
    lo, hi = center - rho, center + rho
    if metric == Metric.INTERVAL:
        return [(max(lo, 0.0), min(hi, 1.0))]
    if hi - lo >= 1.0:
        return list(WHOLE)
    if lo < 0.0:
        return [(0.0, hi), (lo + 1.0, 1.0)]
    if hi > 1.0:
        return [(0.0, hi - 1.0), (lo, 1.0)]
    return [(lo, hi)]


def merge(pieces: Sequence[Interval]) -> List[Interval]:
    merged: List[Interval] = []
    for lo, hi in sorted(p for p in pieces if p[1] > p[0]):
        if merged and lo <= merged[-1][1]:
            if hi > merged[-1][1]:
                merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return merged


def _branches(system: SystemSpec) -> List[Tuple[float, float, Callable[[float], float]]]:
    if system.kind == SystemKind.DOUBLING:
        return [(0.0, 0.5, lambda x: 2.0 * x), (0.5, 1.0, lambda x: 2.0 * x - 1.0)]
    if system.kind == SystemKind.INTERMITTENT:
        a = system.alpha_pm
        return [(0.0, 0.5, lambda x: x * (1.0 + (2.0 * x) ** a)), (0.5, 1.0, lambda x: 2.0 * x - 1.0)]
    raise ConfigError(f"no increasing branch table for {system.kind.value}")


def _gauss_image(lo: float, hi: float) -> List[Interval]:
    # infinitely many branches accumulate at 0
    if lo <= 0.0:
        return list(WHOLE)
    k_first = max(int(math.floor(1.0 / hi)), 1)
    k_last = int(math.floor(1.0 / lo))
    if k_last - k_first >= 2:
        # some branch (1/(k+1), 1/k] lies inside the interval and covers everything
        return list(WHOLE)
    pieces = []
    for k in range(k_first, k_last + 1):
        a = max(lo, 1.0 / (k + 1))
        b = min(hi, 1.0 / k)
        if b > a:
            pieces.append((max(1.0 / b - k, 0.0), min(1.0 / a - k, 1.0)))
    return pieces


def image(system: SystemSpec, intervals: Sequence[Interval]) -> List[Interval]:
    """T applied to a union of intervals."""
    pieces: List[Interval] = []
    if system.kind == SystemKind.GAUSS:
        for lo, hi in intervals:
            pieces.extend(_gauss_image(lo, hi))
        return merge(pieces)
    branches = _branches(system)
    for lo, hi in intervals:
        for b_lo, b_hi, f in branches:
            a, b = max(lo, b_lo), min(hi, b_hi)
            if b > a:
                pieces.append((f(a), f(b)))
    return merge(pieces)


def iterate_image(system: SystemSpec, intervals: Sequence[Interval], n: int) -> List[Interval]:
    current = merge(intervals)
    for k in range(1, n + 1):
        current = image(system, current)
        if len(current) > settings.MAX_INTERVAL_PIECES:
            raise IntervalBudgetError(k, len(current), settings.MAX_INTERVAL_PIECES)
        if current == WHOLE:
            break
    return current


def overlaps(a: Sequence[Interval], b: Sequence[Interval]) -> bool:
    """Whether two unions of open intervals share a point."""
    return any(max(lo1, lo2) < min(hi1, hi2) for lo1, hi1 in a for lo2, hi2 in b)


def interval_image_intersects(system: SystemSpec, center: float, rho: float, n: int) -> bool:
    ball = ball_intervals(center, rho, system.metric)
    return overlaps(iterate_image(system, ball, n), ball)


# ---------------------------------------------------------------------------
# Cat map
# ---------------------------------------------------------------------------

def _square(rho: float) -> np.ndarray:
    return rho * np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])


def _min_image_gap(matrix: np.ndarray, w: np.ndarray, rho: float) -> float:
    """min over |u| <= rho of |M u - w| (euclidean)."""
    u0 = np.linalg.solve(matrix, w)
    if np.linalg.norm(u0) <= rho:
        return 0.0
    gram = matrix.T @ matrix
    target = matrix.T @ w

    def u_of(mu: float) -> np.ndarray:
        return np.linalg.solve(gram + mu * np.eye(2), target)

    mu_hi = np.linalg.norm(target) / rho + 1.0
    mu = brentq(lambda m: np.linalg.norm(u_of(m)) - rho, 0.0, mu_hi, xtol=1e-14)
    return float(np.linalg.norm(matrix @ u_of(mu) - w))


def linear_image_intersects(
    matrix: Sequence[Sequence[int]], shift: Sequence[float], rho: float, metric: Metric
) -> bool:
    """Whether {M u - v + k : u, v in S, k in Z^2} contains `shift` (M c - c mod 1)."""
    m = np.asarray(matrix, dtype=float)
    z = np.asarray(shift, dtype=float)
    z = z - np.floor(z + 0.5)
    if metric == Metric.TORUS_MAX:
        half = rho * (np.abs(m).sum(axis=1) + 1.0)
        vertices = np.array([m @ s - v for s in _square(rho) for v in _square(rho)])
        hull = ConvexHull(vertices)
    else:
        half = rho * (np.linalg.norm(m, axis=1) + 1.0)
        hull = None
    ranges = [range(int(math.floor(-h - zi)), int(math.ceil(h - zi)) + 1) for h, zi in zip(half, z)]
    for k0 in ranges[0]:
        for k1 in ranges[1]:
            w = z + np.array([k0, k1], dtype=float)
            if np.any(np.abs(w) >= half):
                continue
            if hull is not None:
                if np.all(hull.equations[:, :2] @ w + hull.equations[:, 2] < 0.0):
                    return True
            elif _min_image_gap(m, w, rho) < rho:
                return True
    return False
