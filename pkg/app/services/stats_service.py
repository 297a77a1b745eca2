import logging
import math
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from app.core.config import settings
from app.core.errors import ConfigError, InsufficientDataError
from app.core.rng import BOOTSTRAP, stream_rng
from app.models.stats import DecayFit, DistanceCI, EmpiricalPmf, TVDistance

logger = logging.getLogger(__name__)


def empirical_pmf(samples: Sequence[int]) -> EmpiricalPmf:
    values = np.asarray(samples, dtype=np.int64)
    if values.size == 0:
        raise InsufficientDataError("cannot build a histogram from no samples")
    if values.min() < 0:
        raise ConfigError("visit counts must be nonnegative")
    counts = np.bincount(values)
    counts = np.concatenate([counts, np.zeros(settings.HISTOGRAM_GUARD)])
    return EmpiricalPmf(counts=counts.tolist(), total=float(values.size))


def poisson_pmf_vector(t: float, k_max: int) -> np.ndarray:
    """Poi_t{0..k_max} from log Poi{k+1} = log Poi{k} + log t - log(k+1)."""
    if t <= 0:
        raise ConfigError(f"Poisson parameter must be positive, got {t}")
    steps = math.log(t) - np.log(np.arange(1, k_max + 1))
    return np.exp(-t + np.concatenate([[0.0], np.cumsum(steps)]))


def poisson_pmf(t: float, k: int) -> float:
    if k < 0:
        return 0.0
    return float(poisson_pmf_vector(t, k)[k])


def _masses(pmf: Union[EmpiricalPmf, Sequence[float]]) -> np.ndarray:
    if isinstance(pmf, EmpiricalPmf):
        return pmf.masses
    return np.asarray(pmf, dtype=float)


def sup_distance(pmf: Union[EmpiricalPmf, Sequence[float]], t: float) -> float:
    """sup_k |pmf(k) - Poi_t(k)| over all k >= 0, including the Poisson tail past k_max."""
    masses = _masses(pmf)
    k_max = masses.size - 1
    head = np.abs(masses - poisson_pmf_vector(t, k_max)).max()
    # Poi_t is unimodal with mode floor(t)
    tail = poisson_pmf(t, max(k_max + 1, int(math.floor(t))))
    return float(max(head, tail))


def tv_distance(p: Union[EmpiricalPmf, Sequence[float]], q: Union[EmpiricalPmf, Sequence[float]]) -> TVDistance:
    a, b = _masses(p), _masses(q)
    size = max(a.size, b.size)
    a = np.pad(a, (0, size - a.size))
    b = np.pad(b, (0, size - b.size))
    l1 = float(np.abs(a - b).sum())
    return TVDistance(l1=l1, tv=l1 / 2.0)


def tv_to_poisson(pmf: Union[EmpiricalPmf, Sequence[float]], t: float) -> TVDistance:
    masses = _masses(pmf)
    k_max = masses.size - 1
    l1 = float(np.abs(masses - poisson_pmf_vector(t, k_max)).sum() + stats.poisson.sf(k_max, t))
    return TVDistance(l1=l1, tv=l1 / 2.0)


def fit_log_decay(points: Sequence[Tuple[float, float]]) -> DecayFit:
    """Least squares of log err on log|log rho|; kappa_hat is minus the slope."""
    if len({rho for rho, _ in points}) < 3:
        raise InsufficientDataError("the decay fit needs at least 3 distinct radii")
    if any(not 0.0 < rho < 1.0 for rho, _ in points):
        raise ConfigError("radii must lie in (0, 1)")
    usable = [(rho, err) for rho, err in points if err > 0.0]
    dropped = len(points) - len(usable)
    if dropped:
        logger.warning(f"Dropping {dropped} zero-error points from the decay fit")
    if len({rho for rho, _ in usable}) < 3:
        raise InsufficientDataError(f"only {len(usable)} points with positive error remain after dropping zeros")
    rho, err = np.array(usable).T
    x = np.log(np.abs(np.log(rho)))
    y = np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    ss_res = float(residual @ residual)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_squared = 1.0 if ss_tot == 0.0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return DecayFit(
        kappa_hat=float(-slope),
        intercept=float(intercept),
        r_squared=r_squared,
        points=[(float(abs(math.log(r))), float(e)) for r, e in usable],
        dropped=dropped,
    )


def bootstrap_ci(
    samples: Sequence[int],
    statistic: Callable[[np.ndarray], float],
    seed: int,
    stream: Sequence[int] = (),
    resamples: Optional[int] = None,
    confidence: Optional[float] = None,
) -> DistanceCI:
    """Percentile bootstrap; resample b uses its own stream."""
    values = np.asarray(samples)
    resamples = settings.BOOTSTRAP_RESAMPLES if resamples is None else resamples
    confidence = settings.CONFIDENCE if confidence is None else confidence
    point = float(statistic(values))
    if resamples == 0 or values.size < 2:
        return DistanceCI(value=point, low=point, high=point)
    draws = np.empty(resamples)
    for b in range(resamples):
        rng = stream_rng(seed, *stream, BOOTSTRAP, b)
        draws[b] = statistic(values[rng.integers(0, values.size, values.size)])
    tail = (1.0 - confidence) / 2.0
    low, high = np.quantile(draws, [tail, 1.0 - tail])
    return DistanceCI(value=point, low=float(low), high=float(high))


def poisson_distances(
    samples: Sequence[int], t: float, seed: int, stream: Sequence[int] = (), resamples: Optional[int] = None
) -> Tuple[DistanceCI, DistanceCI]:
    """Sup and total-variation distances to Poi_t with bootstrap intervals."""
    sup = bootstrap_ci(samples, lambda s: sup_distance(empirical_pmf(s), t), seed, stream, resamples)
    tv = bootstrap_ci(samples, lambda s: tv_to_poisson(empirical_pmf(s), t).tv, seed, stream, resamples)
    return sup, tv
