import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy import stats

from app.core.config import settings
from app.core.errors import ConfigError, HypothesisViolationError, InsufficientDataError
from app.models.chenstein import (
    BinomialPoissonGap,
    ChenSteinInputs,
    ChenSteinReport,
    DeviationReport,
    EmpiricalSamples,
    Estimate,
    IIDBernoulli,
    R1Result,
    TwoStateMarkov,
)
from app.services.stats_service import poisson_pmf_vector

logger = logging.getLogger(__name__)


def stationary_law(model: TwoStateMarkov) -> np.ndarray:
    p01, p10 = model.transition[0][1], model.transition[1][0]
    return np.array([p10, p01]) / (p01 + p10)


def initial_law(model: TwoStateMarkov) -> np.ndarray:
    return np.asarray(model.initial, dtype=float) if model.initial is not None else stationary_law(model)


def require_stationary(model) -> None:
    if isinstance(model, TwoStateMarkov) and model.initial is not None:
        if not np.allclose(model.initial, stationary_law(model), rtol=0.0, atol=1e-12):
            raise HypothesisViolationError(
                f"process is not stationary: initial law {model.initial} differs from "
                f"pi = {stationary_law(model).tolist()}"
            )


def _trajectories(model: EmpiricalSamples) -> np.ndarray:
    x = np.asarray(model.trajectories, dtype=np.int64)
    if np.any((x != 0) & (x != 1)):
        raise ConfigError("empirical trajectories must be 0/1")
    return x


def compute_eps(model) -> Estimate:
    if isinstance(model, IIDBernoulli):
        return Estimate(value=model.eps)
    if isinstance(model, TwoStateMarkov):
        return Estimate(value=float(stationary_law(model)[1]))
    x = _trajectories(model)
    first = x[:, 0]
    return Estimate(value=float(first.mean()), se=float(first.std(ddof=1) / math.sqrt(first.size)) if first.size > 1 else 0.0)


# ---------------------------------------------------------------------------
# Exact law of S = X_1 + ... + X_N
# ---------------------------------------------------------------------------

def exact_S_pmf(model, N: int) -> np.ndarray:
    if N < 0:
        raise ConfigError(f"N must be >= 0, got {N}")
    if isinstance(model, IIDBernoulli):
        return stats.binom.pmf(np.arange(N + 1), N, model.eps)
    if not isinstance(model, TwoStateMarkov):
        raise ConfigError("the exact law of S needs an IID or Markov model")
    if N > settings.DP_BUDGET:
        raise ConfigError(f"N = {N} exceeds the dynamic-programming budget {settings.DP_BUDGET}")
    if N == 0:
        return np.array([1.0])
    P = np.asarray(model.transition, dtype=float)
    start = initial_law(model)
    # f[s, c] = P(X_n = s, count so far = c)
    f = np.zeros((2, N + 1))
    f[0, 0], f[1, 1] = start[0], start[1]
    for _ in range(1, N):
        stay = f[0] * P[0, 0] + f[1] * P[1, 0]
        hit = f[0] * P[0, 1] + f[1] * P[1, 1]
        f[0] = stay
        f[1] = np.concatenate([[0.0], hit[:-1]])
    return f.sum(axis=0)


def enumerate_S_pmf(model, N: int) -> np.ndarray:
    """Law of S by summing over all 2^N paths; an independent check on exact_S_pmf."""
    if N > settings.ENUMERATION_BUDGET:
        raise ConfigError(f"N = {N} exceeds the enumeration budget {settings.ENUMERATION_BUDGET}")
    if N == 0:
        return np.array([1.0])
    paths = (np.arange(2**N)[:, None] >> np.arange(N)) & 1
    if isinstance(model, IIDBernoulli):
        probs = np.prod(np.where(paths == 1, model.eps, 1.0 - model.eps), axis=1)
    elif isinstance(model, TwoStateMarkov):
        P = np.asarray(model.transition, dtype=float)
        probs = initial_law(model)[paths[:, 0]] * np.prod(P[paths[:, :-1], paths[:, 1:]], axis=1)
    else:
        raise ConfigError("path enumeration needs an IID or Markov model")
    return np.bincount(paths.sum(axis=1), weights=probs, minlength=N + 1)


# ---------------------------------------------------------------------------
# Dependence terms
# ---------------------------------------------------------------------------

def _check_gap(N: int, p_gap: int):
    if p_gap < 2:
        raise HypothesisViolationError(f"the gap needs 2 <= p_gap, got p_gap = {p_gap}")
    if p_gap >= N - 1:
        raise InsufficientDataError(f"the R1 window is empty: need p_gap < N - 1, got p_gap = {p_gap}, N = {N}")


def _better(value: float, j: int, q: int, best: Tuple[float, int, int]) -> bool:
    # ties go to the smallest j, then the smallest q
    return (value, -j, -q) > (best[0], -best[1], -best[2])


def _markov_R1(model: TwoStateMarkov, N: int, p_gap: int) -> R1Result:
    P = np.asarray(model.transition, dtype=float)
    start = initial_law(model)
    eps = float(start[1])
    reach = np.linalg.matrix_power(P, p_gap)
    joint_weights = start[1] * reach[1]
    marginal_weights = start @ reach
    L_max = N - p_gap - 1
    # g[s, q] = P(window of length L sums to q | window starts in state s)
    g = np.zeros((2, L_max + 1))
    g[0, 0] = 1.0
    g[1, 1] = 1.0
    best = (-1.0, N, N)
    for L in range(1, L_max + 1):
        if L > 1:
            tail = P @ g  # tail[s] = law of the window's remaining L-1 entries after state s
            g = np.stack([tail[0], np.concatenate([[0.0], tail[1][:-1]])])
        j = N - p_gap - L
        if L >= 2:
            joint = joint_weights @ g[:, 1:L]
            marginal = marginal_weights @ g[:, 1:L]
            diff = np.abs(joint - eps * marginal)
            q = int(np.argmax(diff)) + 1
            if _better(float(diff[q - 1]), j, q, best):
                best = (float(diff[q - 1]), j, q)
    if best[0] < 0:
        return R1Result(value=0.0)
    return R1Result(value=best[0], j=best[1], q=best[2])


def _empirical_R1(model: EmpiricalSamples, N: int, p_gap: int) -> R1Result:
    x = _trajectories(model)
    if x.shape[1] < N:
        raise InsufficientDataError(f"trajectories have {x.shape[1]} steps, need N = {N}")
    eps = x[:, 0].mean()
    cs = np.concatenate([np.zeros((x.shape[0], 1), dtype=np.int64), np.cumsum(x[:, :N], axis=1)], axis=1)
    best = (-1.0, N, N)
    for j in range(1, N - p_gap):
        L = N - p_gap - j
        if L < 2:
            continue
        window = cs[:, N - j] - cs[:, p_gap]
        marginal = np.bincount(window, minlength=L + 1)[1:L] / x.shape[0]
        joint = np.bincount(window[x[:, 0] == 1], minlength=L + 1)[1:L] / x.shape[0]
        diff = np.abs(joint - eps * marginal)
        q = int(np.argmax(diff)) + 1
        if _better(float(diff[q - 1]), j, q, best):
            best = (float(diff[q - 1]), j, q)
    if best[0] < 0:
        return R1Result(value=0.0)
    return R1Result(value=best[0], j=best[1], q=best[2])


def compute_R1(model, N: int, p_gap: int) -> R1Result:
    """sup over windows W = X_{p+1} + ... + X_{N-j} of length L and 0 < q < L of |P(X_1=1, W=q) - eps P(W=q)|."""
    _check_gap(N, p_gap)
    if isinstance(model, IIDBernoulli):
        return R1Result(value=0.0)
    if isinstance(model, TwoStateMarkov):
        return _markov_R1(model, N, p_gap)
    return _empirical_R1(model, N, p_gap)


def compute_R2(model, p_gap: int) -> float:
    """sum_{n=2}^{p} P(X_1 = 1, X_n = 1)."""
    if p_gap < 2:
        raise HypothesisViolationError(f"the gap needs 2 <= p_gap, got p_gap = {p_gap}")
    if isinstance(model, IIDBernoulli):
        return (p_gap - 1) * model.eps**2
    if isinstance(model, TwoStateMarkov):
        P = np.asarray(model.transition, dtype=float)
        start = initial_law(model)
        total, step = 0.0, np.eye(2)
        for _ in range(2, p_gap + 1):
            step = step @ P
            total += start[1] * step[1, 1]
        return float(total)
    x = _trajectories(model)
    if x.shape[1] < p_gap:
        raise InsufficientDataError(f"trajectories have {x.shape[1]} steps, need p_gap = {p_gap}")
    return float(sum(np.mean(x[:, 0] * x[:, n - 1]) for n in range(2, p_gap + 1)))


# ---------------------------------------------------------------------------
# The bound
# ---------------------------------------------------------------------------

def validate_inputs(inputs: ChenSteinInputs) -> None:
    eps, t, N, p = inputs.eps, inputs.t_param, inputs.N, inputs.p_gap
    if not 0.0 < eps < t / 2.0:
        raise HypothesisViolationError(f"need 0 < eps < t/2, got eps = {eps}, t = {t}")
    if not 2 <= p < N:
        raise HypothesisViolationError(f"need 2 <= p_gap < N, got p_gap = {p}, N = {N}")
    if N != math.floor(t / eps):
        raise HypothesisViolationError(f"need N = floor(t/eps) = {math.floor(t / eps)}, got N = {N}")


def bound_per_k(inputs: ChenSteinInputs) -> float:
    """Bound on |P(S = k) - Poi_t(k)| before the binomial-to-Poisson term."""
    eps, t, N, p = inputs.eps, inputs.t_param, inputs.N, inputs.p_gap
    R = inputs.R1 + inputs.R2
    compact = 6.0 * t * (N * R + p * eps)
    full = 2.0 * N * (R + p * eps**2) + 4.0 * p * eps
    return max(compact, full)


def chen_stein_bound(inputs: ChenSteinInputs, E_size: int) -> float:
    validate_inputs(inputs)
    if E_size < 0:
        raise ConfigError("E_size must be nonnegative")
    return E_size * bound_per_k(inputs) + 2.0 * inputs.t_param**2 / inputs.N


def chen_stein_report(model, t_param: float, p_gap: int) -> ChenSteinReport:
    require_stationary(model)
    eps = compute_eps(model).value
    if eps <= 0.0:
        raise HypothesisViolationError("need eps > 0")
    N = int(math.floor(t_param / eps))
    probe = ChenSteinInputs(eps=eps, N=N, t_param=t_param, p_gap=p_gap, R1=0.0, R2=0.0)
    validate_inputs(probe)
    r1 = compute_R1(model, N, p_gap)
    inputs = probe.model_copy(update={"R1": r1.value, "R2": compute_R2(model, p_gap)})
    return ChenSteinReport(
        **inputs.model_dump(),
        bound_per_k=bound_per_k(inputs),
        binomial_poisson_term=2.0 * t_param**2 / N,
        R1_argmax=[r1.j, r1.q] if r1.j is not None else None,
    )


def binomial_poisson_tv(N: int, t_param: float) -> BinomialPoissonGap:
    if N < 1 or not 0.0 < t_param <= N:
        raise ConfigError(f"need N >= 1 and 0 < t <= N, got N = {N}, t = {t_param}")
    k = np.arange(N + 1)
    binom = stats.binom.pmf(k, N, t_param / N)
    poisson = poisson_pmf_vector(t_param, N)
    l1 = float(np.abs(binom - poisson).sum() + stats.poisson.sf(N, t_param))
    return BinomialPoissonGap(N=N, t_param=t_param, exact_tv=l1, bound=2.0 * t_param**2 / N)


def deviation_report(pmf: np.ndarray, report: ChenSteinReport, tol: float = 1e-12) -> DeviationReport:
    """Worst singleton and interval deviations from Poi_t against the bound for each set."""
    pmf = np.asarray(pmf, dtype=float)
    N = pmf.size - 1
    poisson = poisson_pmf_vector(report.t_param, N)
    singleton = np.abs(pmf - poisson)
    singleton_bound = report.bound_total(1)
    s_viol = int(np.count_nonzero(singleton > singleton_bound + tol))

    # intervals [a, b] inside 0..N, plus the tails {a, a+1, ...}
    cum_p = np.concatenate([[0.0], np.cumsum(pmf)])
    cum_q = np.concatenate([[0.0], np.cumsum(poisson)])
    a, b = np.triu_indices(N + 1)
    interval = np.abs((cum_p[b + 1] - cum_p[a]) - (cum_q[b + 1] - cum_q[a]))
    sizes = b - a + 1
    tail_dev = np.abs((1.0 - cum_p[:-1]) - stats.poisson.sf(np.arange(N + 1) - 1, report.t_param))
    tail_sizes = N + 1 - np.arange(N + 1)
    all_dev = np.concatenate([interval, tail_dev])
    all_sizes = np.concatenate([sizes, tail_sizes])
    bounds = all_sizes * report.bound_per_k + report.binomial_poisson_term
    return DeviationReport(
        max_singleton=float(singleton.max()),
        max_interval=float(all_dev.max()),
        worst_singleton_bound=singleton_bound,
        worst_interval_bound=float(bounds[np.argmax(all_dev)]),
        singleton_violations=s_viol,
        interval_violations=int(np.count_nonzero(all_dev > bounds + tol)),
    )
