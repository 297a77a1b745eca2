import logging
import math
from typing import Dict, List, Tuple, Type

import numpy as np
import scipy
from pydantic import BaseModel

from app.core.config import settings
from app.core.errors import AllCentersExcludedError, ConfigError, InsufficientDataError
from app.core.rng import CENTERS, CHEN_STEIN, SHORT_RETURN, STARTS, stream_rng
from app.models.chenstein import IIDBernoulli, TwoStateMarkov
from app.models.experiment import (
    CenterRecord,
    ChenSteinInstance,
    ChenSteinSuiteConfig,
    ChenSteinSuiteResult,
    ExperimentConfig,
    ExperimentResult,
    RhoRecord,
    RunMetadata,
    ShortReturnScanResult,
    ShortReturnScanRow,
    TowerCheckConfig,
    TowerCheckResult,
    TowerLambdaReport,
)
from app.models.orbit import VerdictStatus
from app.models.systems import SystemConfig, SystemKind, SystemSpec
from app.services import chenstein_service, stats_service, tower_service
from app.services.orbit_service import center_values, estimate_V_measure, inflation_table
from app.services.systems_service import ball_measures, default_a_frak, make_system, short_return_horizon

logger = logging.getLogger(__name__)

EXPERIMENT_CONFIGS: Dict[str, Type[BaseModel]] = {
    "return-stats": ExperimentConfig,
    "short-returns": ExperimentConfig,
    "scaling": ExperimentConfig,
    "chen-stein": ChenSteinSuiteConfig,
    "tower": TowerCheckConfig,
}


def parse_config(kind: str, document: Dict) -> BaseModel:
    if kind not in EXPERIMENT_CONFIGS:
        raise ConfigError(f"unknown experiment {kind!r}; choose one of {sorted(EXPERIMENT_CONFIGS)}")
    return EXPERIMENT_CONFIGS[kind].model_validate(document)


def _versions() -> Dict[str, str]:
    return {"version": settings.VERSION, "numpy": np.__version__, "scipy": scipy.__version__}


def _metadata(config: ExperimentConfig, system: SystemSpec, a_frak: float) -> RunMetadata:
    return RunMetadata(
        **_versions(),
        lipschitz_A=system.lipschitz_A,
        a_frak=a_frak,
        config=config.model_dump(mode="json", exclude={"output_dir"}),
    )


def _resolve(config: ExperimentConfig) -> Tuple[SystemSpec, float]:
    system = make_system(config.system)
    return system, config.a_frak if config.a_frak is not None else default_a_frak(system)


# ---------------------------------------------------------------------------
# Return statistics
# ---------------------------------------------------------------------------

def select_centers(
    system: SystemSpec, config: ExperimentConfig, a_frak: float, rho_idx: int, rho: float
) -> Tuple[List[int], int, int]:
    """First n_centers candidates that are not very-short-return centers.

    Returns the accepted candidate indices, the Intersects count among the candidates
    examined, and the Unknown count among the accepted ones.
    """
    J = short_return_horizon(rho, a_frak)
    if J <= 1:
        return list(range(config.n_centers)), 0, 0

    # Import at runtime to avoid circular import
    from app.tasks.dispatch import chunk_ranges, map_chunks
    from app.tasks.monte_carlo_tasks import screen_centers_chunk

    limit = config.n_centers * config.candidate_factor
    accepted: List[int] = []
    excluded = unknown = 0
    start = 0
    while len(accepted) < config.n_centers and start < limit:
        stop = min(start + config.n_centers, limit)
        payloads = [
            {
                "system": system.model_dump(mode="json"),
                "rho": rho,
                "a_frak": a_frak,
                "seed": config.seed,
                "stream": [rho_idx, CENTERS],
                "start": start + lo,
                "stop": start + hi,
            }
            for lo, hi in chunk_ranges(stop - start)
        ]
        verdicts = [v for chunk in map_chunks(screen_centers_chunk, payloads) for v in chunk]
        for offset, (status, _) in enumerate(verdicts):
            if len(accepted) == config.n_centers:
                break
            if status == VerdictStatus.INTERSECTS.value:
                excluded += 1
                continue
            if status == VerdictStatus.UNKNOWN.value:
                unknown += 1
            accepted.append(start + offset)
        start = stop
    if not accepted:
        raise AllCentersExcludedError(rho, start)
    if len(accepted) < config.n_centers:
        logger.warning(f"Only {len(accepted)} of {config.n_centers} centers survived screening at rho={rho}")
    return accepted, excluded, unknown


def _rho_record(system: SystemSpec, config: ExperimentConfig, a_frak: float, rho_idx: int, rho: float) -> RhoRecord:
    from app.tasks.dispatch import chunk_ranges, map_chunks
    from app.tasks.monte_carlo_tasks import visit_counts_chunk

    accepted, excluded, unknown = select_centers(system, config, a_frak, rho_idx, rho)
    values = center_values(system, config.seed, (rho_idx, CENTERS), accepted)
    mu, mu_se = ball_measures(system, values, rho, config.seed)
    Ns = np.floor(config.t_param / mu).astype(np.int64)
    centers = [
        {
            "index": idx,
            "value": values[i].tolist() if system.dimension == 2 else float(values[i]),
            "N": int(Ns[i]),
        }
        for i, idx in enumerate(accepted)
    ]
    payloads = [
        {
            "system": system.model_dump(mode="json"),
            "rho": rho,
            "seed": config.seed,
            "stream": [rho_idx, STARTS],
            "centers": centers[lo:hi],
            "n_starts": config.n_starts_per_center,
        }
        for lo, hi in chunk_ranges(len(centers))
    ]
    per_center = [counts for chunk in map_chunks(visit_counts_chunk, payloads) for counts in chunk]
    samples = np.array([s for counts in per_center for s in counts], dtype=np.int64)

    pmf = stats_service.empirical_pmf(samples)
    poisson = stats_service.poisson_pmf_vector(config.t_param, pmf.k_max)
    sup, tv = stats_service.poisson_distances(
        samples, config.t_param, config.seed, (rho_idx,), config.bootstrap_resamples
    )
    records = [
        CenterRecord(
            index=c["index"],
            center=np.atleast_1d(c["value"]).tolist(),
            mu_ball=float(mu[i]),
            N=c["N"],
            mean_visits=float(np.mean(counts)),
            sup_distance=stats_service.sup_distance(stats_service.empirical_pmf(counts), config.t_param),
        )
        for i, (c, counts) in enumerate(zip(centers, per_center))
    ]
    logger.info(
        f"rho={rho}: {len(accepted)} centers ({excluded} excluded, {unknown} unknown), "
        f"sup distance {sup.value:.4f}, TV {tv.value:.4f}"
    )
    return RhoRecord(
        rho=rho,
        mu_ball=float(mu.mean()),
        mu_ball_se=float(mu_se.mean()),
        N=int(np.median(Ns)),
        horizon_J=short_return_horizon(rho, a_frak),
        pmf=pmf.masses.tolist(),
        poisson=poisson.tolist(),
        sup_distance=sup,
        tv_distance=tv,
        n_centers=len(accepted),
        n_excluded=excluded,
        n_unknown=unknown,
        centers=records,
    )


def _decay_fit(records: List[RhoRecord]):
    if len(records) < 3:
        return None
    try:
        return stats_service.fit_log_decay([(r.rho, r.sup_distance.value) for r in records])
    except InsufficientDataError as e:
        logger.warning(f"Skipping decay fit: {e}")
        return None


def run_return_stats(config: ExperimentConfig) -> ExperimentResult:
    system, a_frak = _resolve(config)
    logger.info(f"Return statistics for {system.kind.value} over {len(config.rho_grid)} radii")
    records = [_rho_record(system, config, a_frak, i, rho) for i, rho in enumerate(config.rho_grid)]
    return ExperimentResult(records=records, decay_fit=_decay_fit(records), metadata=_metadata(config, system, a_frak))


def run_short_return_scan(config: ExperimentConfig) -> ShortReturnScanResult:
    """V_rho brackets and the radius inflation table for every radius.

    Every radius screens the same centers, so the estimates are comparable across the grid.
    """
    system, a_frak = _resolve(config)
    rows = []
    for rho in config.rho_grid:
        estimate = estimate_V_measure(system, rho, a_frak, config.v_samples, config.seed, stream=(SHORT_RETURN,))
        table = inflation_table(system.lipschitz_A, estimate.horizon_J, config.b_frak, rho)
        rows.append(ShortReturnScanRow(rho=rho, estimate=estimate, inflation=table))
    return ShortReturnScanResult(rows=rows, metadata=_metadata(config, system, a_frak))


def run_scaling(config: ExperimentConfig) -> ExperimentResult:
    """Return statistics, the decay fit and V_rho brackets in one result."""
    result = run_return_stats(config)
    scan = run_short_return_scan(config)
    estimates = {repr(row.rho): row.estimate for row in scan.rows}
    return result.model_copy(update={"v_estimates": estimates})


# ---------------------------------------------------------------------------
# Chen-Stein suite
# ---------------------------------------------------------------------------

def _instance(label: str, model, t_param: float, p_gap: int) -> ChenSteinInstance:
    report = chenstein_service.chen_stein_report(model, t_param, p_gap)
    pmf = chenstein_service.exact_S_pmf(model, report.N)
    deviations = chenstein_service.deviation_report(pmf, report)
    violations = deviations.singleton_violations + deviations.interval_violations
    if violations:
        logger.warning(f"{label}: {violations} bound violations")
    return ChenSteinInstance(
        label=label,
        model=model.model_dump(),
        eps=report.eps,
        t_param=t_param,
        N=report.N,
        p_gap=p_gap,
        R1=report.R1,
        R2=report.R2,
        R1_argmax=report.R1_argmax,
        bound_per_k=report.bound_per_k,
        binomial_poisson_term=report.binomial_poisson_term,
        exact_pmf=pmf.tolist(),
        max_singleton_deviation=deviations.max_singleton,
        max_interval_deviation=deviations.max_interval,
        singleton_bound=deviations.worst_singleton_bound,
        singleton_ratio=deviations.max_singleton / deviations.worst_singleton_bound,
        violations=violations,
    )


def random_markov(config: ChenSteinSuiteConfig, index: int) -> Tuple[TwoStateMarkov, int, float]:
    """Markov instance `index` with its N and a t giving floor(t/eps) = N."""
    rng = stream_rng(config.seed, CHEN_STEIN, index)
    p01, p10 = rng.uniform(0.05, 0.95, size=2)
    model = TwoStateMarkov(transition=[[1.0 - p01, p01], [p10, 1.0 - p10]], initial=config.initial)
    N = int(rng.integers(max(config.p_values) + 2, config.N_max + 1))
    eps = p01 / (p01 + p10)
    return model, N, (N + 0.5) * eps


def run_chen_stein_suite(config: ChenSteinSuiteConfig) -> ChenSteinSuiteResult:
    if config.N_max > settings.DP_BUDGET:
        raise ConfigError(f"N_max = {config.N_max} exceeds the dynamic-programming budget {settings.DP_BUDGET}")
    if config.N_max < max(config.p_values) + 2:
        raise ConfigError(f"N_max must be at least max(p_values) + 2 = {max(config.p_values) + 2}")
    instances = []
    for eps in config.iid_eps:
        for t in config.iid_t:
            N = math.floor(t / eps)
            if not eps < t / 2.0:
                logger.warning(f"Skipping IID eps={eps}, t={t}: needs eps < t/2")
                continue
            for p in config.p_values:
                if p < N - 1:
                    instances.append(_instance(f"iid-eps{eps}-t{t}-p{p}", IIDBernoulli(eps=eps), t, p))
    for i in range(config.n_markov):
        model, N, t = random_markov(config, i)
        for p in config.p_values:
            if p < N - 1:
                instances.append(_instance(f"markov-{i}-p{p}", model, t, p))
    gaps = [
        chenstein_service.binomial_poisson_tv(N, t).model_dump()
        for N in config.binomial_N
        for t in config.iid_t
        if t <= N
    ]
    total = sum(i.violations for i in instances) + sum(1 for g in gaps if g["exact_tv"] > g["bound"])
    logger.info(f"Chen-Stein suite: {len(instances)} instances, {total} violations")
    return ChenSteinSuiteResult(
        instances=instances,
        binomial_poisson=gaps,
        total_violations=total,
        metadata={**_versions(), "config": config.model_dump(mode="json", exclude={"output_dir"})},
    )


# ---------------------------------------------------------------------------
# Tower checks
# ---------------------------------------------------------------------------

def run_tower_checks(config: TowerCheckConfig) -> TowerCheckResult:
    reports = []
    for lam in config.lambda_values:
        tower = tower_service.build_tower(lam, config.max_R, config.n_beams_per_height)
        wobbled = tower_service.build_tower(
            lam, config.max_R, config.n_beams_per_height, slope_wobble=config.slope_wobble
        )
        s_range = tower_service.default_s_range(tower)
        kac = tower_service.kac_ratio(tower, config.kac_steps, config.seed)
        if kac.z_score > 3.0:
            logger.warning(f"Kac ratio for lambda={lam} is {kac.z_score:.1f} standard errors off")
        reports.append(
            TowerLambdaReport(
                lambda_tail=lam,
                theta=(lam - 1.0) / 2.0,
                omega_slope=tower_service.check_omega_decay(tower, s_range),
                omega_table=[[s, tower_service.omega(tower, s)] for s in s_range],
                kac=kac,
                distortion_linear=tower_service.check_distortion(
                    tower, config.distortion_samples, config.distortion_q, config.seed
                ),
                distortion_wobble=tower_service.check_distortion(
                    wobbled, config.distortion_samples, config.distortion_q, config.seed
                ),
                distortion_wobble_bound=tower_service.distortion_bound(wobbled),
                tail_constant=tower.C1_tail,
                truncated_mass=tower.truncated_mass,
            )
        )
    tails = {}
    for alpha in config.intermittent_alphas:
        system = make_system(SystemConfig(kind=SystemKind.INTERMITTENT, alpha_pm=alpha))
        tails[repr(alpha)] = tower_service.intermittent_return_tail(system, config.tail_samples, config.seed)
    return TowerCheckResult(
        towers=reports,
        intermittent_tails=tails,
        metadata={**_versions(), "config": config.model_dump(mode="json", exclude={"output_dir"})},
    )


RUNNERS = {
    "return-stats": run_return_stats,
    "short-returns": run_short_return_scan,
    "scaling": run_scaling,
    "chen-stein": run_chen_stein_suite,
    "tower": run_tower_checks,
}


def run_experiment(kind: str, config: BaseModel) -> BaseModel:
    if kind not in RUNNERS:
        raise ConfigError(f"unknown experiment {kind!r}; choose one of {sorted(RUNNERS)}")
    return RUNNERS[kind](config)
