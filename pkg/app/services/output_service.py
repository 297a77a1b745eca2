import logging
import os
from typing import Dict, List

import pandas as pd
from pydantic import BaseModel

from app.core.errors import OutputError
from app.models.experiment import (
    ChenSteinSuiteResult,
    ExperimentResult,
    ShortReturnScanResult,
    TowerCheckResult,
)

logger = logging.getLogger(__name__)

TIDY_COLUMNS = ["rho", "k", "empirical_mass", "poisson_mass"]
SUMMARY_COLUMNS = [
    "rho",
    "t_param",
    "mu_ball",
    "mu_ball_se",
    "N",
    "horizon_J",
    "sup_distance",
    "sup_ci_low",
    "sup_ci_high",
    "tv_distance",
    "tv_ci_low",
    "tv_ci_high",
    "n_centers",
    "n_excluded",
    "n_unknown",
    "kappa_hat",
]
CENTER_COLUMNS = ["rho", "index", "mu_ball", "N", "mean_visits", "sup_distance"]
V_COLUMNS = ["rho", "horizon_J", "lower", "upper", "se", "se_lower", "samples", "n_intersects", "n_unknown"]
INFLATION_COLUMNS = ["rho", "n", "p", "log_s_p", "s_p", "inflated_rho", "n_prime", "in_range"]
CHEN_STEIN_COLUMNS = [
    "label",
    "eps",
    "t_param",
    "N",
    "p_gap",
    "R1",
    "R2",
    "bound_per_k",
    "binomial_poisson_term",
    "max_singleton_deviation",
    "max_interval_deviation",
    "singleton_bound",
    "singleton_ratio",
    "violations",
]
TOWER_COLUMNS = [
    "lambda_tail",
    "theta",
    "omega_slope",
    "kac_empirical",
    "kac_expected",
    "kac_se",
    "distortion_linear",
    "distortion_wobble",
    "distortion_wobble_bound",
    "tail_constant",
    "truncated_mass",
]


def _prepare(output_dir: str) -> None:
    try:
        os.makedirs(output_dir, exist_ok=True)
    except OSError as e:
        raise OutputError(output_dir, e.strerror or str(e))


def write_frame(rows: List[Dict], columns: List[str], path: str) -> str:
    frame = pd.DataFrame(rows, columns=columns)
    try:
        frame.to_csv(path, index=False)
    except OSError as e:
        raise OutputError(path, e.strerror or str(e))
    return path


def write_json(model: BaseModel, path: str) -> str:
    try:
        with open(path, "w") as f:
            f.write(model.model_dump_json(indent=2))
            f.write("\n")
    except OSError as e:
        raise OutputError(path, e.strerror or str(e))
    return path


def emit_plot_data(result: ExperimentResult, output_dir: str) -> Dict[str, str]:
    """Tidy (rho, k) masses and the per-rho summary as CSV."""
    _prepare(output_dir)
    t_param = result.metadata.config.get("t_param") if result.metadata else None
    kappa = result.decay_fit.kappa_hat if result.decay_fit else None
    tidy, summary = [], []
    for record in result.records:
        for k, (emp, poi) in enumerate(zip(record.pmf, record.poisson)):
            tidy.append({"rho": record.rho, "k": k, "empirical_mass": emp, "poisson_mass": poi})
        summary.append(
            {
                "rho": record.rho,
                "t_param": t_param,
                "mu_ball": record.mu_ball,
                "mu_ball_se": record.mu_ball_se,
                "N": record.N,
                "horizon_J": record.horizon_J,
                "sup_distance": record.sup_distance.value,
                "sup_ci_low": record.sup_distance.low,
                "sup_ci_high": record.sup_distance.high,
                "tv_distance": record.tv_distance.value,
                "tv_ci_low": record.tv_distance.low,
                "tv_ci_high": record.tv_distance.high,
                "n_centers": record.n_centers,
                "n_excluded": record.n_excluded,
                "n_unknown": record.n_unknown,
                "kappa_hat": kappa,
            }
        )
    return {
        "tidy": write_frame(tidy, TIDY_COLUMNS, os.path.join(output_dir, "pmf_tidy.csv")),
        "summary": write_frame(summary, SUMMARY_COLUMNS, os.path.join(output_dir, "summary.csv")),
    }


def emit_center_data(result: ExperimentResult, output_dir: str) -> str:
    rows = [
        {
            "rho": record.rho,
            "index": c.index,
            "mu_ball": c.mu_ball,
            "N": c.N,
            "mean_visits": c.mean_visits,
            "sup_distance": c.sup_distance,
        }
        for record in result.records
        for c in record.centers
    ]
    return write_frame(rows, CENTER_COLUMNS, os.path.join(output_dir, "centers.csv"))


def _v_rows(estimates: Dict) -> List[Dict]:
    return [
        {
            "rho": float(rho),
            "horizon_J": e.horizon_J,
            "lower": e.lower,
            "upper": e.upper,
            "se": e.se,
            "se_lower": e.se_lower,
            "samples": e.samples,
            "n_intersects": e.n_intersects,
            "n_unknown": e.n_unknown,
        }
        for rho, e in estimates.items()
    ]


def write_outputs(kind: str, result: BaseModel, output_dir: str) -> List[str]:
    """Write every file a subcommand produces and return their paths."""
    _prepare(output_dir)
    paths: List[str] = []
    if isinstance(result, ExperimentResult):
        name = "scaling" if kind == "scaling" else "return_stats"
        paths.append(write_json(result, os.path.join(output_dir, f"{name}.json")))
        paths.extend(emit_plot_data(result, output_dir).values())
        paths.append(emit_center_data(result, output_dir))
        if result.v_estimates:
            paths.append(write_frame(_v_rows(result.v_estimates), V_COLUMNS, os.path.join(output_dir, "v_estimates.csv")))
    elif isinstance(result, ShortReturnScanResult):
        paths.append(write_json(result, os.path.join(output_dir, "short_returns.json")))
        rows = _v_rows({str(row.rho): row.estimate for row in result.rows})
        paths.append(write_frame(rows, V_COLUMNS, os.path.join(output_dir, "v_estimates.csv")))
        inflation = [{"rho": row.rho, **r.model_dump()} for row in result.rows for r in row.inflation]
        paths.append(write_frame(inflation, INFLATION_COLUMNS, os.path.join(output_dir, "inflation.csv")))
    elif isinstance(result, ChenSteinSuiteResult):
        paths.append(write_json(result, os.path.join(output_dir, "chen_stein.json")))
        rows = [i.model_dump(include=set(CHEN_STEIN_COLUMNS)) for i in result.instances]
        paths.append(write_frame(rows, CHEN_STEIN_COLUMNS, os.path.join(output_dir, "chen_stein.csv")))
    elif isinstance(result, TowerCheckResult):
        paths.append(write_json(result, os.path.join(output_dir, "tower.json")))
        rows = [
            {
                **t.model_dump(exclude={"kac", "omega_table"}),
                "kac_empirical": t.kac.empirical,
                "kac_expected": t.kac.expected,
                "kac_se": t.kac.se,
            }
            for t in result.towers
        ]
        paths.append(write_frame(rows, TOWER_COLUMNS, os.path.join(output_dir, "tower.csv")))
    else:
        raise TypeError(f"no writer for {type(result).__name__}")
    logger.info(f"Wrote {len(paths)} files to {output_dir}")
    return paths
