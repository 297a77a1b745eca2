"""Command-line experiment runner.

    python -m app.cli return-stats --config run.toml --seed 7 --rho 0.00390625 0.0009765625
"""
import argparse
import logging
import sys
import time
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Dict, List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ReturnStatsError

logger = logging.getLogger(__name__)

SYSTEM_SUBCOMMANDS = ("return-stats", "short-returns", "scaling")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--seed", type=int, required=True, help="Seed for every random stream")
    parser.add_argument("--output-dir", dest="output_dir", help="Directory for result files")
    parser.add_argument("--workers", type=int, help="Chunks the Monte Carlo work is split into")
    parser.add_argument("--log-level", dest="log_level", default=settings.LOG_LEVEL)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="app.cli", description="Return-time statistics experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    for name in SYSTEM_SUBCOMMANDS:
        p = sub.add_parser(name)
        _add_common(p)
        p.add_argument("--system", dest="system.kind", choices=["doubling", "cat", "intermittent", "gauss"])
        p.add_argument("--alpha", dest="system.alpha_pm", type=float)
        p.add_argument("--metric", dest="system.metric", choices=["interval", "torus_max", "torus_euclid"])
        p.add_argument("--t", dest="t_param", type=float)
        p.add_argument("--rho", dest="rho_grid", type=float, nargs="+")
        p.add_argument("--n-centers", dest="n_centers", type=int)
        p.add_argument("--n-starts", dest="n_starts_per_center", type=int)
        p.add_argument("--a-frak", dest="a_frak", type=float)
        p.add_argument("--b-frak", dest="b_frak", type=float)
        p.add_argument("--v-samples", dest="v_samples", type=int)
        p.add_argument("--bootstrap", dest="bootstrap_resamples", type=int)

    p = sub.add_parser("chen-stein")
    _add_common(p)
    p.add_argument("--n-markov", dest="n_markov", type=int)
    p.add_argument("--n-max", dest="N_max", type=int)
    p.add_argument("--p", dest="p_values", type=int, nargs="+")
    p.add_argument("--initial", dest="initial", type=float, nargs=2, help="Start law of every Markov instance")

    p = sub.add_parser("tower")
    _add_common(p)
    p.add_argument("--lambda", dest="lambda_values", type=float, nargs="+")
    p.add_argument("--max-r", dest="max_R", type=int)
    p.add_argument("--beams", dest="n_beams_per_height", type=int)
    p.add_argument("--kac-steps", dest="kac_steps", type=int)
    p.add_argument("--wobble", dest="slope_wobble", type=float)
    p.add_argument("--alphas", dest="intermittent_alphas", type=float, nargs="+")
    p.add_argument("--tail-samples", dest="tail_samples", type=int)
    return parser


def load_document(path: Optional[str]) -> Dict:
    if not path:
        return {}
    with open(path, "rb") as f:
        return tomllib.load(f)


def apply_overrides(document: Dict, args: argparse.Namespace) -> Dict:
    """Flags win over config keys; dotted destinations address nested tables."""
    skip = {"command", "config", "workers", "log_level"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        target = document
        *parents, leaf = key.split(".")
        for parent in parents:
            target = target.setdefault(parent, {})
        target[leaf] = value
    return document


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    if args.workers is not None:
        settings.WORKERS = max(args.workers, 1)

    # Import at runtime so --help stays fast
    from app.services.experiment_service import parse_config, run_experiment
    from app.services.output_service import write_outputs

    started = time.perf_counter()
    try:
        document = apply_overrides(load_document(args.config), args)
        document.setdefault("output_dir", settings.OUTPUT_DIR)
        config = parse_config(args.command, document)
        result = run_experiment(args.command, config)
        files = write_outputs(args.command, result, config.output_dir)
    except (OSError, tomllib.TOMLDecodeError) as e:
        logger.error(f"Cannot read configuration: {e}")
        return 2
    except ValidationError as e:
        logger.error(f"Invalid configuration: {e}")
        return 2
    except ReturnStatsError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 1

    logger.info(f"{args.command} finished in {time.perf_counter() - started:.1f}s; wrote {', '.join(files)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
