import logging
from typing import Dict, List, Optional

from app.core.celery_app import celery_app
from app.models.systems import SystemSpec

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@celery_app.task(name="app.tasks.monte_carlo_tasks.screen_centers_chunk")
def screen_centers_chunk(
    system: Dict,
    rho: float,
    a_frak: float,
    seed: int,
    stream: List[int],
    start: int,
    stop: int,
    method: str = "auto",
) -> List[List[Optional[int]]]:
    """Short-return verdicts for candidate centers start..stop-1."""
    # Import at runtime to avoid circular import
    from app.services.orbit_service import screen_centers

    spec = SystemSpec.model_validate(system)
    verdicts = screen_centers(spec, rho, a_frak, seed, stream, start, stop, method)
    return [[status, witness] for status, witness in verdicts]


@celery_app.task(name="app.tasks.monte_carlo_tasks.visit_counts_chunk")
def visit_counts_chunk(
    system: Dict,
    rho: float,
    seed: int,
    stream: List[int],
    centers: List[Dict],
    n_starts: int,
) -> List[List[int]]:
    """Visit counts S for n_starts starts of each center in the chunk."""
    from app.services.orbit_service import center_visit_counts

    spec = SystemSpec.model_validate(system)
    logger.debug(f"Counting visits for {len(centers)} centers at rho={rho}")
    return center_visit_counts(spec, rho, seed, stream, centers, n_starts)
