import logging
from typing import Dict, List, Optional, Sequence, Tuple

from celery import group

from app.core.celery_app import celery_app
from app.core.config import settings

logger = logging.getLogger(__name__)


def chunk_ranges(total: int, workers: Optional[int] = None) -> List[Tuple[int, int]]:
    """Split range(total) into contiguous index blocks, a few per worker."""
    workers = max(workers or settings.WORKERS, 1)
    n_chunks = max(min(total, 4 * workers), 1)
    edges = [total * i // n_chunks for i in range(n_chunks + 1)]
    return [(lo, hi) for lo, hi in zip(edges, edges[1:]) if hi > lo]


def map_chunks(task, payloads: Sequence[Dict]) -> List:
    """Run `task` once per payload and return the results in payload order.

    Chunk results only depend on their payload, so results are identical whether the
    chunks run inline or on the monte-carlo queue.
    """
    if not payloads:
        return []
    if celery_app.conf.task_always_eager:
        return [task.apply(kwargs=dict(p)).get() for p in payloads]
    logger.info(f"Dispatching {len(payloads)} chunks of {task.name}")
    job = group(task.s(**p) for p in payloads).apply_async()
    return job.get(timeout=settings.CHUNK_TIMEOUT, disable_sync_subtasks=False)
