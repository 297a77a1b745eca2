import json
import logging
from typing import Dict

from celery import Task
from redis import Redis

from app.core.celery_app import celery_app
from app.core.config import settings
from app.models.common import TaskResult

# Set up logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Initialize Redis client
redis_client = Redis(
    host=settings.REDIS_HOST,
    port=settings.REDIS_PORT,
    db=settings.REDIS_DB,
    password=settings.REDIS_PASSWORD,
    socket_timeout=5,
    socket_connect_timeout=5,
    retry_on_timeout=True,
    decode_responses=True,
)


class ExperimentTask(Task):
    """Base task for whole experiments submitted over HTTP"""

    def update_state(self, task_id, status, result=None, error=None, progress=None):
        """Update task state in Redis"""
        task_data = TaskResult(status=status, result=result, error=error, progress=progress).model_dump()
        redis_client.set(f"task:{task_id}", json.dumps(task_data))


@celery_app.task(base=ExperimentTask, bind=True, name="app.tasks.experiment_tasks.run_experiment")
def run_experiment(self, kind: str, config: Dict, task_id: str):
    """
    Run one experiment and write its files

    Args:
        kind: subcommand name (return-stats, chen-stein, tower, short-returns, scaling)
        config: experiment configuration document
        task_id: Unique ID for tracking the task
    """
    self.update_state(task_id, "processing", progress=f"running {kind}")
    logger.info(f"Starting {kind} experiment task {task_id}")

    try:
        # Import at runtime to avoid circular import
        from app.services.experiment_service import parse_config, run_experiment as run
        from app.services.output_service import write_outputs

        parsed = parse_config(kind, config)
        result = run(kind, parsed)
        files = write_outputs(kind, result, parsed.output_dir)
        summary = {"kind": kind, "files": files}
        self.update_state(task_id, "completed", result=summary)
        logger.info(f"Experiment task {task_id} completed with {len(files)} files")
        return summary

    except Exception as e:
        logger.error(f"Experiment task {task_id} failed: {e}")
        self.update_state(task_id, "failed", error=str(e))
        return {"status": "failed", "error": str(e)}
