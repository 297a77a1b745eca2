import logging

from app.core.celery_app import celery_app
from app.core.config import settings

# Make sure all tasks are imported for Celery to discover them
from app.tasks.monte_carlo_tasks import screen_centers_chunk, visit_counts_chunk
from app.tasks.experiment_tasks import run_experiment

logging.basicConfig(level=settings.LOG_LEVEL)

if __name__ == "__main__":
    # Run Celery worker
    celery_app.worker_main(["worker", "--loglevel=info", "-Q", "monte-carlo,experiments"])
