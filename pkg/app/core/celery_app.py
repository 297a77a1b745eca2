import logging

from celery import Celery
from app.core.config import settings

logger = logging.getLogger(__name__)
logger.debug(f"Setting up Celery with Redis host: {settings.REDIS_HOST}")

celery_app = Celery(
    "worker",
    broker_url=settings.CELERY_BROKER_URL,
    result_backend=settings.CELERY_RESULT_BACKEND,
    broker_transport_options={
        'visibility_timeout': 3600,
        'fanout_prefix': True,
        'fanout_patterns': True,
        'socket_connect_timeout': 5,
        'socket_timeout': 5,
        'retry_on_timeout': True,
    },
    redis_socket_timeout=5,
    redis_socket_connect_timeout=5,
    redis_retry_on_timeout=True,
    broker_connection_retry_on_startup=True,
)

celery_app.conf.task_routes = {
    "app.tasks.monte_carlo_tasks.*": {"queue": "monte-carlo"},
    "app.tasks.experiment_tasks.*": {"queue": "experiments"},
}

celery_app.conf.update(
    task_track_started=True,
    task_serializer="json",
    result_serializer="json",
    accept_content=["json"],
    result_expires=3600,  # 1 hour
    task_always_eager=settings.CELERY_TASK_ALWAYS_EAGER,
    task_eager_propagates=True,
    broker_connection_retry_on_startup=True,
)

# Import tasks modules to register tasks with Celery
import app.tasks.monte_carlo_tasks
import app.tasks.experiment_tasks
