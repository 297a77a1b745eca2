import uuid
from typing import Any, Dict

from fastapi import APIRouter, Body, HTTPException
from pydantic import ValidationError

from app.core.errors import ConfigError
from app.models.schemas import TaskResponse
from app.services.experiment_service import EXPERIMENT_CONFIGS, parse_config
from app.tasks.experiment_tasks import run_experiment

router = APIRouter()


@router.get("/experiments")
async def list_experiments():
    """Experiment kinds accepted by the submit endpoint"""
    return {"kinds": sorted(EXPERIMENT_CONFIGS)}


@router.post("/experiments/{kind}", response_model=TaskResponse)
async def submit_experiment_endpoint(kind: str, config: Dict[str, Any] = Body(...)):
    """Validate an experiment configuration and queue the run"""
    if kind not in EXPERIMENT_CONFIGS:
        raise HTTPException(status_code=404, detail=f"Unknown experiment kind: {kind}")
    try:
        parse_config(kind, config)
    except (ValidationError, ConfigError) as e:
        raise HTTPException(status_code=422, detail=str(e))

    task_id = str(uuid.uuid4())

    # Send task to Celery
    run_experiment.delay(kind, config, task_id)

    return TaskResponse(
        task_id=task_id,
        message=f"{kind} experiment started. Use the task_id to check the status.",
    )
