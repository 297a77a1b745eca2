import json
import asyncio
import logging

from fastapi import APIRouter
from fastapi.responses import JSONResponse
from redis import Redis
from sse_starlette.sse import EventSourceResponse

from app.core.config import settings

logger = logging.getLogger(__name__)

router = APIRouter()

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

logger.debug(f"[API] Connecting to Redis at {settings.REDIS_HOST}:{settings.REDIS_PORT}")

FINAL_STATES = ("completed", "failed")
POLL_INTERVAL = 0.5
POLL_LIMIT = 7200  # experiments run for minutes, not seconds


@router.get("/tasks/{task_id}")
async def get_task_result_endpoint(task_id: str):
    """Get the status of an experiment task by its ID"""
    task_result = redis_client.get(f"task:{task_id}")

    if not task_result:
        return JSONResponse(status_code=404, content={"error": "Task not found"})

    return json.loads(task_result)


@router.get("/tasks/{task_id}/stream")
async def stream_task_result(task_id: str):
    """Stream task status updates using Server-Sent Events"""

    async def event_generator():
        # Initial delay to allow task to be registered
        await asyncio.sleep(POLL_INTERVAL)

        task_result = None
        last_sent = None
        for _ in range(POLL_LIMIT):
            task_result = redis_client.get(f"task:{task_id}")

            if task_result:
                if task_result != last_sent:
                    yield {"event": "update", "data": task_result}
                    last_sent = task_result

                if json.loads(task_result).get("status") in FINAL_STATES:
                    break

            await asyncio.sleep(POLL_INTERVAL)

        # Send a final event if we time out
        if not task_result or json.loads(task_result).get("status") not in FINAL_STATES:
            yield {
                "event": "timeout",
                "data": json.dumps({"status": "timeout", "error": "Task processing timed out"}),
            }

    return EventSourceResponse(event_generator())
