from fastapi import APIRouter
from app.api.endpoints import experiments, tasks

api_router = APIRouter()
api_router.include_router(experiments.router, tags=["experiments"])
api_router.include_router(tasks.router, tags=["tasks"])
