import pytest

from app.core.config import settings
from app.models.systems import Metric, SystemConfig, SystemKind
from app.services.systems_service import make_system


@pytest.fixture(autouse=True)
def eager_chunks(monkeypatch):
    """Chunk tasks run in-process; no broker is needed."""
    from app.core.celery_app import celery_app

    monkeypatch.setattr(celery_app.conf, "task_always_eager", True)
    monkeypatch.setattr(settings, "WORKERS", 2)


@pytest.fixture
def doubling():
    return make_system(SystemConfig(kind=SystemKind.DOUBLING))


@pytest.fixture
def cat():
    return make_system(SystemConfig(kind=SystemKind.CAT_MAP))


@pytest.fixture
def cat_euclid():
    return make_system(SystemConfig(kind=SystemKind.CAT_MAP, metric=Metric.TORUS_EUCLID))


@pytest.fixture
def intermittent():
    return make_system(SystemConfig(kind=SystemKind.INTERMITTENT, alpha_pm=0.2, birkhoff_length=400_000))


@pytest.fixture
def gauss():
    return make_system(SystemConfig(kind=SystemKind.GAUSS))
