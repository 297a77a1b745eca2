from app.models.common import TaskResponse, TaskResult
from app.models.systems import BallSpec, SystemSpec, SystemConfig
from app.models.orbit import HitSeries, ShortReturnVerdict, VMeasureEstimate
from app.models.tower import TowerSpec, TowerPoint, CylinderIndex, AssumptionParams
from app.models.chenstein import BinaryProcessModel, ChenSteinReport
from app.models.stats import EmpiricalPmf, DecayFit
from app.models.experiment import ExperimentConfig, ExperimentResult, ChenSteinSuiteConfig, TowerCheckConfig

__all__ = [
    "TaskResponse",
    "TaskResult",
    "BallSpec",
    "SystemSpec",
    "SystemConfig",
    "HitSeries",
    "ShortReturnVerdict",
    "VMeasureEstimate",
    "TowerSpec",
    "TowerPoint",
    "CylinderIndex",
    "AssumptionParams",
    "BinaryProcessModel",
    "ChenSteinReport",
    "EmpiricalPmf",
    "DecayFit",
    "ExperimentConfig",
    "ExperimentResult",
    "ChenSteinSuiteConfig",
    "TowerCheckConfig",
]
