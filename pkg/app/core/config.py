from pydantic_settings import BaseSettings
from typing import Optional


class Settings(BaseSettings):
    API_V1_STR: str = "/api/v1"
    PROJECT_NAME: str = "Return Statistics Lab"
    VERSION: str = "0.3.0"
    LOG_LEVEL: str = "INFO"

    # Redis settings (broker, result backend and task status store)
    REDIS_HOST: str = "redis"
    REDIS_PORT: int = 6379
    REDIS_DB: int = 0
    REDIS_PASSWORD: Optional[str] = None

    # Chunk tasks run in-process unless a broker and workers are deployed
    CELERY_TASK_ALWAYS_EAGER: bool = True
    WORKERS: int = 4
    CHUNK_TIMEOUT: float = 3600.0

    # Exact representations
    GUARD_BITS: int = 64
    DEFAULT_HORIZON: int = 4096
    CAT_DENOMINATOR: int = 2**31 - 1

    # Invariant measure sampling and Birkhoff averages
    BURN_IN: int = 10_000
    BIRKHOFF_LENGTH: int = 10_000_000
    BIRKHOFF_BURN_IN: int = 1000
    GAUSS_CUTOFF: float = 0.25

    # Short-return tests
    MAX_INTERVAL_PIECES: int = 4096
    WITNESS_GRID: int = 64

    # Statistics
    BOOTSTRAP_RESAMPLES: int = 200
    CONFIDENCE: float = 0.95
    HISTOGRAM_GUARD: int = 10

    # Exact Chen-Stein computations
    DP_BUDGET: int = 10_000
    ENUMERATION_BUDGET: int = 20

    OUTPUT_DIR: str = "results"

    @property
    def REDIS_URL(self) -> str:
        if self.REDIS_PASSWORD:
            return f"redis://:{self.REDIS_PASSWORD}@{self.REDIS_HOST}:{self.REDIS_PORT}/{self.REDIS_DB}"
        return f"redis://{self.REDIS_HOST}:{self.REDIS_PORT}/{self.REDIS_DB}"

    @property
    def CELERY_BROKER_URL(self) -> str:
        return self.REDIS_URL

    @property
    def CELERY_RESULT_BACKEND(self) -> str:
        return self.REDIS_URL

    class Config:
        env_file = ".env"
        extra = "allow"


settings = Settings()
