from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class Settings(BaseSettings):
    # Core Application Settings
    PROJECT_NAME: str = "Event-Triggered L2 Control Toolkit"
    VERSION: str = "1.0.0"
    API_V1_STR: str = "/api/v1"
    LOG_LEVEL: str = "INFO"

    # Integration defaults (seconds). dt=1e-3 resolves the 0.007 s gaps of the
    # infinity-norm example by at least 7 steps.
    DEFAULT_DT: float = 1e-3
    DEFAULT_EVENT_TOL: float = 1e-6

    # Event accumulation guard: rate measured over the last ZENO_WINDOW_EVENTS events
    MAX_EVENTS_PER_UNIT_TIME: float = 1e4
    ZENO_WINDOW_EVENTS: int = 10
    DIVERGENCE_BOUND: float = 1e6

    # Experiment harness
    OUTPUT_DIR: str = "outputs"
    MC_WORKERS: int = 0
    DEFAULT_N_IC: int = 100
    DEFAULT_SEED: int = 20240101

    # Verification slacks
    GAIN_TOLERANCE: float = 1e-3
    RESIDUAL_TOLERANCE: float = 1e-3

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="ETC_",
        extra="ignore"
    )


@lru_cache
def get_settings() -> Settings:
    """
    Cached settings. Environment and .env are read once per process;
    Monte-Carlo workers rebuild their own copy on import.
    """
    return Settings()


settings = get_settings()
