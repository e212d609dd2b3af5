"""
Runtime Configuration
"""
from functools import lru_cache
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="DIG_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging
    log_level: str = "WARNING"

    # Detection thresholds (ticks / reroute count)
    mc_window: int = 10
    oe_window: int = 5
    dl_window: int = 5
    er_max_reroutes: int = 3

    # Run limits
    max_ticks: int = 100_000
    max_wall_seconds: float = 60.0
    idle_limit: int = 30

    # Honest pipeline
    fanout: int = 2

    # Concurrent mode
    worker_threads: int = 4

    # External decide adapter (ships disabled)
    llm_policy_enabled: bool = False
    llm_policy_url: str = "http://localhost:8100/decide"
    llm_policy_timeout_sec: float = 30.0


@lru_cache()
def get_settings() -> Settings:
    return Settings()
