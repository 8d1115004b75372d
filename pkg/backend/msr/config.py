"""
Runtime configuration
Settings are read from the environment (and a local .env file when present)
"""

import os
import logging
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)


class Settings(BaseModel):
    """Tunable defaults; explicit function arguments always win"""
    log_level: str = "INFO"
    max_schedules: int = Field(default=200_000, gt=0)
    instability_guard: int = Field(default=1_000_000, gt=0)
    default_replications: int = Field(default=5, ge=1)
    ci_level: float = Field(default=0.95, gt=0.0, lt=1.0)
    csv_digits: int = Field(default=9, ge=1)
    api_host: str = "0.0.0.0"
    api_port: int = 8000


_ENV_FIELDS = {
    'MSR_LOG_LEVEL': 'log_level',
    'MSR_MAX_SCHEDULES': 'max_schedules',
    'MSR_INSTABILITY_GUARD': 'instability_guard',
    'MSR_DEFAULT_REPLICATIONS': 'default_replications',
    'MSR_CI_LEVEL': 'ci_level',
    'MSR_CSV_DIGITS': 'csv_digits',
    'MSR_API_HOST': 'api_host',
    'MSR_API_PORT': 'api_port',
}


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Load settings once per process"""
    load_dotenv()
    values = {}
    for env_name, field in _ENV_FIELDS.items():
        raw = os.environ.get(env_name)
        if raw is not None and raw.strip():
            values[field] = raw.strip()
    settings = Settings(**values)
    logger.debug(f"Loaded settings: {settings.model_dump()}")
    return settings
