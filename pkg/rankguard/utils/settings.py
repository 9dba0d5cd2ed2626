"""
settings.py - Environment configuration for rankguard.

Reads RANKGUARD_* variables (optionally from a .env file) once per process.
"""

import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv

from .errors import InvalidConfigError


DEFAULT_TABLE_DIGITS = 6


@dataclass(frozen=True)
class Settings:
    report_digits: int = DEFAULT_TABLE_DIGITS
    log_level: str = "INFO"
    log_dir: Optional[str] = None
    workers: Optional[int] = None


def _positive_int(name: str, raw: Optional[str]) -> Optional[int]:
    if raw is None or raw.strip() == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfigError(f"{name} must be a positive integer, found {raw!r}")
    if value <= 0:
        raise InvalidConfigError(f"{name} must be a positive integer, found {value}")
    return value


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """Load settings from the environment (and .env, if present)."""
    load_dotenv()
    digits = _positive_int("RANKGUARD_REPORT_DIGITS", os.getenv("RANKGUARD_REPORT_DIGITS"))
    return Settings(
        report_digits=digits or DEFAULT_TABLE_DIGITS,
        log_level=os.getenv("RANKGUARD_LOG_LEVEL", "INFO").upper(),
        log_dir=os.getenv("RANKGUARD_LOG_DIR") or None,
        workers=_positive_int("RANKGUARD_WORKERS", os.getenv("RANKGUARD_WORKERS")),
    )


def reload_settings() -> Settings:
    """Drop the cached settings and read the environment again."""
    get_settings.cache_clear()
    return get_settings()
