"""
logger.py - Structured logging for rankguard.

Outputs to stderr (stdout carries report tables) and, when RANKGUARD_LOG_DIR
is set, to a dated log file.
"""

import sys
import logging
from datetime import datetime
from pathlib import Path
from typing import Optional

from .settings import get_settings


def setup_logger(
    name: str = "rankguard",
    log_dir: Optional[str] = None,
    log_level: Optional[int] = None,
) -> logging.Logger:
    """
    Set up a structured logger with a console handler and an optional file handler.
    
    Args:
        name: Logger name.
        log_dir: Directory for log files. None disables file logging.
        log_level: Logging level (default from RANKGUARD_LOG_LEVEL).
    
    Returns:
        Configured logger instance.
    """
    if log_level is None:
        log_level = default_level()
    if log_dir is None:
        log_dir = get_settings().log_dir
    
    logger = logging.getLogger(name)
    logger.setLevel(log_level)
    
    # Avoid adding duplicate handlers
    if logger.handlers:
        return logger
    
    formatter = logging.Formatter(
        fmt="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)
    
    if log_dir:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)
        log_file = log_path / f"rankguard_{datetime.now().strftime('%Y%m%d')}.log"
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    
    return logger


def default_level() -> int:
    """Level named by RANKGUARD_LOG_LEVEL, INFO when unset or unknown."""
    level = logging.getLevelName(get_settings().log_level)
    return level if isinstance(level, int) else logging.INFO


def set_level(level: int, name: str = "rankguard") -> None:
    """Change the level of the package logger and its handlers."""
    logger = logging.getLogger(name)
    logger.setLevel(level)
    for handler in logger.handlers:
        handler.setLevel(level)


def get_logger(module: str) -> logging.Logger:
    """Child logger for a rankguard module, e.g. get_logger("selection")."""
    return logging.getLogger(f"rankguard.{module}")
