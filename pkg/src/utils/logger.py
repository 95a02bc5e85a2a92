"""
Logging utilities for mdpreg

Log lines are JSON objects on stderr. Numpy scalars and small arrays passed
as keyword fields are converted so the renderer can serialize them, and a
run context (subcommand, seed) bound by the CLI is merged into every line.
"""
import logging
import sys
from typing import Any, Optional

import numpy as np
import structlog
from structlog import configure, get_logger
from structlog.contextvars import bind_contextvars, clear_contextvars, merge_contextvars
from structlog.stdlib import LoggerFactory

from src.config.settings import settings

# arrays longer than this are logged by shape only
MAX_LOGGED_ARRAY = 16


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        if value.size > MAX_LOGGED_ARRAY:
            return f"<array shape={value.shape}>"
        return value.tolist()
    return value


def numpy_fields(logger, method_name: str, event_dict: dict) -> dict:
    """structlog processor: numpy values in the event dict become builtins."""
    return {key: _to_builtin(value) for key, value in event_dict.items()}


def setup_logging(log_level: Optional[str] = None) -> None:
    """Setup structured logging for the application"""
    level = log_level or settings.log_level

    configure(
        processors=[
            merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            numpy_fields,
            structlog.processors.JSONRenderer(),
        ],
        context_class=dict,
        logger_factory=LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    # stdout carries the run report
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level.upper()),
        force=True,
    )


def bind_run_context(**fields: Any) -> None:
    """Replace the per-run fields attached to every subsequent log line."""
    clear_contextvars()
    bind_contextvars(**fields)


def get_application_logger(name: str = "mdpreg") -> structlog.stdlib.BoundLogger:
    """Get a structured logger for the application"""
    return get_logger(name)


setup_logging()
