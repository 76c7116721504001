"""
Centralized logging system for the FEENet project.
Built on loguru: a console sink tagged with component and operation, and a
rotating file sink for full diagnostics.
"""

import sys
from pathlib import Path
from typing import Optional, Union

from loguru import logger as _root_logger


CONSOLE_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | "
    "<cyan>[{extra[component]}{extra[operation_tag]}]</cyan> - <level>{message}</level>"
)
FILE_FORMAT = (
    "{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | [{extra[component]}{extra[operation_tag]}] "
    "{name}:{function}:{line} - {message}"
)

_root_logger.configure(extra={'component': 'general', 'operation_tag': ''})


def configure_logging(level: str = "INFO", log_path: Optional[Union[str, Path]] = None) -> None:
    """
    Install the console and (optionally) file sinks.

    Args:
        level: Minimum level for the console sink
        log_path: Directory for ``feenet.log``; no file sink when None
    """
    _root_logger.remove()
    _root_logger.add(sys.stderr, level=level.upper(), format=CONSOLE_FORMAT)

    if log_path is not None:
        log_dir = Path(log_path)
        log_dir.mkdir(parents=True, exist_ok=True)
        _root_logger.add(
            log_dir / "feenet.log",
            level="DEBUG",
            format=FILE_FORMAT,
            rotation="10 MB",
            retention="7 days",
            encoding="utf-8",
        )


class ComponentLogger:
    """Logger wrapper that adds component context."""

    def __init__(self, component: str):
        self.component = component
        self.logger = _root_logger.bind(component=component)

    def _log(self, level: str, message: str, operation: str = '', extra_data: Optional[dict] = None,
             exception: bool = False):
        """Internal logging method that adds component context."""
        bound = self.logger.bind(operation_tag=f":{operation}" if operation else '', **(extra_data or {}))
        if exception:
            bound = bound.opt(exception=True)
        bound.log(level, message)

    def debug(self, message: str, operation: str = '', extra_data: Optional[dict] = None):
        self._log("DEBUG", message, operation, extra_data)

    def info(self, message: str, operation: str = '', extra_data: Optional[dict] = None):
        self._log("INFO", message, operation, extra_data)

    def warning(self, message: str, operation: str = '', extra_data: Optional[dict] = None):
        self._log("WARNING", message, operation, extra_data)

    def error(self, message: str, operation: str = '', extra_data: Optional[dict] = None):
        self._log("ERROR", message, operation, extra_data)

    def critical(self, message: str, operation: str = '', extra_data: Optional[dict] = None):
        self._log("CRITICAL", message, operation, extra_data)

    def exception(self, message: str, operation: str = '', extra_data: Optional[dict] = None):
        self._log("ERROR", message, operation, extra_data, exception=True)


def get_logger(component: str = 'general') -> ComponentLogger:
    """Get a logger instance for a specific component."""
    return ComponentLogger(component)


def log_operation_start(component: str, operation: str, details: Optional[dict] = None):
    """Log the start of an operation."""
    get_logger(component).info(f"Starting {operation}", operation, details)


def log_operation_success(component: str, operation: str, details: Optional[dict] = None):
    """Log successful completion of an operation."""
    get_logger(component).info(f"Completed {operation}", operation, details)


def log_operation_error(component: str, operation: str, error: Exception, details: Optional[dict] = None):
    """Log an operation error with exception details."""
    error_details = dict(details or {})
    error_details.update({
        'error_type': type(error).__name__,
        'error_message': str(error)
    })
    get_logger(component).error(f"Failed {operation}: {error}", operation, error_details)
