"""
Structured logging for simulation runs and sweeps.
Provides run timing, metric records and optional JSON output.
"""

import json
import logging
import sys
import time
import uuid
from datetime import datetime
from enum import Enum
from functools import wraps
from pathlib import Path
from typing import Any, Callable, Dict, Optional, TypeVar

from config import STRUCTURED_LOG_ENABLED

F = TypeVar("F", bound=Callable[..., Any])


class LogLevel(Enum):
    """Log levels with corresponding numeric values."""
    DEBUG = logging.DEBUG
    INFO = logging.INFO
    WARNING = logging.WARNING
    ERROR = logging.ERROR
    CRITICAL = logging.CRITICAL


class PerformanceTracker:
    """Context manager for timing an operation."""

    def __init__(self, logger: "StructuredLogger", operation: str, **context: Any) -> None:
        self.logger = logger
        self.operation = operation
        self.context = context
        self.start_time: Optional[float] = None
        self.duration: Optional[float] = None

    def __enter__(self) -> "PerformanceTracker":
        self.start_time = time.perf_counter()
        self.logger.debug(f"Starting {self.operation}", extra={
            "operation": self.operation,
            "phase": "start",
            **self.context,
        })
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.duration = time.perf_counter() - (self.start_time or 0.0)

        log_data = {
            "operation": self.operation,
            "phase": "end",
            "duration_seconds": round(self.duration, 3),
            "duration_ms": round(self.duration * 1000, 1),
            **self.context,
        }

        if exc_type is not None:
            log_data["error"] = str(exc_val)
            log_data["error_type"] = exc_type.__name__
            self.logger.error(f"Failed {self.operation}", extra=log_data)
        else:
            self.logger.info(f"Completed {self.operation}", extra=log_data)


class StructuredFormatter(logging.Formatter):
    """Formatter emitting one JSON object per record."""

    RESERVED = {
        "name", "msg", "args", "levelname", "levelno", "pathname",
        "filename", "module", "lineno", "funcName", "created",
        "msecs", "relativeCreated", "thread", "threadName",
        "processName", "process", "getMessage", "exc_info",
        "exc_text", "stack_info", "taskName",
    }

    def format(self, record: logging.LogRecord) -> str:
        log_data: Dict[str, Any] = {
            "timestamp": datetime.fromtimestamp(record.created).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
        }

        for key, value in record.__dict__.items():
            if key not in self.RESERVED:
                log_data[key] = value

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str, ensure_ascii=False)


class ConsoleFormatter(logging.Formatter):
    """Compact console formatter that appends run context when present."""

    def format(self, record: logging.LogRecord) -> str:
        formatted = (
            f"[{record.levelname:8}] "
            f"{datetime.fromtimestamp(record.created).strftime('%H:%M:%S')} "
            f"{record.name}: {record.getMessage()}"
        )
        if hasattr(record, "duration_ms"):
            formatted += f" | {record.duration_ms}ms"
        if hasattr(record, "run_id"):
            formatted += f" | run {record.run_id}"
        return formatted


class StructuredLogger:
    """Logger wrapper that stamps every record with a run id."""

    def __init__(
        self,
        name: str,
        level: LogLevel = LogLevel.INFO,
        log_file: Optional[str] = None,
        enable_console: bool = False,
        enable_json: bool = STRUCTURED_LOG_ENABLED,
        run_id: Optional[str] = None,
    ) -> None:
        """
        Initialize structured logger.

        Args:
            name: Logger name
            level: Log level
            log_file: Optional JSON log file path
            enable_console: Attach a dedicated console handler
            enable_json: Write JSON records to the log file
            run_id: Identifier stamped on every record
        """
        self.logger = logging.getLogger(name)
        self.logger.setLevel(level.value)
        self.run_id = run_id or str(uuid.uuid4())[:8]

        if enable_console:
            self.attach_console()

        if log_file or enable_json:
            log_path = Path(log_file or "logs/mesh_energy.jsonl")
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_path, encoding="utf-8")
            file_handler.setLevel(level.value)
            file_handler.setFormatter(StructuredFormatter())
            self.logger.addHandler(file_handler)

    def attach_console(self) -> logging.Handler:
        """Echo this logger to stderr through ConsoleFormatter; a second call reuses the handler."""
        for handler in self.logger.handlers:
            if isinstance(handler.formatter, ConsoleFormatter):
                return handler
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(self.logger.level)
        console_handler.setFormatter(ConsoleFormatter())
        self.logger.addHandler(console_handler)
        return console_handler

    def _log(self, level: LogLevel, message: str, **kwargs: Any) -> None:
        extra = dict(kwargs.pop("extra", {}))
        extra.update(kwargs)
        extra["run_id"] = self.run_id
        self.logger.log(level.value, message, extra=extra)

    def debug(self, message: str, **kwargs: Any) -> None:
        self._log(LogLevel.DEBUG, message, **kwargs)

    def info(self, message: str, **kwargs: Any) -> None:
        self._log(LogLevel.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs: Any) -> None:
        self._log(LogLevel.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs: Any) -> None:
        self._log(LogLevel.ERROR, message, **kwargs)

    def performance(self, operation: str, **context: Any) -> PerformanceTracker:
        """
        Create a performance tracker context manager.

        Args:
            operation: Name of the operation being tracked
            **context: Additional context information

        Returns:
            PerformanceTracker context manager
        """
        return PerformanceTracker(self, operation, **context)

    def log_metric(self, metric_name: str, value: float, unit: Optional[str] = None, **context: Any) -> None:
        """
        Log a scalar result such as a lifetime or a correlation.

        Args:
            metric_name: Name of the metric
            value: Metric value
            unit: Optional unit (e.g., 's', 'C', 'days')
            **context: Additional context
        """
        self.info(
            f"Metric: {metric_name}={value}{f' {unit}' if unit else ''}",
            metric_name=metric_name,
            metric_value=value,
            metric_unit=unit,
            **context,
        )

    def log_sim_summary(self, mode: str, nodes: int, first_death: Optional[float],
                        last_death: Optional[float], events: int) -> None:
        """Log the headline numbers of one simulation run."""
        self.info(
            f"Simulation {mode}: nodes={nodes} first_death={first_death} last_death={last_death}",
            sim_mode=mode,
            sim_nodes=nodes,
            sim_first_death_s=first_death,
            sim_last_death_s=last_death,
            sim_events=events,
        )


_loggers: Dict[str, StructuredLogger] = {}


def console_logging() -> None:
    """Echo every structured logger created so far to stderr."""
    for structured in _loggers.values():
        structured.attach_console()


def get_logger(name: str, level: LogLevel = LogLevel.INFO, log_file: Optional[str] = None) -> StructuredLogger:
    """
    Get or create a structured logger instance.

    Args:
        name: Logger name
        level: Log level
        log_file: Optional JSON log file path

    Returns:
        StructuredLogger instance
    """
    if name not in _loggers:
        _loggers[name] = StructuredLogger(name=name, level=level, log_file=log_file)
    return _loggers[name]


def log_performance(operation_name: Optional[str] = None, logger_name: str = "mesh") -> Callable[[F], F]:
    """
    Decorator that times a function with a PerformanceTracker.

    Args:
        operation_name: Custom operation name (defaults to function name)
        logger_name: Logger name to use
    """
    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            logger = get_logger(logger_name)
            op_name = operation_name or f"{func.__module__}.{func.__name__}"
            with logger.performance(op_name, function=func.__name__):
                return func(*args, **kwargs)

        return wrapper  # type: ignore[return-value]
    return decorator
