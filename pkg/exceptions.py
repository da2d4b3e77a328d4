"""
Custom exception classes for the mesh energy simulator.

Every error raised by the analytical library, the codecs, the simulator and
the command line derives from MeshEnergyError, which carries an error code
and a context dictionary that is rendered into the message and logged when
the exception is created.
"""

from typing import Any, Callable, Dict, Optional
import logging
import struct

logger = logging.getLogger(__name__)


class MeshEnergyError(Exception):
    """Base exception for all simulator errors.

    Attributes:
        message: Human-readable error description
        error_code: Unique error identifier for logging/tracking
        context: Additional context information
        original_error: The original exception that caused this error
    """

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
        original_error: Optional[Exception] = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.context = context or {}
        self.original_error = original_error

        logger.error(
            f"{self.error_code}: {message}",
            extra={
                "error_code": self.error_code,
                "context": self.context,
                "original_error": str(original_error) if original_error else None,
            },
        )

    def __str__(self) -> str:
        if self.context:
            context_str = ", ".join(f"{k}={v}" for k, v in self.context.items())
            return f"{self.message} (Context: {context_str})"
        return self.message


class InvalidParameterError(MeshEnergyError):
    """Raised when a physical or protocol parameter is out of its valid domain."""

    def __init__(
        self,
        message: str,
        param_name: Optional[str] = None,
        param_value: Optional[Any] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if param_name:
            context["param_name"] = param_name
        if param_value is not None:
            context["param_value"] = param_value
        kwargs["context"] = context
        self.param_name = param_name

        super().__init__(message, error_code="INVALID_PARAMETER", **kwargs)


class ConfigurationError(MeshEnergyError):
    """Raised when a scenario file or environment setting is invalid."""

    def __init__(
        self,
        message: str,
        config_key: Optional[str] = None,
        config_value: Optional[Any] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if config_key:
            context["config_key"] = config_key
        if config_value is not None:
            context["config_value"] = config_value
        kwargs["context"] = context
        self.config_key = config_key

        super().__init__(message, error_code="CONFIG_ERROR", **kwargs)


class TraceFormatError(MeshEnergyError):
    """Raised when a trace CSV is malformed."""

    def __init__(
        self,
        message: str,
        line_number: Optional[int] = None,
        source: Optional[str] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if line_number is not None:
            context["line_number"] = line_number
        if source:
            context["source"] = source
        kwargs["context"] = context
        self.line_number = line_number

        super().__init__(message, error_code="TRACE_FORMAT_ERROR", **kwargs)


class TraceUnderrunError(MeshEnergyError):
    """Raised when a replayed trace ends before the simulated horizon."""

    def __init__(
        self,
        message: str,
        required_until: Optional[float] = None,
        available_until: Optional[float] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if required_until is not None:
            context["required_until"] = required_until
        if available_until is not None:
            context["available_until"] = available_until
        kwargs["context"] = context

        super().__init__(message, error_code="TRACE_UNDERRUN", **kwargs)


class CodecError(MeshEnergyError):
    """Raised when a BLE packet cannot be decoded."""

    def __init__(
        self,
        message: str,
        field_name: Optional[str] = None,
        raw_hex: Optional[str] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if field_name:
            context["field_name"] = field_name
        if raw_hex:
            context["raw_hex"] = raw_hex[:80]
        kwargs["context"] = context

        super().__init__(message, error_code="CODEC_ERROR", **kwargs)


class RouteUnavailableError(MeshEnergyError):
    """Raised when no relay chain reaches the LoRa hub."""

    def __init__(
        self,
        message: str,
        source: Optional[Any] = None,
        hub: Optional[Any] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if source is not None:
            context["source"] = source
        if hub is not None:
            context["hub"] = hub
        kwargs["context"] = context

        super().__init__(message, error_code="ROUTE_UNAVAILABLE", **kwargs)


class SimulationError(MeshEnergyError):
    """Raised when a simulation run cannot proceed."""

    def __init__(
        self,
        message: str,
        mode: Optional[str] = None,
        sim_time: Optional[float] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if mode:
            context["mode"] = mode
        if sim_time is not None:
            context["sim_time"] = sim_time
        kwargs["context"] = context

        super().__init__(message, error_code="SIMULATION_ERROR", **kwargs)


class ReportGenerationError(MeshEnergyError):
    """Raised when writing a CSV report fails."""

    def __init__(
        self,
        message: str,
        report_type: Optional[str] = None,
        output_file: Optional[str] = None,
        **kwargs: Any,
    ) -> None:
        context = kwargs.get("context", {})
        if report_type:
            context["report_type"] = report_type
        if output_file:
            context["output_file"] = output_file
        kwargs["context"] = context

        super().__init__(message, error_code="REPORT_GENERATION_ERROR", **kwargs)


USAGE_ERRORS = (InvalidParameterError, ConfigurationError)


def handle_exception(
    exception: Exception,
    context: Optional[Dict[str, Any]] = None,
    reraise: bool = True,
) -> Optional[MeshEnergyError]:
    """
    Convert generic exceptions to the simulator's exception hierarchy.

    Args:
        exception: The original exception to handle
        context: Additional context information
        reraise: Whether to reraise the converted exception

    Returns:
        Converted exception if reraise=False, None if reraise=True

    Raises:
        MeshEnergyError: Always raised if reraise=True
    """
    context = context or {}

    custom_error: MeshEnergyError
    if isinstance(exception, MeshEnergyError):
        custom_error = exception
    elif isinstance(exception, struct.error):
        custom_error = CodecError(
            f"Binary layout error: {exception}",
            context=context,
            original_error=exception,
        )
    elif isinstance(exception, (ValueError, ZeroDivisionError)):
        custom_error = InvalidParameterError(
            f"Invalid parameter: {exception}",
            context=context,
            original_error=exception,
        )
    elif isinstance(exception, KeyError):
        custom_error = ConfigurationError(
            f"Missing required setting: {exception}",
            context=context,
            original_error=exception,
        )
    elif isinstance(exception, OSError):
        custom_error = MeshEnergyError(
            f"I/O error: {exception}",
            error_code="IO_ERROR",
            context=context,
            original_error=exception,
        )
    else:
        custom_error = MeshEnergyError(
            f"Unexpected error: {exception}",
            error_code="UNEXPECTED_ERROR",
            context=context,
            original_error=exception,
        )

    if reraise:
        raise custom_error

    return custom_error


def safe_execute(
    func: Callable[..., Any],
    *args: Any,
    error_message: Optional[str] = None,
    error_type: type = MeshEnergyError,
    context: Optional[Dict[str, Any]] = None,
    **kwargs: Any,
) -> Any:
    """
    Execute a function with consistent error handling.

    Args:
        func: Function to execute
        *args: Function arguments
        error_message: Custom error message if execution fails
        error_type: Type of custom exception to raise
        context: Additional context information
        **kwargs: Function keyword arguments

    Returns:
        Function return value

    Raises:
        error_type: Custom exception if function execution fails
    """
    try:
        return func(*args, **kwargs)
    except MeshEnergyError:
        raise
    except Exception as e:
        message = error_message or f"Failed to execute {func.__name__}: {e}"
        context = context or {}
        context["function"] = func.__name__

        if error_type is MeshEnergyError:
            handle_exception(e, context=context)
        raise error_type(message, context=context, original_error=e)
