import functools
import logging
import time
from typing import Any, Callable, Optional, TypeVar

from ..config.logging import logger as base_logger

F = TypeVar("F", bound=Callable[..., Any])


def log_execution_time(func_name: Optional[str] = None) -> Callable[[F], F]:
    """Debug-log the wall time of a synchronous call; failures are logged with their timing"""

    def decorator(func: F) -> F:
        name = func_name or f"{func.__module__}.{func.__name__}"

        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            start = time.perf_counter()
            try:
                result = func(*args, **kwargs)
            except Exception as e:
                base_logger.error(f"{name} failed after {time.perf_counter() - start:.3f}s: {e}")
                raise
            base_logger.debug(f"{name} completed in {time.perf_counter() - start:.3f}s")
            return result

        return wrapper  # type: ignore[return-value]

    return decorator


class ContextualLogger:
    """Package logger that prefixes every message with `[context]`.

    Extra positional arguments are passed through for lazy %-formatting, so hot
    loops can log at debug level without building strings.
    """

    def __init__(self, context: str):
        self.context = context
        self.logger = base_logger

    def child(self, name: str) -> "ContextualLogger":
        return ContextualLogger(f"{self.context}:{name}")

    def _log(self, level: int, message: str, *args: Any, **kwargs: Any) -> None:
        if self.logger.isEnabledFor(level):
            self.logger.log(level, f"[{self.context}] {message}", *args, **kwargs)

    def debug(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log(logging.DEBUG, message, *args, **kwargs)

    def info(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log(logging.INFO, message, *args, **kwargs)

    def warning(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log(logging.WARNING, message, *args, **kwargs)

    def error(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._log(logging.ERROR, message, *args, **kwargs)


def get_contextual_logger(context: str) -> ContextualLogger:
    return ContextualLogger(context)
