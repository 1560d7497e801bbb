"""
Utility functions for the freshness_mdp package.

Logging setup shared by the solvers, the simulation engine and the CLI,
plus a small thread-safe memo table used to avoid re-solving the same
Lagrangian problem twice.
"""
import functools
import json
import logging
import os
import sys
import threading
import time
from datetime import datetime
from typing import Any, Callable, Dict, Generic, Hashable, Optional, TypeVar, Union

# Configure base logger
logger = logging.getLogger("freshness_mdp")

DEFAULT_LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
DEFAULT_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

LOG_LEVELS = {
    'debug': logging.DEBUG,
    'info': logging.INFO,
    'warning': logging.WARNING,
    'error': logging.ERROR,
    'critical': logging.CRITICAL
}

K = TypeVar('K', bound=Hashable)
T = TypeVar('T')


def _resolve_level(level: Union[int, str]) -> int:
    if isinstance(level, str):
        return LOG_LEVELS.get(level.lower(), logging.INFO)
    return level


def configure_logging(
    level: Union[int, str] = logging.INFO,
    log_file: Optional[str] = None,
    log_format: Optional[str] = None,
    date_format: Optional[str] = None,
    propagate: bool = False,
    add_console_handler: bool = True,
    console_level: Optional[Union[int, str]] = None,
    file_mode: str = 'a',
    file_encoding: str = 'utf-8'
) -> None:
    """
    Configure the package's logging system.

    The console handler writes to stderr so that CSV written to stdout by
    the CLI stays clean.

    Args:
        level: Logging level as int or string ('debug', 'info', 'warning', etc)
        log_file: Optional path to log file for file-based logging
        log_format: Custom log format string (default: timestamp - name - level)
        date_format: Custom date format for log timestamps
        propagate: Whether to propagate logs to parent loggers
        add_console_handler: Whether to add a console handler
        console_level: Separate log level for console handler
        file_mode: File open mode ('a' for append, 'w' for overwrite)
        file_encoding: Encoding for log file

    Examples:
        # Solver diagnostics to a file, warnings only on the console
        configure_logging(level='debug', log_file='sweep.log',
                          console_level='warning')
    """
    level = _resolve_level(level)
    console_level = level if console_level is None else _resolve_level(console_level)

    formatter = logging.Formatter(
        log_format or DEFAULT_LOG_FORMAT, date_format or DEFAULT_DATE_FORMAT
    )

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir, exist_ok=True)

        file_handler = logging.FileHandler(
            log_file, mode=file_mode, encoding=file_encoding
        )
        file_handler.setFormatter(formatter)
        file_handler.setLevel(level)
        logger.addHandler(file_handler)

    if add_console_handler:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setFormatter(formatter)
        console_handler.setLevel(console_level)
        logger.addHandler(console_handler)

    min_level = min(level, console_level) if add_console_handler else level
    logger.setLevel(min_level)
    logger.propagate = propagate


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get a child of the package logger for a specific component.

    Args:
        name: Name of the component/module for the logger

    Returns:
        Logger instance for the specified component

    Examples:
        solver_logger = get_logger('mdp')
        solver_logger.debug('RVIA converged')
    """
    if name:
        return logger.getChild(name)
    return logger


def disable_logging() -> None:
    """Disable all logging output from the package."""
    logger.setLevel(logging.CRITICAL + 1)
    logger.handlers = []
    logger.propagate = False


def log_function_call(func: Callable[..., T]) -> Callable[..., T]:
    """
    Decorator to log calls of a function with their wall time.

    Arguments are not rendered: they are usually large arrays.

    Args:
        func: The function to wrap with logging

    Returns:
        Wrapped function with logging
    """
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> T:
        func_logger = get_logger(func.__module__.rsplit('.', 1)[-1])
        func_name = func.__name__

        func_logger.debug(f"Calling {func_name}")
        start = time.perf_counter()
        try:
            result = func(*args, **kwargs)
        except Exception as e:
            func_logger.error(f"{func_name} raised {type(e).__name__}: {str(e)}")
            raise
        func_logger.debug(
            f"{func_name} returned in {time.perf_counter() - start:.3f}s"
        )
        return result

    return wrapper


def log_to_json(
    message: str,
    level: Union[int, str] = logging.INFO,
    **extra_fields: Any
) -> None:
    """
    Log a message in JSON format with additional fields.

    Examples:
        log_to_json("grid point solved", family="aoii-sweep-alpha",
                    alpha=0.2, J_exact=3.41)
    """
    level = _resolve_level(level)

    log_entry = {
        "timestamp": datetime.now().isoformat(),
        "message": message,
        "level": logging.getLevelName(level),
        **extra_fields
    }

    logger.log(level, json.dumps(log_entry, default=str))


class LogContext:
    """
    Context manager that brackets a unit of work with log lines.

    Records sent through ``ctx.logger`` carry a ``context_name`` attribute.
    Nothing global is touched, so contexts may be entered from several
    threads at once.

    Examples:
        with LogContext("grid point", alpha=0.2) as ctx:
            ctx.logger.debug("solving")
    """

    def __init__(self, context_name: str, logger_name: Optional[str] = None,
                 **context_data: Any):
        self.context_name = context_name
        self.context_data = context_data
        base = get_logger(logger_name) if logger_name else logger
        self.logger = logging.LoggerAdapter(base, {"context_name": context_name})
        self._start = 0.0

    def _describe(self) -> str:
        if not self.context_data:
            return self.context_name
        fields = ", ".join(f"{k}={v}" for k, v in self.context_data.items())
        return f"{self.context_name} ({fields})"

    def __enter__(self) -> "LogContext":
        self._start = time.perf_counter()
        self.logger.info(f"Entered context: {self._describe()}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb) -> bool:
        elapsed = time.perf_counter() - self._start
        if exc_type:
            self.logger.error(f"Error in context {self._describe()}: {exc_val}")
        else:
            self.logger.info(
                f"Exited context: {self._describe()} after {elapsed:.3f}s"
            )
        return False


class MemoCache(Generic[K, T]):
    """
    Thread-safe in-memory memo table.

    Each key is computed at most once; concurrent callers asking for the
    same key wait for the first computation instead of repeating it.
    """

    def __init__(self, name: str = "default"):
        self.name = name
        self.logger = get_logger(f"cache.{name}")
        self._lock = threading.RLock()
        self._key_locks: Dict[K, threading.Lock] = {}
        self._values: Dict[K, T] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        with self._lock:
            return len(self._values)

    def __contains__(self, key: object) -> bool:
        with self._lock:
            return key in self._values

    def get_or_compute(self, key: K, compute: Callable[[], T]) -> T:
        """Return the cached value for ``key``, computing it on a miss."""
        with self._lock:
            if key in self._values:
                self.hits += 1
                return self._values[key]
            key_lock = self._key_locks.setdefault(key, threading.Lock())

        with key_lock:
            with self._lock:
                if key in self._values:
                    self.hits += 1
                    return self._values[key]
            value = compute()
            with self._lock:
                self._values[key] = value
                self.misses += 1
            self.logger.debug(f"Stored {key!r} ({len(self._values)} entries)")
            return value

    def clear(self) -> None:
        with self._lock:
            self._values.clear()
            self._key_locks.clear()
            self.hits = 0
            self.misses = 0
