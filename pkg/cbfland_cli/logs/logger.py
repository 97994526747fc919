"""Structured logging for cbfland.

structlog on top of the standard logging module: console and rotating file
handlers, JSON or console rendering, and helpers for timing blocks and
reporting progress of long runs.
"""

import logging
import logging.handlers
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import structlog

DEFAULT_LOGGING: Dict[str, Any] = {
    "level": "WARNING",
    "format": "console",
    "console_enabled": True,
    "file_enabled": False,
    "log_dir": "logs",
    "max_file_size": "10MB",
    "backup_count": 5,
}

_SIZE_UNITS = {"KB": 1024, "MB": 1024 ** 2, "GB": 1024 ** 3}


def parse_size(size: str) -> int:
    """'10MB' -> bytes. Plain integers are taken as bytes."""
    text = str(size).strip().upper()
    for unit, factor in _SIZE_UNITS.items():
        if text.endswith(unit):
            return int(float(text[: -len(unit)]) * factor)
    return int(text)


def setup_logging(config: Optional[Dict[str, Any]] = None) -> None:
    """Configure stdlib handlers and the structlog processor chain.

    Args:
        config: logging section of the application settings; missing keys
            fall back to DEFAULT_LOGGING.
    """
    cfg = {**DEFAULT_LOGGING, **(config or {})}
    level = getattr(logging, str(cfg["level"]).upper(), logging.INFO)

    root = logging.getLogger("cbfland")
    root.setLevel(level)
    root.handlers.clear()
    root.propagate = False

    formatter = logging.Formatter("%(message)s")
    if cfg["console_enabled"]:
        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)
        root.addHandler(console_handler)

    if cfg["file_enabled"]:
        log_dir = Path(cfg["log_dir"])
        log_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            filename=log_dir / "cbfland.log",
            maxBytes=parse_size(cfg["max_file_size"]),
            backupCount=int(cfg["backup_count"]),
            encoding="utf-8",
        )
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    if not root.handlers:
        root.addHandler(logging.NullHandler())

    renderer = (
        structlog.processors.JSONRenderer()
        if cfg["format"] == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )


def get_logger(name: str = "cbfland") -> structlog.stdlib.BoundLogger:
    """Logger under the cbfland hierarchy, e.g. get_logger(__name__)."""
    if name == "cbfland_cli" or name.startswith("cbfland_cli."):
        name = "cbfland" + name[len("cbfland_cli"):]
    elif not name.startswith("cbfland"):
        name = f"cbfland.{name}"
    if not structlog.is_configured():
        setup_logging()
    return structlog.get_logger(name)


@contextmanager
def performance_timer(name: str, logger: Optional[Any] = None) -> Iterator[Dict[str, float]]:
    """Time a block and log elapsed_s at INFO. Yields a dict filled on exit."""
    log = logger or get_logger("cbfland.perf")
    timing: Dict[str, float] = {}
    start = time.perf_counter()
    try:
        yield timing
    finally:
        timing["elapsed_s"] = time.perf_counter() - start
        log.info("timed_block", block=name, elapsed_s=round(timing["elapsed_s"], 6))


class ProgressLogger:
    """Percentage progress of a long-running operation."""

    def __init__(self, total_steps: int, operation_name: str = "operation", every: int = 1):
        self.total_steps = max(int(total_steps), 1)
        self.current_step = 0
        self.operation_name = operation_name
        self.every = max(int(every), 1)
        self.logger = get_logger("cbfland.progress")
        self.start_time = time.perf_counter()

    def step(self, message: str = "", **context: Any) -> None:
        self.current_step += 1
        if self.current_step % self.every and self.current_step != self.total_steps:
            return
        self.logger.info(
            "progress",
            operation=self.operation_name,
            step=self.current_step,
            total=self.total_steps,
            percent=round(100.0 * self.current_step / self.total_steps, 1),
            elapsed_s=round(time.perf_counter() - self.start_time, 3),
            message=message or None,
            **context,
        )

    def complete(self, message: str = "completed") -> None:
        self.logger.info(
            "progress_complete",
            operation=self.operation_name,
            message=message,
            elapsed_s=round(time.perf_counter() - self.start_time, 3),
        )
