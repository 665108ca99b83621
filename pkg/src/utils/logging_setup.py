"""
Logging setup for the dense-prior NeRF pipeline.
Provides structured logging with a per-run log file and console output.
"""

import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import structlog
from structlog import get_logger

from src.config.settings import settings

_CONFIGURED = False


def setup_logging(
    log_level: Optional[str] = None, log_dir: Optional[str] = None, file_logging: Optional[bool] = None
) -> None:
    """
    Set up structured logging for the pipeline.
    Creates a new log file for each run with timestamp.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR)
        log_dir: Directory for log files
        file_logging: Write log files; defaults to the global settings
    """
    global _CONFIGURED

    log_level = (log_level or settings.logging.log_level).upper()
    handlers = [logging.StreamHandler(sys.stdout)]

    log_file = None
    if file_logging is None:
        file_logging = settings.logging.enable_file_logging
    if file_logging:
        logs_dir = Path(log_dir or settings.logging.log_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        log_file = logs_dir / f"pipeline_{timestamp}.log"
        latest_log = logs_dir / "latest.log"
        handlers += [logging.FileHandler(log_file), logging.FileHandler(latest_log, mode="w")]

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="%Y-%m-%d %H:%M:%S", utc=False),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.dev.ConsoleRenderer(colors=sys.stdout.isatty()),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logging.basicConfig(
        format="%(message)s",
        level=getattr(logging, log_level),
        handlers=handlers,
        force=True,
    )

    if not _CONFIGURED:
        logger = get_pipeline_logger("logging")
        logger.info(
            "Logging system initialized",
            log_file=str(log_file) if log_file else None,
            log_level=log_level,
        )
    _CONFIGURED = True


def get_pipeline_logger(name: str) -> structlog.stdlib.BoundLogger:
    """
    Get a logger instance for the pipeline.

    Args:
        name: Logger name (typically module name)

    Returns:
        Configured logger instance
    """
    return get_logger(f"dense_prior_nerf.{name}")


class PipelineLoggerMixin:
    """
    Mixin class to add logging capability to pipeline classes.
    """

    @property
    def logger(self) -> structlog.stdlib.BoundLogger:
        """Get logger for this class."""
        if not hasattr(self, "_logger"):
            self._logger = get_pipeline_logger(self.__class__.__name__.lower())
        return self._logger


def log_train_step(
    iteration: int,
    loss_color: float,
    loss_depth: float,
    **kwargs: Any,
) -> None:
    """
    Log one radiance field optimization step.

    Args:
        iteration: Optimizer step index
        loss_color: Mean color loss of the batch
        loss_depth: Mean (unweighted) depth loss of the batch
        **kwargs: Additional context
    """
    logger = get_pipeline_logger("train_step")
    logger.info(
        "Train step",
        iteration=iteration,
        loss_color=round(float(loss_color), 6),
        loss_depth=round(float(loss_depth), 6),
        **kwargs,
    )


def log_evaluation(view: Any, metrics: Dict[str, float], **kwargs: Any) -> None:
    """
    Log metrics of one evaluated view.

    Args:
        view: View identifier (index or "mean")
        metrics: Metric name to value
        **kwargs: Additional context
    """
    logger = get_pipeline_logger("evaluation")
    logger.info("View evaluated", view=view, **metrics, **kwargs)


def log_error_with_context(
    error: Exception,
    context: dict,
    logger_name: str = "error",
) -> None:
    """
    Log error with additional context.

    Args:
        error: Exception that occurred
        context: Additional context information
        logger_name: Logger name to use
    """
    logger = get_pipeline_logger(logger_name)
    logger.error(
        "Error occurred",
        error_type=type(error).__name__,
        error_message=str(error),
        **context,
        exc_info=True,
    )
