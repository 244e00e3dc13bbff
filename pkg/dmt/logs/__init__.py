import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

from . import config, adapter

__all__ = "initialize_logging", "flush", "adapt_logger", "get_logger", "run_log", "sampled",


def initialize_logging(*, configure_logging: bool = True, start_listeners: bool = True) -> None:
    """Initialize logging queues and listeners.

    Typically called once on application startup, after logging has been configured.
    """
    if configure_logging:
        config.configure_logging()

    if start_listeners:
        from .listener import QueueListener
        QueueListener.start_all()


def flush() -> None:
    """Wait until every queued record has reached its handlers."""
    from .listener import QueueListener
    QueueListener.flush_all()


def adapt_logger(logger, extra) -> adapter.LoggerAdapter:
    """Wrap a logger so every record carries ``extra`` (e.g. ``{"run": "swissroll"}``).

    The default formatter renders these as ``[run=swissroll epoch=3]``.
    """
    if logger is None:
        logger = get_logger()

    return adapter.LoggerAdapter(logger, extra)


def get_logger(name: str | None = None) -> logging.Logger:
    return logging.getLogger(name)


@contextmanager
def run_log(run_dir: Path | str, name: str = "dmt") -> Iterator[logging.Handler]:
    """Mirror the ``name`` logger into ``<run_dir>/train.log`` while the block runs."""
    from .formatter import DefaultFormatter
    from .handler import RunFileHandler

    handler = RunFileHandler(run_dir)
    handler.setFormatter(DefaultFormatter(config.LOGGING_CONFIG["formatters"]["default"]["format"], style="{"))
    logger = logging.getLogger(name)
    logger.addHandler(handler)
    try:
        yield handler
    finally:
        logger.removeHandler(handler)
        handler.close()


@contextmanager
def sampled(logger: logging.Logger, every: int, epochs: int) -> Iterator[logging.Filter]:
    """Let only every ``every``-th epoch record (plus first and last) through ``logger``."""
    from .filter import EpochSampleFilter

    sample = EpochSampleFilter(every, epochs)
    logger.addFilter(sample)
    try:
        yield sample
    finally:
        logger.removeFilter(sample)
