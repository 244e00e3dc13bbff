"""Logging handlers.
"""
import logging.handlers
import threading
from pathlib import Path
from queue import Queue

__all__ = "QueueHandler", "StreamHandler", "RunFileHandler",


class QueueHandler(logging.handlers.QueueHandler):
    """Queue handler.

    Just a thin wrapper around the standard library's QueueHandler that
    starts the listener if it isn't already running.
    """
    listener: logging.handlers.QueueListener | None

    def __init__(self, queue):
        super().__init__(queue)

    def emit(self, record):
        if not bool(self.listener) and isinstance(self.queue, Queue):
            self.listener.start()
        super().emit(record)


class StreamHandler(logging.StreamHandler):
    """Stream handler.

    Used to have a consistent import path for all handlers.
    """

    def __init__(self, stream=None):
        super().__init__(stream)


class RunFileHandler(logging.FileHandler):
    """Appends to ``<run_dir>/train.log``, creating the directory if needed.

    Only records emitted by the thread that created the handler are written,
    so concurrent runs keep separate logs.
    """
    filename = "train.log"

    def __init__(self, run_dir: Path | str, level=logging.NOTSET):
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        super().__init__(run_dir / self.filename, mode="a", encoding="utf-8")
        self.setLevel(level)
        self.thread = threading.get_ident()

    def filter(self, record):
        return record.thread == self.thread and super().filter(record)
