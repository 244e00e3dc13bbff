import atexit
import logging.handlers
import weakref

from .queue import LogQueue

__all__ = "QueueListener",


class QueueListener(logging.handlers.QueueListener):
    """Drains a ``LogQueue`` into its handlers on a background thread.

    Handler levels are respected. Every listener is tracked so the CLI can
    start them together and drain them before printing results.
    """
    _registry: list["QueueListener"] = []

    def __init__(self, queue: LogQueue, *handlers: logging.Handler, respect_handler_level=True, start=False):
        super().__init__(queue, *handlers, respect_handler_level=respect_handler_level)
        QueueListener._registry.append(weakref.proxy(self, QueueListener._registry.remove))
        if start:
            self.start()

    @property
    def running(self) -> bool:
        return self._thread is not None

    def __bool__(self):
        return self.running

    def __del__(self):
        self.stop()

    def start(self):
        if not self.running:
            super().start()
            atexit.register(self.stop)

    def stop(self):
        if self.running:
            super().stop()
            atexit.unregister(self.stop)

    def flush(self) -> None:
        """Block until every record queued so far has been handled."""
        if self.running:
            self.queue.join()
        for handler in self.handlers:
            handler.flush()

    @classmethod
    def start_all(cls):
        for listener in cls._registry:
            listener.start()

    @classmethod
    def flush_all(cls):
        for listener in cls._registry:
            listener.flush()
