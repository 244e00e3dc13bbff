import logging

__all__ = "LoggerAdapter",


class LoggerAdapter(logging.LoggerAdapter):
    """Default logger adapter.

    Per-call extras (``epoch=...``) are merged over the adapter's run context
    instead of replacing it, on every supported Python version.
    """

    def __init__(self, logger, extra=None, merge_extra=True):
        super().__init__(logger, extra)
        self.merge_extra = merge_extra

    def process(self, msg, kwds):
        if self.merge_extra and "extra" in kwds:
            kwds["extra"] = {**(self.extra or {}), **kwds["extra"]}
        else:
            kwds["extra"] = self.extra
        return msg, kwds

    def bind(self, **extra) -> "LoggerAdapter":
        """Adapter over the same logger with additional context."""
        return type(self)(self.logger, {**(self.extra or {}), **extra}, self.merge_extra)
