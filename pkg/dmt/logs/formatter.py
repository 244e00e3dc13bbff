"""Logging formatter module.

Defines a default formatter for log messages.
"""
import logging

__all__ = "DefaultFormatter", "CONTEXT_KEYS",

CONTEXT_KEYS = "run", "epoch", "batch"


class DefaultFormatter(logging.Formatter):
    """Default log formatter.

    Uses `{}`-style formatting and fills ``{context}`` from run-scoped extras.
    """
    def __init__(self, fmt=None, datefmt=None, style="{", **kwds):
        super().__init__(fmt=fmt, datefmt=datefmt, style=style, **kwds)

    def format(self, record):
        context = [f"{key}={getattr(record, key)}" for key in CONTEXT_KEYS if getattr(record, key, None) is not None]
        record.context = f" [{' '.join(context)}]" if context else ""
        return super().format(record)
