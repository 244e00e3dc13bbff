"""Useful logging filters.
"""
import logging

__all__ = "EpochSampleFilter",


class EpochSampleFilter(logging.Filter):
    """Pass records whose ``epoch`` is the first, the last, or a multiple of ``every``.

    Records without an ``epoch`` attribute always pass.
    """

    def __init__(self, every: int, epochs: int):
        super().__init__()
        self.every = max(1, int(every))
        self.epochs = epochs

    def filter(self, record):
        epoch = getattr(record, "epoch", None)
        if epoch is None:
            return True
        return epoch == 0 or epoch == self.epochs - 1 or epoch % self.every == 0
