"""dmt - neural manifold embeddings for nonlinear dimensionality reduction

Nonlinear dimensionality reduction with an MLP encoder trained on cross-layer
local-geometry-preserving losses, plus the metrics to judge the result.
"""
from importlib import metadata

try:
    __version__ = metadata.version("dmt")
except metadata.PackageNotFoundError:
    __version__ = "unknown"

del metadata

from .datasets import Dataset, generate, load_csv
from .errors import ConfigError, DataError, DmtError, DomainError, NumericalError
from .metrics import MetricsReport, evaluate_all
from .settings import LossConfig, TrainConfig
from .trainer import RunReport, TrainHooks, train_autoencoder, train_encoder

__all__ = [
    "Dataset",
    "generate",
    "load_csv",
    "DmtError",
    "ConfigError",
    "DataError",
    "NumericalError",
    "DomainError",
    "MetricsReport",
    "evaluate_all",
    "LossConfig",
    "TrainConfig",
    "RunReport",
    "TrainHooks",
    "train_encoder",
    "train_autoencoder",
]
