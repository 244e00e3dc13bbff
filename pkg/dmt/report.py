"""Run artifacts: manifest, metric reports and embedding files.

Reports are flat ``key = value`` text, one entry per line, array values
comma-joined. Floats are written in their shortest round-trip form so a
manifest can replay a run exactly.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .datasets import Dataset, format_decimal
from .errors import DataError
from .metrics import MetricsReport
from .numerics import Matrix
from .settings import TrainConfig, format_value

__all__ = (
    "RunManifest", "DataSource", "Embedding",
    "format_flat", "parse_flat", "read_flat", "write_flat", "metrics_lines", "replay_config",
    "write_embedding", "read_embedding", "write_matrix_csv",
    "MANIFEST_NAME", "EMBEDDING_NAME", "METRICS_NAME",
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
EMBEDDING_NAME = "embedding.csv"
METRICS_NAME = "metrics.txt"


def format_flat(entries: Iterable[tuple[str, object]]) -> str:
    return "".join(f"{key} = {format_value(value)}\n" for key, value in entries)


def parse_flat(text: str, source: str = "<report>") -> dict[str, str]:
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise DataError(f"{source}:{number}: expected 'key = value'")
        values[key.strip()] = value.strip()
    return values


def write_flat(path: Path | str, entries: Iterable[tuple[str, object]]) -> Path:
    path = Path(path)
    try:
        path.write_text(format_flat(entries), encoding="utf-8", newline="\n")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path


def read_flat(path: Path | str) -> dict[str, str]:
    path = Path(path)
    try:
        return parse_flat(path.read_text(encoding="utf-8"), str(path))
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e


def metrics_lines(report: MetricsReport, prefix: str = "") -> list[tuple[str, object]]:
    """Flat entries for every metric; skipped ones carry their reason."""
    lines: list[tuple[str, object]] = [(f"{prefix}k_used", report.k_used)]
    for name, value in report.values().items():
        if value is None:
            lines.append((f"{prefix}{name}", f"skipped: {report.skipped.get(name, 'unavailable')}"))
        else:
            lines.append((f"{prefix}{name}", value))
    if report.dpc_pairs is not None:
        lines.append((f"{prefix}dpc_pairs", report.dpc_pairs))
    return lines


class DataSource(BaseModel):
    """Where the training data came from and what it looked like."""
    model_config = ConfigDict(extra="forbid")

    path: str
    label_col: int | None = None
    max_rows: int | None = None
    rows: int
    cols: int
    fingerprint: str

    @classmethod
    def describe(cls, ds: Dataset, path: Path | str, label_col: int | None, max_rows: int | None) -> "DataSource":
        return cls(
            path=str(path), label_col=label_col, max_rows=max_rows,
            rows=ds.size, cols=ds.width, fingerprint=ds.fingerprint(),
        )


class RunManifest(BaseModel):
    """Everything needed to audit and replay a training run."""
    model_config = ConfigDict(extra="forbid")

    version: str
    data: DataSource
    config: TrainConfig
    losses: list[float]
    kernel_evaluations: list[int] = Field(default_factory=list)
    reconstruction: list[float] = Field(default_factory=list)
    metric_history: list[tuple[int, MetricsReport]] = Field(default_factory=list)
    metrics: MetricsReport | None = None
    wall_time: float = 0.0

    def entries(self) -> list[tuple[str, object]]:
        lines: list[tuple[str, object]] = [("version", self.version)]
        lines += [(f"data.{key}", value) for key, value in self.data.model_dump().items()]
        lines.append(("seed", self.config.seed))
        lines += [(f"config.{key}", value) for key, value in self.config.flat().items()]
        lines.append(("losses", self.losses))
        lines.append(("kernel_evaluations", self.kernel_evaluations))
        if self.reconstruction:
            lines.append(("reconstruction", self.reconstruction))
        for epoch, report in self.metric_history:
            lines += metrics_lines(report, prefix=f"history.{epoch}.")
        if self.metrics is not None:
            lines += metrics_lines(self.metrics, prefix="metrics.")
        lines.append(("wall_time_seconds", round(self.wall_time, 3)))
        return lines

    def dumps(self) -> str:
        return format_flat(self.entries())

    def write(self, path: Path | str) -> Path:
        return write_flat(path, self.entries())


def replay_config(values: dict[str, str]) -> dict[str, str]:
    """``config.*`` entries of a parsed manifest, keyed by config key."""
    return {key.removeprefix("config."): value for key, value in values.items() if key.startswith("config.")}


@dataclass(frozen=True, eq=False)
class Embedding:
    """Rows of an embedding file."""
    ids: np.ndarray
    labels: np.ndarray | None
    coords: np.ndarray


def write_embedding(path: Path | str, ids, coords: Matrix, labels=None) -> Path:
    """``id,label,z1,z2`` with a header row; the label column is omitted when absent."""
    path = Path(path)
    coords = np.asarray(coords, dtype=np.float64)
    header = ["id"] + (["label"] if labels is not None else []) + [f"z{c + 1}" for c in range(coords.shape[1])]

    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for i, row in enumerate(coords):
                cells = [str(int(ids[i]))]
                if labels is not None:
                    cells.append(str(int(labels[i])))
                cells.extend(format_decimal(v) for v in row)
                writer.writerow(cells)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e

    return path


def read_embedding(path: Path | str) -> Embedding:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            rows = list(csv.reader(f))
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read {path}: {e}") from e

    if not rows or not rows[0] or rows[0][0] != "id":
        raise DataError(f"{path}: missing 'id,...' header", row=0)

    header = rows[0]
    has_labels = len(header) > 1 and header[1] == "label"
    first = 2 if has_labels else 1
    if len(header) <= first:
        raise DataError(f"{path}: no coordinate columns", row=0)

    ids, labels, coords = [], [], []
    for number, cells in enumerate(rows[1:], start=1):
        if not cells:
            continue
        if len(cells) != len(header):
            raise DataError(f"expected {len(header)} columns, found {len(cells)}", row=number)
        try:
            ids.append(int(cells[0]))
            if has_labels:
                labels.append(int(cells[1]))
            coords.append([float(c) for c in cells[first:]])
        except ValueError as e:
            raise DataError(f"malformed embedding row: {e}", row=number) from e

    ids = np.asarray(ids, dtype=np.int64)
    if np.unique(ids).size != ids.size:
        raise DataError(f"{path}: duplicate ids")

    return Embedding(
        ids=ids,
        labels=np.asarray(labels, dtype=np.int64) if has_labels else None,
        coords=np.asarray(coords, dtype=np.float64).reshape(len(coords), len(header) - first),
    )


def write_matrix_csv(path: Path | str, matrix: Matrix, ids=None) -> Path:
    """``id,x1,…,xN`` with a header row."""
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float64)
    ids = np.arange(matrix.shape[0]) if ids is None else ids
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["id"] + [f"x{c + 1}" for c in range(matrix.shape[1])])
            for i, row in enumerate(matrix):
                writer.writerow([str(int(ids[i]))] + [format_decimal(v) for v in row])
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path
