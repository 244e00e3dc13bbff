"""Toy dataset generators and CSV ingestion.

The four toy sets are fixed parametric recipes so that every acceptance number
is reproducible from ``(arguments, seed)`` alone.
"""
import csv
import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .numerics import Matrix, SeededRng

__all__ = (
    "Dataset", "DATASET_NAMES", "generate",
    "gen_swiss_roll", "gen_smile_face", "gen_three_gauss", "gen_repeat_points",
    "load_csv", "write_csv", "format_decimal",
)

logger = logging.getLogger(__name__)

SMILE_EYE_CENTERS = ((-0.35, 0.35), (0.35, 0.35))
SMILE_EYE_STDDEV = 0.05
SMILE_MOUTH_RADIUS = 0.6
SMILE_MOUTH_INSET = math.pi / 6

THREE_GAUSS_STDDEVS = (1.0, 2.0, 4.0)
THREE_GAUSS_MEAN_NORM = 20.0


@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense samples with optional integer labels.

    ``row_ids`` are the 0-based row indices in the originating file (or
    ``arange(M)`` for generated data); they become the ``id`` column of
    embedding files.
    """
    name: str
    features: Matrix
    labels: np.ndarray | None = None
    row_ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DataError(f"dataset {self.name!r} needs at least one row and one column, got shape {features.shape}")
        if not np.all(np.isfinite(features)):
            raise DataError(f"dataset {self.name!r} contains non-finite values")
        object.__setattr__(self, "features", features)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (features.shape[0],):
                raise DataError(f"dataset {self.name!r} has {labels.size} labels for {features.shape[0]} rows")
            if labels.size and labels.min() < 0:
                raise DataError(f"dataset {self.name!r} has negative labels")
            object.__setattr__(self, "labels", labels.astype(np.int64))

        row_ids = np.arange(features.shape[0]) if self.row_ids is None else np.asarray(self.row_ids, dtype=np.int64)
        if row_ids.shape != (features.shape[0],):
            raise DataError(f"dataset {self.name!r} has {row_ids.size} row ids for {features.shape[0]} rows")
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return 0 if self.labels is None else int(self.labels.max()) + 1

    def fingerprint(self) -> str:
        """Content hash over features, labels and row ids."""
        digest = hashlib.sha256()
        digest.update(np.asarray(self.features.shape, dtype=np.int64).tobytes())
        digest.update(self.features.tobytes())
        if self.labels is not None:
            digest.update(b"labels")
            digest.update(self.labels.tobytes())
        digest.update(self.row_ids.tobytes())
        return digest.hexdigest()

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            name=self.name,
            features=self.features[indices],
            labels=None if self.labels is None else self.labels[indices],
            row_ids=self.row_ids[indices],
        )


def _quantile_labels(values: np.ndarray, n_classes: int) -> np.ndarray:
    ranks = np.argsort(np.argsort(values, kind="stable"), kind="stable")
    return (ranks * n_classes) // values.size


def gen_swiss_roll(M: int, noise: float, rng: SeededRng) -> Dataset:
    """3-D Swiss roll ``(t cos t, y, t sin t)`` with t in [1.5π, 4.5π], y in [0, 21]."""
    if M < 4:
        raise DataError(f"swiss roll needs at least 4 points, got {M}")
    if noise < 0:
        raise DataError(f"noise must be nonnegative, got {noise}")

    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=M)
    y = rng.uniform(0.0, 21.0, size=M)
    features = np.column_stack([t * np.cos(t), y, t * np.sin(t)])
    if noise > 0:
        features = features + rng.normal(0.0, noise, size=features.shape)

    return Dataset("swissroll", features, _quantile_labels(t, 10))


def smile_face_counts(M: int) -> tuple[int, int, int, int]:
    """Outer circle, left eye, right eye, mouth."""
    circle = round(0.6 * M)
    eye = round(0.1 * M)
    return circle, eye, eye, M - circle - 2 * eye


def gen_smile_face(M: int, rng: SeededRng) -> Dataset:
    """2-D smiling face: unit circle, two Gaussian eyes and a lower mouth arc."""
    if M < 40:
        raise DataError(f"smile face needs at least 40 points, got {M}")

    n_circle, n_left, n_right, n_mouth = smile_face_counts(M)

    theta = rng.uniform(0.0, 2.0 * np.pi, size=n_circle)
    circle = np.column_stack([np.cos(theta), np.sin(theta)])

    eyes = [
        np.asarray(center) + rng.normal(0.0, SMILE_EYE_STDDEV, size=(count, 2))
        for center, count in zip(SMILE_EYE_CENTERS, (n_left, n_right))
    ]

    phi = rng.uniform(np.pi + SMILE_MOUTH_INSET, 2.0 * np.pi - SMILE_MOUTH_INSET, size=n_mouth)
    mouth = SMILE_MOUTH_RADIUS * np.column_stack([np.cos(phi), np.sin(phi)])

    features = np.vstack([circle, *eyes, mouth])
    labels = np.repeat(np.arange(4), [n_circle, n_left, n_right, n_mouth])
    return Dataset("smileface", features, labels)


def gen_three_gauss(M: int, dim: int, rng: SeededRng) -> Dataset:
    """Three isotropic Gaussians with stddevs 1, 2, 4 at orthogonal means of norm 20."""
    if M % 3 or M < 3:
        raise DataError(f"three gauss needs a positive multiple of 3 points, got {M}")
    if dim < 3:
        raise DataError(f"three gauss needs at least 3 dimensions, got {dim}")

    per_class = M // 3
    blocks = []
    for c, stddev in enumerate(THREE_GAUSS_STDDEVS):
        mean = np.zeros(dim)
        mean[c] = THREE_GAUSS_MEAN_NORM
        blocks.append(mean + rng.normal(0.0, stddev, size=(per_class, dim)))

    return Dataset("threegauss", np.vstack(blocks), np.repeat(np.arange(3), per_class))


def gen_repeat_points(copies: int, dim: int, rng: SeededRng) -> Dataset:
    """Three random locations, each repeated ``copies`` times bit-for-bit."""
    if copies < 1 or dim < 1:
        raise DataError(f"repeat points needs copies >= 1 and dim >= 1, got {copies}, {dim}")

    locations = rng.uniform(-10.0, 10.0, size=(3, dim))
    while len({row.tobytes() for row in locations}) < 3:
        locations = rng.uniform(-10.0, 10.0, size=(3, dim))

    return Dataset(
        "repeatpoints",
        np.repeat(locations, copies, axis=0),
        np.repeat(np.arange(3), copies),
    )


DATASET_NAMES = "swissroll", "smileface", "threegauss", "repeatpoints"


def generate(name: str, size: int, rng: SeededRng, *, noise: float = 0.0, dim: int | None = None) -> Dataset:
    """Dispatch to a toy generator by name.

    For ``repeatpoints`` the size is the number of copies per location.
    """
    match name:
        case "swissroll":
            return gen_swiss_roll(size, noise, rng)
        case "smileface":
            return gen_smile_face(size, rng)
        case "threegauss":
            return gen_three_gauss(size, dim or 100, rng)
        case "repeatpoints":
            return gen_repeat_points(size, dim or 100, rng)
        case _:
            raise DataError(f"unknown dataset {name!r}; choose from {', '.join(DATASET_NAMES)}")


def _parse_row(cells: list[str]) -> tuple[list[float], int | None]:
    """Parsed values and the index of the first non-numeric cell, if any."""
    values = []
    for column, cell in enumerate(cells):
        try:
            values.append(float(cell))
        except ValueError:
            return values, column
    return values, None


def load_csv(
    path: Path | str,
    label_col: int | None = None,
    max_rows: int | None = None,
    rng: SeededRng | None = None,
) -> Dataset:
    """Read a comma-separated numeric table.

    A first row that does not parse as numbers is treated as a header and
    skipped. Locations in errors are 0-based file rows and columns.
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8", newline="") as f:
            rows = [row for row in csv.reader(f)]
    except (OSError, UnicodeDecodeError, csv.Error) as e:
        raise DataError(f"cannot read {path}: {e}") from e

    offset = 0
    if rows and _parse_row(rows[0])[1] is not None:
        logger.debug("Skipping header row of %s", path)
        offset = 1

    parsed = []
    width = None
    for line, cells in enumerate(rows[offset:], start=offset):
        if not cells or all(not cell.strip() for cell in cells):
            continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataError(f"expected {width} columns, found {len(cells)}", row=line)

        values, bad_column = _parse_row(cells)
        if bad_column is not None:
            raise DataError(f"non-numeric cell {cells[bad_column]!r}", row=line, column=bad_column)
        parsed.append(values)

    if not parsed:
        raise DataError(f"{path} contains no data rows")

    table = np.asarray(parsed, dtype=np.float64)

    labels = None
    if label_col is not None:
        if not 0 <= label_col < width:
            raise DataError(f"label column {label_col} out of range for {width} columns", column=label_col)
        raw = table[:, label_col]
        bad = np.flatnonzero((raw != np.round(raw)) | (raw < 0))
        if bad.size:
            raise DataError(f"label {raw[bad[0]]!r} is not a nonnegative integer", row=int(bad[0]) + offset, column=label_col)
        labels = raw.astype(np.int64)
        table = np.delete(table, label_col, axis=1)

    if table.shape[1] < 1:
        raise DataError(f"{path} has no feature columns")

    dataset = Dataset(path.stem, table, labels)

    if max_rows is not None and max_rows < dataset.size:
        if rng is None:
            raise DataError("subsampling requires a seeded generator")
        chosen = np.sort(rng.choice(dataset.size, size=max_rows, replace=False))
        logger.info("Subsampled %d of %d rows from %s", max_rows, dataset.size, path)
        dataset = dataset.subset(chosen)

    return dataset


def format_decimal(value: float) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(value))


def write_csv(dataset: Dataset, path: Path | str) -> None:
    """Write ``label,f1,…,fN`` rows (label omitted when absent), LF line endings."""
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            for i, row in enumerate(dataset.features):
                cells = [format_decimal(v) for v in row]
                if dataset.labels is not None:
                    cells.insert(0, str(int(dataset.labels[i])))
                writer.writerow(cells)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
