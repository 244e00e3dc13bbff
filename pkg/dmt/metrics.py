"""Embedding quality measures between two layers of the same points.

Rank-based measures (continuity, trustworthiness, mean relative rank error)
use full rank tables: ``r_ij`` is the position of ``j`` in ``i``'s neighbor
list sorted by ascending distance, ties broken by the smaller index, so ranks
run over 1..M−1. Scatter rank mismatch compares class spreads, and accuracy
cross-validates a linear max-margin classifier on the embedding.
"""
import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import DataError
from .numerics import Matrix, make_rng, pairwise_sq_distances, sq_distances_between

__all__ = (
    "RankTable", "MetricsReport",
    "continuity", "trustworthiness", "rre", "dpc", "srm", "acc", "evaluate_all",
    "default_k", "class_scatter",
    "DPC_FULL_LIMIT", "DPC_SAMPLE_PAIRS",
)

logger = logging.getLogger(__name__)

DPC_FULL_LIMIT = 3000
DPC_SAMPLE_PAIRS = 2_000_000

ACC_FOLDS = 5
ACC_LAMBDA = 1e-4
ACC_ITERATIONS = 2000
ACC_BATCH = 16
ACC_MIN_SAMPLES = 10


@dataclass(frozen=True, eq=False)
class RankTable:
    """``order[i]`` lists the other points nearest first; ``ranks[i, j]`` is 1-based (0 on the diagonal)."""
    order: np.ndarray
    ranks: np.ndarray

    @classmethod
    def from_points(cls, X: Matrix) -> "RankTable":
        D = pairwise_sq_distances(X)
        M = D.shape[0]
        np.fill_diagonal(D, -np.inf)

        order = np.argsort(D, axis=1, kind="stable")
        ranks = np.empty((M, M), dtype=np.int64)
        np.put_along_axis(ranks, order, np.broadcast_to(np.arange(M), (M, M)), axis=1)
        return cls(order[:, 1:], ranks)

    @property
    def size(self) -> int:
        return self.ranks.shape[0]

    def knn_mask(self, k: int) -> np.ndarray:
        M = self.size
        mask = np.zeros((M, M), dtype=bool)
        np.put_along_axis(mask, self.order[:, :k], True, axis=1)
        return mask


class MetricsReport(BaseModel):
    """All measures of one embedding. Missing values carry a reason in ``skipped``."""
    model_config = ConfigDict(extra="forbid")

    con: float
    tru: float
    rre: float
    dpc: float | None = None
    srm: float | None = None
    acc: float | None = None
    k_used: int
    dpc_pairs: int | None = Field(None, description="Number of sampled pairs when DPC is estimated")
    skipped: dict[str, str] = Field(default_factory=dict)

    def values(self) -> dict[str, float | None]:
        return {"con": self.con, "tru": self.tru, "rre": self.rre, "dpc": self.dpc, "srm": self.srm, "acc": self.acc}


def default_k(M: int) -> int:
    return max(1, M // 20)


def _tables(X_in, X_lat) -> tuple[RankTable, RankTable]:
    X_in = np.asarray(X_in, dtype=np.float64)
    X_lat = np.asarray(X_lat, dtype=np.float64)
    if X_in.shape[0] != X_lat.shape[0]:
        raise DataError(f"spaces disagree on the number of points: {X_in.shape[0]} vs {X_lat.shape[0]}")
    return RankTable.from_points(X_in), RankTable.from_points(X_lat)


def _check_k(M: int, k: int) -> None:
    if not 1 <= k <= M - 1 or 2 * M - 3 * k - 1 <= 0:
        raise DataError(f"k={k} is out of range for {M} points (need 1 <= k and 3k < 2M - 1)")


def _rank_penalty(near: RankTable, far: RankTable, k: int) -> float:
    """``1 − T Σ_i Σ_{j∈N_near, j∉N_far} (r_far − k)``."""
    M = near.size
    _check_k(M, k)
    missing = near.knn_mask(k) & ~far.knn_mask(k)
    total = float(np.sum(far.ranks[missing] - k))
    return 1.0 - 2.0 / (M * k * (2 * M - 3 * k - 1)) * total


def continuity(X_in, X_lat, k: int, *, tables: tuple[RankTable, RankTable] | None = None) -> float:
    """Input neighbors that the latent space pushes out of its k-NN, weighted by latent rank."""
    t_in, t_lat = tables or _tables(X_in, X_lat)
    return _rank_penalty(t_in, t_lat, k)


def trustworthiness(X_in, X_lat, k: int, *, tables: tuple[RankTable, RankTable] | None = None) -> float:
    """Latent neighbors that are not input neighbors, weighted by input rank."""
    t_in, t_lat = tables or _tables(X_in, X_lat)
    return _rank_penalty(t_lat, t_in, k)


def rre(X_in, X_lat, k: int, *, tables: tuple[RankTable, RankTable] | None = None) -> float:
    """Mean relative rank error averaged over both directions."""
    t_in, t_lat = tables or _tables(X_in, X_lat)
    M = t_in.size
    if not 1 <= k <= M - 1:
        raise DataError(f"k={k} is out of range for {M} points")

    kp = np.arange(1, k + 1)
    scale = 1.0 / (M * np.sum(np.abs(M - 2 * kp) / kp))

    def relative(base: RankTable, other: RankTable) -> float:
        rows = np.arange(M)[:, None]
        cols = base.order[:, :k]
        r = base.ranks[rows, cols]
        r_other = other.ranks[rows, cols]
        return scale * float(np.sum(np.abs(r - r_other) / r))

    return 0.5 * (relative(t_lat, t_in) + relative(t_in, t_lat))


def dpc(X_in, X_lat, *, seed: int = 0) -> tuple[float | None, int | None]:
    """Pearson correlation of pairwise distances.

    Returns ``(value, sampled_pairs)``. ``value`` is None when either space has
    zero distance variance. Above ``DPC_FULL_LIMIT`` points a seeded sample of
    ordered pairs is used and its size returned.
    """
    X_in = np.asarray(X_in, dtype=np.float64)
    X_lat = np.asarray(X_lat, dtype=np.float64)
    M = X_in.shape[0]
    if M < 3:
        raise DataError(f"DPC needs at least 3 points, got {M}")
    if X_lat.shape[0] != M:
        raise DataError(f"spaces disagree on the number of points: {M} vs {X_lat.shape[0]}")

    sampled = None
    if M <= DPC_FULL_LIMIT:
        upper = np.triu_indices(M, 1)
        d_in = np.sqrt(pairwise_sq_distances(X_in)[upper])
        d_lat = np.sqrt(pairwise_sq_distances(X_lat)[upper])
    else:
        rng = make_rng(seed)
        i = rng.integers(0, M, size=DPC_SAMPLE_PAIRS)
        j = (i + rng.integers(1, M, size=DPC_SAMPLE_PAIRS)) % M
        d_in = np.sqrt(np.square(X_in[i] - X_in[j]).sum(axis=1))
        d_lat = np.sqrt(np.square(X_lat[i] - X_lat[j]).sum(axis=1))
        sampled = DPC_SAMPLE_PAIRS

    a = d_in - d_in.mean()
    b = d_lat - d_lat.mean()
    var_a, var_b = float(np.dot(a, a)), float(np.dot(b, b))
    if var_a == 0 or var_b == 0:
        logger.warning("DPC undefined: pairwise distances have zero variance")
        return None, sampled

    return float(np.clip(np.dot(a, b) / np.sqrt(var_a * var_b), -1.0, 1.0)), sampled


def class_scatter(X, labels, classes) -> np.ndarray:
    """Mean distance of each class's points to the class centroid."""
    X = np.asarray(X, dtype=np.float64)
    scatter = np.empty(len(classes))
    for c, label in enumerate(classes):
        members = X[labels == label]
        if not members.shape[0]:
            raise DataError(f"class {label} has no points")
        scatter[c] = float(np.mean(np.sqrt(sq_distances_between(members, members.mean(axis=0, keepdims=True))[:, 0])))
    return scatter


def _scatter_ranks(scatter: np.ndarray) -> np.ndarray:
    ranks = np.empty(scatter.size, dtype=np.int64)
    ranks[np.argsort(scatter, kind="stable")] = np.arange(1, scatter.size + 1)
    return ranks


def srm(X_in, X_lat, labels) -> float:
    """Normalized footrule distance between class-scatter rankings."""
    if labels is None:
        raise DataError("scatter rank mismatch needs labels")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    C = classes.size

    r_in = _scatter_ranks(class_scatter(X_in, labels, classes))
    r_lat = _scatter_ranks(class_scatter(X_lat, labels, classes))
    return float(np.abs(r_in - r_lat).sum()) / C ** 2


def _fit_pegasos(X: Matrix, Y: np.ndarray, rng) -> Matrix:
    """One-vs-rest hinge classifiers trained jointly by mini-batch Pegasos.

    ``Y`` holds ±1 targets per class column. Each column is projected onto
    the ball of radius 1/√λ after every step.
    """
    n, d = X.shape
    W = np.zeros((d, Y.shape[1]))
    radius = 1.0 / np.sqrt(ACC_LAMBDA)

    for t in range(1, ACC_ITERATIONS + 1):
        batch = rng.integers(0, n, size=ACC_BATCH)
        Xb, Yb = X[batch], Y[batch]
        violated = (Yb * (Xb @ W)) < 1.0

        eta = 1.0 / (ACC_LAMBDA * t)
        W = (1.0 - eta * ACC_LAMBDA) * W + (eta / ACC_BATCH) * (Xb.T @ (Yb * violated))

        norms = np.linalg.norm(W, axis=0)
        shrink = np.minimum(1.0, radius / np.where(norms > 0, norms, 1.0))
        W *= shrink

    return W


def acc(X_lat, labels, seed: int = 0) -> float:
    """Mean 5-fold accuracy of a linear one-vs-rest hinge classifier."""
    X = np.asarray(X_lat, dtype=np.float64)
    if labels is None:
        raise DataError("accuracy needs labels")
    labels = np.asarray(labels)
    classes = np.unique(labels)
    n = X.shape[0]

    if classes.size < 2:
        raise DataError(f"accuracy needs at least 2 classes, got {classes.size}")
    if n < ACC_MIN_SAMPLES:
        raise DataError(f"accuracy needs at least {ACC_MIN_SAMPLES} samples, got {n}")

    rng = make_rng(seed)
    folds = np.array_split(rng.permutation(n), ACC_FOLDS)

    scores = []
    for f, test in enumerate(folds):
        train = np.concatenate([fold for g, fold in enumerate(folds) if g != f])

        mean = X[train].mean(axis=0)
        std = X[train].std(axis=0)
        std[std == 0] = 1.0

        def design(rows):
            Z = (X[rows] - mean) / std
            return np.hstack([Z, np.ones((Z.shape[0], 1))])

        Y = np.where(labels[train][:, None] == classes[None, :], 1.0, -1.0)
        W = _fit_pegasos(design(train), Y, rng)

        predicted = classes[np.argmax(design(test) @ W, axis=1)]
        scores.append(float(np.mean(predicted == labels[test])))

    return float(np.mean(scores))


def evaluate_all(X_in, X_lat, labels=None, k: int | None = None, *, seed: int = 0) -> MetricsReport:
    """Every measure between two spaces, with ``k = max(1, ⌊M/20⌋)`` by default."""
    X_in = np.asarray(X_in, dtype=np.float64)
    X_lat = np.asarray(X_lat, dtype=np.float64)
    M = X_in.shape[0]
    k = default_k(M) if k is None else k
    _check_k(M, k)

    tables = _tables(X_in, X_lat)
    skipped: dict[str, str] = {}

    value, pairs = dpc(X_in, X_lat, seed=seed)
    if value is None:
        skipped["dpc"] = "undefined: zero distance variance"

    srm_value = acc_value = None
    if labels is None:
        skipped["srm"] = skipped["acc"] = "no labels"
    else:
        labels = np.asarray(labels)
        srm_value = srm(X_in, X_lat, labels)
        n_classes = np.unique(labels).size
        if n_classes < 2:
            skipped["acc"] = "fewer than 2 classes"
        elif M < ACC_MIN_SAMPLES:
            skipped["acc"] = f"fewer than {ACC_MIN_SAMPLES} samples"
        else:
            acc_value = acc(X_lat, labels, seed)

    for name, reason in skipped.items():
        logger.debug("Skipped %s: %s", name, reason)

    return MetricsReport(
        con=continuity(X_in, X_lat, k, tables=tables),
        tru=trustworthiness(X_in, X_lat, k, tables=tables),
        rre=rre(X_in, X_lat, k, tables=tables),
        dpc=value,
        srm=srm_value,
        acc=acc_value,
        k_used=k,
        dpc_pairs=pairs,
        skipped=skipped,
    )
