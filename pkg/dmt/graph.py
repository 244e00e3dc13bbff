"""Input-space neighborhoods and the distance-to-similarity pipeline.

Raw distances are calibrated per point by the nearest-neighbor distance ρ_i,
passed through the normalized squared t kernel with a per-point scale σ_i
solved from the perplexity equation ``Σ_j u_{j|i} = log2 Q``, and finally
symmetrized with the probabilistic OR ``u_ij = a + b − ab``.

Similarity sets are plain symmetric float64 matrices with a zero diagonal.
"""
import logging
import math
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .datasets import Dataset
from .errors import DataError, DomainError
from .numerics import Matrix, log_gamma, pairwise_sq_distances, sq_distances_between

if TYPE_CHECKING:
    from .settings import TrainConfig

__all__ = (
    "NeighborGraph", "SimilaritySet", "SimilarityProvider", "LatentSimilarity",
    "build_knn", "c_nu", "kernel", "kernel_evaluations", "solve_sigma", "solve_sigmas",
    "calibrate", "symmetrize", "input_similarities", "latent_similarities", "default_neighbors",
    "SIGMA_MIN", "SIGMA_MAX", "SIGMA_TOL", "SIGMA_MAX_ITER", "U_EPS", "FULL_SUM_LIMIT",
)

logger = logging.getLogger(__name__)

SIGMA_MIN = 1e-10
SIGMA_MAX = 1e6
SIGMA_TOL = 1e-5
SIGMA_MAX_ITER = 64
U_EPS = 1e-6
# Above this many points σ is solved over the k-NN set only.
FULL_SUM_LIMIT = 5000

SimilaritySet = Matrix


class _EvaluationCounter(threading.local):
    """Per-thread count of kernel entries evaluated."""
    count = 0

    def reset(self) -> int:
        count, self.count = self.count, 0
        return count


kernel_evaluations = _EvaluationCounter()


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    knn_indices: np.ndarray
    knn_sq_dists: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray | None = None
    sigma_converged: np.ndarray | None = None
    q: float | None = None
    nu_input: float | None = None

    @property
    def k(self) -> int:
        return self.knn_indices.shape[1]

    def neighbor_mask(self, indices: np.ndarray, k: int | None = None) -> np.ndarray:
        """Boolean M′×M′ mask of ``j ∈ N_i`` restricted to a batch."""
        indices = np.asarray(indices)
        k = self.k if k is None else min(k, self.k)
        position = np.full(self.knn_indices.shape[0], -1, dtype=np.int64)
        position[indices] = np.arange(indices.size)

        neighbors = position[self.knn_indices[indices, :k]]
        mask = np.zeros((indices.size, indices.size), dtype=bool)
        rows, cols = np.nonzero(neighbors >= 0)
        mask[rows, neighbors[rows, cols]] = True
        return mask


def default_neighbors(M: int, q: float) -> int:
    return min(M - 1, max(15, int(math.ceil(3 * q))))


def build_knn(X: Matrix, k: int) -> NeighborGraph:
    """Exact k-NN by full stable sort per row; ties go to the smaller index."""
    X = np.asarray(X, dtype=np.float64)
    M = X.shape[0]
    if not 1 <= k <= M - 1:
        raise DataError(f"k must be in [1, {M - 1}], got {k}")

    indices = np.empty((M, k), dtype=np.int64)
    sq_dists = np.empty((M, k), dtype=np.float64)

    block = max(1, (1 << 22) // max(1, M))
    for start in range(0, M, block):
        stop = min(M, start + block)
        D = sq_distances_between(X[start:stop], X)
        D[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        indices[start:stop] = order
        sq_dists[start:stop] = np.take_along_axis(D, order, axis=1)

    return NeighborGraph(knn_indices=indices, knn_sq_dists=sq_dists, rho=np.sqrt(sq_dists[:, 0]))


def c_nu(nu: float) -> float:
    """Normalizer 2π·(Γ((ν+1)/2) / (√(νπ)·Γ(ν/2)))², evaluated in log space."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu!r}")
    return math.exp(_log_c_nu(nu))


def _log_c_nu(nu: float) -> float:
    return math.log(2 * math.pi) + 2 * (log_gamma((nu + 1) / 2) - 0.5 * math.log(nu * math.pi) - log_gamma(nu / 2))


def kernel(d_sq, sigma, nu: float, *, log_c: float | None = None):
    """Normalized squared t kernel ``C_ν (1 + d²/(σν))^-(ν+1)``.

    Broadcasts over array arguments. An infinite ``d_sq`` yields exactly 0.
    """
    if log_c is None:
        log_c = _log_c_nu(nu)

    d_sq = np.asarray(d_sq, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    value = np.exp(log_c - (nu + 1.0) * np.log1p(d_sq / (sigma * nu)))
    kernel_evaluations.count += value.size
    return float(value) if value.ndim == 0 else value


def calibrate(sq_dists, rho: float):
    """Squared calibrated distances ``max(0, √d² − ρ)²``."""
    if rho < 0:
        raise DomainError(f"rho must be nonnegative, got {rho!r}")
    return np.square(np.maximum(0.0, np.sqrt(np.asarray(sq_dists, dtype=np.float64)) - rho))


def solve_sigmas(cal_sq_dists: Matrix, q: float, nu: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise bisection for σ with ``Σ_j kernel(d², σ, ν) = log2 Q``.

    Entries equal to ``inf`` are excluded from the sums. The bracket
    [SIGMA_MIN, SIGMA_MAX] is halved in log σ. Rows whose target lies outside
    the reachable range are clamped to the nearer bound and flagged as not
    converged.
    """
    if not q > 1:
        raise DomainError(f"perplexity Q must exceed 1, got {q!r}")

    D = np.atleast_2d(np.asarray(cal_sq_dists, dtype=np.float64))
    rows = D.shape[0]
    target = math.log2(q)
    log_c = _log_c_nu(nu)

    def residual(idx, log_sigma):
        sigma = np.exp(log_sigma)[:, None]
        return kernel(D[idx], sigma, nu, log_c=log_c).sum(axis=1) - target

    every = np.arange(rows)
    lo = np.full(rows, math.log(SIGMA_MIN))
    hi = np.full(rows, math.log(SIGMA_MAX))
    f_lo = residual(every, lo)
    f_hi = residual(every, hi)

    sigma = np.empty(rows)
    converged = np.zeros(rows, dtype=bool)

    # Σu is increasing in σ: too large at the lower bound or too small at the upper one is unreachable.
    low_bound = f_lo >= 0
    sigma[low_bound] = SIGMA_MIN
    converged[low_bound] = np.abs(f_lo[low_bound]) <= SIGMA_TOL

    high_bound = ~low_bound & (f_hi <= 0)
    sigma[high_bound] = SIGMA_MAX
    converged[high_bound] = np.abs(f_hi[high_bound]) <= SIGMA_TOL

    active = ~(low_bound | high_bound)
    for _ in range(SIGMA_MAX_ITER):
        idx = np.flatnonzero(active)
        if not idx.size:
            break

        mid = 0.5 * (lo[idx] + hi[idx])
        f = residual(idx, mid)

        done = np.abs(f) <= SIGMA_TOL
        sigma[idx[done]] = np.exp(mid[done])
        converged[idx[done]] = True
        active[idx[done]] = False

        too_wide = f > 0
        hi[idx[too_wide]] = mid[too_wide]
        lo[idx[~too_wide]] = mid[~too_wide]

    if active.any():
        idx = np.flatnonzero(active)
        sigma[idx] = np.exp(0.5 * (lo[idx] + hi[idx]))

    return sigma, converged


def solve_sigma(cal_sq_dists, q: float, nu: float) -> tuple[float, bool]:
    """Single-point form of :func:`solve_sigmas`."""
    row = np.asarray(cal_sq_dists, dtype=np.float64).ravel()
    if not row.size:
        raise DataError("cannot solve sigma for an empty distance vector")

    sigma, converged = solve_sigmas(row[None, :], q, nu)
    return float(sigma[0]), bool(converged[0])


def symmetrize(u_cond: Matrix, *, clamp: bool = True) -> SimilaritySet:
    """Probabilistic-OR symmetrization, clamped to [U_EPS, 1 − U_EPS], zero diagonal."""
    a = np.asarray(u_cond, dtype=np.float64)
    u = a + a.T - a * a.T
    if clamp:
        u = np.clip(u, U_EPS, 1.0 - U_EPS)
    np.fill_diagonal(u, 0.0)
    return u


@dataclass(frozen=True, eq=False)
class SimilarityProvider:
    """Input similarities for any batch of point indices.

    σ and ρ are fixed per point; each request recomputes the batch block from
    the features, so the cost is O(M′²) per batch and restriction commutes
    with symmetrization.
    """
    features: Matrix
    graph: NeighborGraph

    def sq_distances(self, indices) -> Matrix:
        return pairwise_sq_distances(self.features[np.asarray(indices)])

    def conditional(self, indices, sq_dists: Matrix | None = None) -> Matrix:
        """Directional similarities ``u_{j|i}`` within the batch, zero diagonal."""
        indices = np.asarray(indices)
        D = self.sq_distances(indices) if sq_dists is None else sq_dists
        cal = np.square(np.maximum(0.0, np.sqrt(D) - self.graph.rho[indices, None]))
        np.fill_diagonal(cal, np.inf)
        return kernel(cal, self.graph.sigma[indices, None], self.graph.nu_input)

    def restrict(self, indices, sq_dists: Matrix | None = None) -> SimilaritySet:
        return symmetrize(self.conditional(indices, sq_dists))

    def full(self) -> SimilaritySet:
        return self.restrict(np.arange(self.features.shape[0]))


def input_similarities(ds: Dataset, cfg: "TrainConfig") -> tuple[NeighborGraph, SimilarityProvider]:
    """k-NN, calibration and σ solving for the whole dataset."""
    M = ds.size
    if M < 2:
        raise DataError("at least two points are needed to build a neighborhood graph")

    q, nu = cfg.loss.q, cfg.loss.nu_input
    k = cfg.n_neighbors or default_neighbors(M, q)
    k = min(M - 1, max(k, cfg.loss.lis_k))

    graph = build_knn(ds.features, k)
    X = ds.features

    if M <= FULL_SUM_LIMIT:
        sigma = np.empty(M)
        converged = np.empty(M, dtype=bool)
        block = max(1, (1 << 21) // M)
        for start in range(0, M, block):
            stop = min(M, start + block)
            D = sq_distances_between(X[start:stop], X)
            cal = np.square(np.maximum(0.0, np.sqrt(D) - graph.rho[start:stop, None]))
            cal[np.arange(stop - start), np.arange(start, stop)] = np.inf
            sigma[start:stop], converged[start:stop] = solve_sigmas(cal, q, nu)
    else:
        cal = np.square(np.maximum(0.0, np.sqrt(graph.knn_sq_dists) - graph.rho[:, None]))
        sigma, converged = solve_sigmas(cal, q, nu)

    if not converged.all():
        logger.warning("sigma did not converge for %d of %d points (clamped to bounds)", int((~converged).sum()), M)

    graph = NeighborGraph(
        knn_indices=graph.knn_indices,
        knn_sq_dists=graph.knn_sq_dists,
        rho=graph.rho,
        sigma=sigma,
        sigma_converged=converged,
        q=q,
        nu_input=nu,
    )
    logger.debug("Input graph: M=%d k=%d Q=%g nu=%g", M, k, q, nu)
    return graph, SimilarityProvider(X, graph)


@dataclass(frozen=True, eq=False)
class LatentSimilarity:
    """Latent similarity set with the intermediates its gradient needs."""
    sq_dists: Matrix
    conditional: Matrix
    u: SimilaritySet
    unclamped: np.ndarray
    sigma: np.ndarray
    converged: np.ndarray
    nu: float


def latent_similarities(Z: Matrix, nu: float, q: float, sigma: np.ndarray | None = None) -> LatentSimilarity:
    """Similarities among latent points with ρ = 0 and per-point σ.

    σ is solved from the perplexity equation unless given.
    """
    D = pairwise_sq_distances(Z)
    excluded = D.copy()
    np.fill_diagonal(excluded, np.inf)

    if sigma is None:
        sigma, converged = solve_sigmas(excluded, q, nu)
    else:
        sigma = np.asarray(sigma, dtype=np.float64)
        converged = np.ones(sigma.shape, dtype=bool)

    a = kernel(excluded, sigma[:, None], nu)
    raw = a + a.T - a * a.T
    unclamped = (raw > U_EPS) & (raw < 1.0 - U_EPS)
    u = np.clip(raw, U_EPS, 1.0 - U_EPS)
    np.fill_diagonal(u, 0.0)
    np.fill_diagonal(unclamped, False)

    return LatentSimilarity(D, a, u, unclamped, sigma, converged, nu)
