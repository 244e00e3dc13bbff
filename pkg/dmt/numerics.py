"""Dense matrix arithmetic, seeded randomness and special functions.

Everything is 64-bit. A "matrix" is a C-contiguous 2-D ``numpy.ndarray`` of
``float64``; the helpers here validate that contract at module boundaries.

Randomness comes from numpy's ``Generator`` over ``PCG64``. The same seed
yields the same draw sequence on a given platform, and the generator state is
a plain dict that can be stored in checkpoints and restored later.
"""
import logging
from typing import Callable

import numpy as np
from scipy import special

from .errors import DataError, DomainError, NumericalError

__all__ = (
    "Matrix", "SeededRng", "make_rng", "derived_rng", "rng_state", "restore_rng",
    "as_matrix", "ensure_finite", "pairwise_sq_distances", "sq_distances_between",
    "log_gamma", "finite_diff_gradient",
)

logger = logging.getLogger(__name__)

Matrix = np.ndarray
SeededRng = np.random.Generator

# Rows per block when expanding (rows, M, N) difference tensors.
_BLOCK_ELEMENTS = 1 << 22


def make_rng(seed: int) -> SeededRng:
    """Seeded generator. No OS entropy is ever consulted."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def derived_rng(seed: int, stream: int) -> SeededRng:
    """Independent generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),))))


def rng_state(rng: SeededRng) -> dict:
    return rng.bit_generator.state


def restore_rng(state: dict) -> SeededRng:
    bit_generator = np.random.PCG64()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def as_matrix(data, *, name: str = "matrix") -> Matrix:
    """Coerce to a contiguous float64 2-D array with finite entries."""
    try:
        array = np.ascontiguousarray(data, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise DataError(f"{name} is not numeric: {e}") from e

    if array.ndim == 1:
        array = array.reshape(1, -1) if array.size else array.reshape(0, 0)
    if array.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {array.shape}")

    return ensure_finite(array, name=name)


def ensure_finite(array: np.ndarray, *, name: str = "value") -> np.ndarray:
    if not np.all(np.isfinite(array)):
        raise NumericalError(f"{name} contains non-finite entries")
    return array


def sq_distances_between(A: Matrix, B: Matrix) -> Matrix:
    """Squared Euclidean distances between every row of ``A`` and every row of ``B``.

    Differences are formed explicitly (no Gram-matrix expansion) and summed
    per pair over the feature axis in a fixed order, so any (a, b) pair gives
    the same bits regardless of which block or batch it is computed in.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    m, n = A.shape[0], B.shape[0]
    out = np.empty((m, n), dtype=np.float64)

    if m == 0 or n == 0:
        return out

    rows = max(1, _BLOCK_ELEMENTS // max(1, n * A.shape[1]))
    for start in range(0, m, rows):
        diff = A[start:start + rows, None, :] - B[None, :, :]
        np.square(diff, out=diff)
        diff.sum(axis=2, out=out[start:start + rows])

    return out


def pairwise_sq_distances(A: Matrix) -> Matrix:
    """Symmetric M×M matrix of squared Euclidean distances with a zero diagonal.

    The upper triangle is computed and mirrored so the result equals its
    transpose exactly.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {A.shape}")

    D = np.triu(sq_distances_between(A, A), 1)
    return D + D.T


def log_gamma(x):
    """Natural log of Γ(x) for x > 0.

    Accepts a scalar or an array; returns the same kind.
    """
    values = np.asarray(x, dtype=np.float64)
    if np.any(~(values > 0)):
        raise DomainError(f"log_gamma is defined for x > 0, got {x!r}")

    result = special.gammaln(values)
    return float(result) if result.ndim == 0 else result


def finite_diff_gradient(f: Callable[[np.ndarray], float], p, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``p``.

    Used as the oracle for every analytic gradient in the package.
    """
    if not h > 0:
        raise DomainError(f"step must be positive, got {h!r}")

    p = np.array(p, dtype=np.float64).ravel()
    grad = np.empty_like(p)
    shifted = p.copy()

    for k in range(p.size):
        shifted[k] = p[k] + h
        upper = f(shifted)
        shifted[k] = p[k] - h
        lower = f(shifted)
        shifted[k] = p[k]

        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NumericalError(f"non-finite function value while differencing coordinate {k}")

        grad[k] = (upper - lower) / (2.0 * h)

    return grad
