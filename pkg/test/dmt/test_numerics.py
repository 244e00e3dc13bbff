"""Tests for matrix helpers, randomness and special functions."""
import math

import numpy as np
import pytest

from dmt.errors import DataError, DomainError, NumericalError
from dmt.numerics import (
    as_matrix, derived_rng, finite_diff_gradient, log_gamma, make_rng,
    pairwise_sq_distances, restore_rng, rng_state, sq_distances_between,
)


def naive_sq_distances(A):
    M = A.shape[0]
    D = np.zeros((M, M))
    for i in range(M):
        for j in range(M):
            D[i, j] = sum((A[i, c] - A[j, c]) ** 2 for c in range(A.shape[1]))
    return D


def log_gamma_oracle(x: float) -> float:
    """Recurrence Γ(x+1) = xΓ(x) up past 20, then the Stirling series."""
    shift = 0.0
    while x < 20.0:
        shift -= math.log(x)
        x += 1.0
    series = 1 / (12 * x) - 1 / (360 * x**3) + 1 / (1260 * x**5) - 1 / (1680 * x**7)
    return (x - 0.5) * math.log(x) - x + 0.5 * math.log(2 * math.pi) + series + shift


class TestPairwiseDistances:
    """Test squared distance matrices."""

    def test_three_four_five(self):
        """Test the 3-4-5 triangle."""
        D = pairwise_sq_distances(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert D.tolist() == [[0.0, 25.0], [25.0, 0.0]]

    def test_identical_rows(self):
        """Test that duplicated rows give an all-zero matrix."""
        A = np.tile([[1.5, -2.0, 7.0]], (4, 1))
        assert not pairwise_sq_distances(A).any()

    def test_matches_naive_loop(self):
        """Test against a naive double loop."""
        A = make_rng(3).normal(size=(5, 3))
        np.testing.assert_allclose(pairwise_sq_distances(A), naive_sq_distances(A), rtol=0, atol=1e-12)

    def test_symmetric_with_zero_diagonal(self):
        """Test exact symmetry and a zero diagonal."""
        D = pairwise_sq_distances(make_rng(1).normal(size=(30, 7)))
        assert np.array_equal(D, D.T)
        assert not np.diag(D).any()

    def test_pair_bits_independent_of_batch(self):
        """Test that a pair's distance does not depend on the other rows computed with it."""
        A = make_rng(2).normal(size=(40, 6))
        full = sq_distances_between(A, A)
        part = sq_distances_between(A[[3, 17, 29]], A[[5, 17]])
        assert part[0, 0] == full[3, 5]
        assert part[2, 1] == full[29, 17]

    @pytest.mark.parametrize("seed", range(10))
    def test_rotation_invariant(self, seed):
        """Test that a random orthogonal map leaves every distance unchanged."""
        rng = make_rng(seed)
        A = rng.normal(size=(50, int(rng.integers(2, 9))))
        Q, R = np.linalg.qr(rng.normal(size=(A.shape[1], A.shape[1])))
        rotated = A @ (Q * np.sign(np.diag(R)))
        np.testing.assert_allclose(pairwise_sq_distances(rotated), pairwise_sq_distances(A), rtol=1e-10, atol=1e-10)

    def test_rejects_non_matrix(self):
        """Test that a 3-D array is refused."""
        with pytest.raises(DataError):
            pairwise_sq_distances(np.zeros((2, 2, 2)))


class TestLogGamma:
    """Test log_gamma."""

    def test_one(self):
        """Test Γ(1) = 1."""
        assert log_gamma(1.0) == pytest.approx(0.0, abs=1e-15)

    def test_half(self):
        """Test Γ(1/2) = √π."""
        assert log_gamma(0.5) == pytest.approx(0.5723649429247001, abs=1e-12)

    def test_recurrence_oracle(self):
        """Test x = 7.3 against a recurrence plus series oracle."""
        assert log_gamma(7.3) == pytest.approx(log_gamma_oracle(7.3), abs=1e-9)

    def test_recurrence(self):
        """Test lgΓ(x+1) = lgΓ(x) + ln x on random x in [0.1, 100]."""
        x = make_rng(9).uniform(0.1, 100.0, size=1000)
        np.testing.assert_allclose(log_gamma(x + 1.0), log_gamma(x) + np.log(x), rtol=0, atol=1e-11)

    def test_array_input(self):
        """Test that arrays are accepted and returned."""
        values = log_gamma(np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(values, [0.0, 0.0, math.log(2.0)], atol=1e-14)

    @pytest.mark.parametrize("x", [0.0, -1.0, float("nan")])
    def test_domain(self, x):
        """Test that nonpositive input raises DomainError."""
        with pytest.raises(DomainError):
            log_gamma(x)


class TestFiniteDifferences:
    """Test the central-difference oracle."""

    def test_quadratic(self):
        """Test f(p) = p·p at (1, 2)."""
        grad = finite_diff_gradient(lambda p: float(p @ p), [1.0, 2.0], h=1e-5)
        np.testing.assert_allclose(grad, [2.0, 4.0], rtol=1e-8)

    def test_constant(self):
        """Test that a constant has zero gradient."""
        assert not finite_diff_gradient(lambda p: 3.0, np.ones(4)).any()

    def test_non_finite(self):
        """Test that a non-finite evaluation is reported."""
        with pytest.raises(NumericalError):
            finite_diff_gradient(lambda p: float("inf") if p[0] < 0 else 0.0, [0.0])

    def test_bad_step(self):
        """Test that a nonpositive step is refused."""
        with pytest.raises(DomainError):
            finite_diff_gradient(lambda p: 0.0, [1.0], h=0.0)


class TestSeededRng:
    """Test seeded generators."""

    def test_same_seed_same_draws(self):
        """Test that identical seeds give identical sequences."""
        assert np.array_equal(make_rng(11).normal(size=50), make_rng(11).normal(size=50))

    def test_state_round_trip(self):
        """Test that a restored state continues the same sequence."""
        rng = make_rng(5)
        rng.normal(size=7)
        state = rng_state(rng)
        expected = rng.normal(size=20)
        assert np.array_equal(restore_rng(state).normal(size=20), expected)

    def test_derived_stream_is_independent(self):
        """Test that a derived stream differs from the base one."""
        assert not np.array_equal(make_rng(5).normal(size=10), derived_rng(5, 1).normal(size=10))


class TestAsMatrix:
    """Test matrix coercion."""

    def test_row_vector(self):
        """Test that a 1-D input becomes one row."""
        assert as_matrix([1, 2, 3]).shape == (1, 3)

    def test_non_finite(self):
        """Test that NaN is rejected."""
        with pytest.raises(NumericalError):
            as_matrix([[1.0, float("nan")]])

    def test_non_numeric(self):
        """Test that text is rejected."""
        with pytest.raises(DataError):
            as_matrix([["a", "b"]])
