"""Tests for k-NN graphs and the similarity pipeline."""
import math

import numpy as np
import pytest

from dmt.datasets import Dataset, gen_repeat_points
from dmt.errors import DataError, DomainError
from dmt.graph import (
    SIGMA_MAX, SIGMA_MIN, SIGMA_TOL, U_EPS,
    build_knn, c_nu, calibrate, input_similarities, kernel, kernel_evaluations,
    latent_similarities, solve_sigma, solve_sigmas, symmetrize,
)
from dmt.numerics import make_rng, pairwise_sq_distances
from dmt.settings import LossConfig, TrainConfig


def c_nu_oracle(nu: float) -> float:
    log_value = math.log(2 * math.pi) + 2 * (math.lgamma((nu + 1) / 2) - 0.5 * math.log(nu * math.pi) - math.lgamma(nu / 2))
    return math.exp(log_value)


class TestBuildKnn:
    """Test exact nearest neighbors."""

    def test_collinear(self):
        """Test three collinear points at 0, 1 and 3."""
        graph = build_knn(np.array([[0.0], [1.0], [3.0]]), 1)
        assert graph.knn_indices[:, 0].tolist() == [1, 0, 1]
        assert graph.rho.tolist() == [1.0, 1.0, 2.0]

    def test_duplicates_have_zero_rho(self):
        """Test that duplicated points have a zero nearest distance."""
        ds = gen_repeat_points(4, 3, make_rng(0))
        assert not build_knn(ds.features, 2).rho.any()

    def test_matches_full_sort(self):
        """Test against a full stable sort of every row."""
        X = make_rng(6).normal(size=(60, 4))
        graph = build_knn(X, 10)

        D = pairwise_sq_distances(X)
        for i in range(60):
            others = [j for j in range(60) if j != i]
            expected = sorted(others, key=lambda j: (D[i, j], j))[:10]
            assert graph.knn_indices[i].tolist() == expected

    def test_never_contains_self(self):
        """Test that rows exclude the point itself and are unique."""
        graph = build_knn(np.zeros((6, 2)), 5)
        for i, row in enumerate(graph.knn_indices):
            assert i not in row
            assert len(set(row.tolist())) == 5

    def test_k_out_of_range(self):
        """Test that k >= M is refused."""
        with pytest.raises(DataError):
            build_knn(np.zeros((3, 2)), 3)

    def test_neighbor_mask(self):
        """Test restriction of the neighbor relation to a batch."""
        graph = build_knn(np.array([[0.0], [1.0], [3.0], [10.0]]), 1)
        mask = graph.neighbor_mask(np.array([2, 1]))
        assert mask.tolist() == [[False, True], [False, False]]


class TestKernel:
    """Test the normalized squared t kernel."""

    def test_c_nu_one(self):
        """Test C_1 = 2/π."""
        assert c_nu(1.0) == pytest.approx(2 / math.pi, rel=1e-12)

    def test_c_nu_large(self):
        """Test that C_ν approaches 1 for large ν."""
        assert 0.999 <= c_nu(1e6) <= 1.001

    def test_c_nu_small(self):
        """Test a tiny ν against a log-space evaluation."""
        assert c_nu(0.001) == pytest.approx(c_nu_oracle(0.001), rel=1e-9)

    def test_c_nu_domain(self):
        """Test that ν <= 0 is refused."""
        with pytest.raises(DomainError):
            c_nu(0.0)

    def test_at_zero(self):
        """Test that the kernel at zero distance equals C_ν."""
        for nu in (0.001, 1.0, 100.0):
            assert kernel(0.0, 2.5, nu) == pytest.approx(c_nu(nu), rel=1e-15)

    def test_monotone(self):
        """Test strict decrease with distance."""
        assert kernel(1.0, 1.0, 5.0) > kernel(2.0, 1.0, 5.0)

    def test_hand_value(self):
        """Test σ = ν = d² = 1 gives 1/(2π)."""
        assert kernel(1.0, 1.0, 1.0) == pytest.approx(1 / (2 * math.pi), rel=1e-12)

    def test_infinite_distance(self):
        """Test that an infinite distance gives exactly 0."""
        assert kernel(np.inf, 1.0, 1.0) == 0.0

    def test_increasing_in_sigma(self):
        """Test strict increase with σ at a fixed positive distance."""
        rng = make_rng(6)
        for _ in range(1000):
            d_sq, sigma = rng.uniform(0.1, 10.0, size=2)
            nu = float(np.exp(rng.uniform(math.log(0.01), math.log(1000.0))))
            wider = sigma * (1.0 + rng.uniform(0.01, 10.0))
            assert kernel(d_sq, sigma, nu) < kernel(d_sq, wider, nu)

    def test_near_one_at_zero_for_large_nu(self):
        """Test that the peak lies in [0.99, 1] once ν >= 100."""
        rng = make_rng(7)
        nu = np.exp(rng.uniform(math.log(100.0), math.log(1e5), size=200))
        sigma = rng.uniform(1e-3, 1e3, size=200)
        for n, s in zip(nu, sigma):
            assert 0.99 <= kernel(0.0, s, float(n)) <= 1.0

    def test_counts_evaluations(self):
        """Test the per-thread evaluation counter."""
        kernel_evaluations.reset()
        kernel(np.zeros((3, 4)), 1.0, 1.0)
        assert kernel_evaluations.reset() == 12
        assert kernel_evaluations.count == 0


class TestCalibrate:
    """Test ρ calibration."""

    def test_nearest_is_zero(self):
        """Test that the nearest neighbor calibrates to 0."""
        assert calibrate(np.array([4.0, 9.0]), 2.0).tolist() == [0.0, 1.0]

    def test_zero_rho_is_identity(self):
        """Test that ρ = 0 leaves distances unchanged."""
        d = np.array([0.25, 4.0, 16.0])
        np.testing.assert_allclose(calibrate(d, 0.0), d, rtol=1e-15)

    def test_hand_value(self):
        """Test d = 5, ρ = 2."""
        assert calibrate(25.0, 2.0) == pytest.approx(9.0)


class TestSolveSigma:
    """Test the perplexity bisection."""

    def test_residual(self):
        """Test that the solved σ meets the perplexity target."""
        row = make_rng(2).uniform(0.0, 5.0, size=80)
        sigma, converged = solve_sigma(row, 40.0, 100.0)
        assert converged
        assert abs(float(kernel(row, sigma, 100.0).sum()) - math.log2(40.0)) <= 1e-4

    def test_residual_random_instances(self):
        """Test convergence to the target within tolerance on random rows, perplexities and ν."""
        rng = make_rng(8)
        for _ in range(1000):
            row = rng.uniform(0.01, 25.0, size=int(rng.integers(20, 101)))
            q = float(rng.uniform(2.0, 50.0))
            nu = float(np.exp(rng.uniform(math.log(0.5), math.log(100.0))))
            sigma, converged = solve_sigma(row, q, nu)
            assert converged
            assert SIGMA_MIN < sigma < SIGMA_MAX
            assert abs(float(kernel(row, sigma, nu).sum()) - math.log2(q)) <= SIGMA_TOL

    def test_all_zero_distances(self):
        """Test that duplicates make the target unreachable."""
        sigma, converged = solve_sigma(np.zeros(10), 5.0, 100.0)
        assert not converged
        assert sigma == SIGMA_MIN

    def test_scale_covariance(self):
        """Test that scaling distances by c² scales σ by c²."""
        row = make_rng(3).uniform(0.1, 3.0, size=40)
        sigma, _ = solve_sigma(row, 10.0, 2.0)
        scaled, _ = solve_sigma(4.0 * row, 10.0, 2.0)
        assert scaled == pytest.approx(4.0 * sigma, rel=1e-3)

    def test_rows_are_independent(self):
        """Test that the vectorized solver agrees with the single-row one."""
        rows = make_rng(4).uniform(0.0, 2.0, size=(5, 30))
        sigmas, _ = solve_sigmas(rows, 8.0, 10.0)
        for row, sigma in zip(rows, sigmas):
            assert solve_sigma(row, 8.0, 10.0)[0] == pytest.approx(sigma, rel=1e-12)

    def test_bounds(self):
        """Test that σ always stays within the bracket."""
        rows = make_rng(5).uniform(0.0, 1e4, size=(20, 15))
        sigmas, _ = solve_sigmas(rows, 3.0, 1.0)
        assert np.all((sigmas >= SIGMA_MIN) & (sigmas <= SIGMA_MAX))

    def test_perplexity_domain(self):
        """Test that Q <= 1 is refused."""
        with pytest.raises(DomainError):
            solve_sigma(np.ones(3), 1.0, 1.0)


class TestSymmetrize:
    """Test probabilistic-OR symmetrization."""

    def test_certainties(self):
        """Test that 1 OR 1 is 1 before clamping."""
        u = symmetrize(np.array([[0.0, 1.0], [1.0, 0.0]]), clamp=False)
        assert u[0, 1] == 1.0

    def test_halves(self):
        """Test 0.5 OR 0.5 = 0.75."""
        u = symmetrize(np.array([[0.0, 0.5], [0.5, 0.0]]))
        assert u[0, 1] == u[1, 0] == 0.75

    def test_identity_element(self):
        """Test a OR 0 = a."""
        u = symmetrize(np.array([[0.0, 0.3], [0.0, 0.0]]), clamp=False)
        assert u[1, 0] == pytest.approx(0.3)

    def test_clamped_with_zero_diagonal(self):
        """Test the clamp range and the zero diagonal."""
        u = symmetrize(np.array([[0.4, 0.0], [0.0, 1.0]]))
        assert u[0, 1] == U_EPS
        assert not np.diag(u).any()


class TestInputSimilarities:
    """Test the full input pipeline."""

    @pytest.fixture
    def blob(self):
        return Dataset("blob", make_rng(7).normal(size=(50, 5)))

    def test_similarities_in_open_interval(self, blob):
        """Test that every off-diagonal similarity lies in (0, 1)."""
        graph, provider = input_similarities(blob, TrainConfig(loss=LossConfig(q=10.0)))
        u = provider.full()
        off = ~np.eye(50, dtype=bool)
        assert np.all((u[off] > 0) & (u[off] < 1))
        assert graph.sigma_converged.all()

    def test_far_pairs_are_less_similar(self, blob):
        """Test that the farthest pairs carry less similarity than the nearest ones."""
        _, provider = input_similarities(blob, TrainConfig(loss=LossConfig(q=10.0)))
        u = provider.full()
        upper = np.triu_indices(50, 1)
        d = pairwise_sq_distances(blob.features)[upper]
        order = np.argsort(d)
        tenth = order.size // 10
        assert u[upper][order[-tenth:]].mean() < u[upper][order[:tenth]].mean()

    def test_conditional_monotone_per_row(self, blob):
        """Test that u_{j|i} falls as the distance from i grows."""
        _, provider = input_similarities(blob, TrainConfig())
        a = provider.conditional(np.arange(50))
        D = pairwise_sq_distances(blob.features)
        for i in range(50):
            others = np.argsort(np.where(np.arange(50) == i, np.inf, D[i]), kind="stable")[:-1]
            assert np.all(np.diff(a[i, others]) <= 0)

    def test_sigma_residual(self, blob):
        """Test the perplexity residual of every converged point."""
        graph, provider = input_similarities(blob, TrainConfig(loss=LossConfig(q=10.0)))
        a = provider.conditional(np.arange(50))
        sums = a.sum(axis=1)[graph.sigma_converged]
        assert np.all(np.abs(sums - math.log2(10.0)) <= 1e-4)

    def test_repeat_point_duplicates(self):
        """Test that duplicates get the largest similarity, 1 − (1 − C_ν)²."""
        ds = gen_repeat_points(30, 5, make_rng(1))
        graph, provider = input_similarities(ds, TrainConfig())
        u = provider.full()

        expected = 1.0 - (1.0 - c_nu(100.0)) ** 2
        assert u[0, 1] == pytest.approx(expected, rel=1e-12)
        assert u[0, 1] == u.max()
        assert expected < 1.0 - U_EPS
        assert not graph.sigma_converged.any()

    def test_restriction_commutes(self, blob):
        """Test that restricting then symmetrizing equals symmetrizing then restricting."""
        _, provider = input_similarities(blob, TrainConfig())
        batch = np.array([41, 3, 17, 8, 29, 0, 12])
        full = symmetrize(provider.conditional(np.arange(50)))
        np.testing.assert_allclose(provider.restrict(batch), full[np.ix_(batch, batch)], rtol=1e-14, atol=0)

    def test_too_small(self):
        """Test that a single point is refused."""
        with pytest.raises(DataError):
            input_similarities(Dataset("one", np.zeros((1, 2))), TrainConfig())


class TestLatentSimilarities:
    """Test per-batch latent similarities."""

    def test_residual(self):
        """Test that latent σ meets the perplexity target."""
        Z = make_rng(8).normal(size=(40, 2))
        lat = latent_similarities(Z, 1.0, 10.0)
        sums = lat.conditional.sum(axis=1)
        assert lat.converged.all()
        assert np.all(np.abs(sums - math.log2(10.0)) <= 1e-4)

    def test_tiny_nu_clamps(self):
        """Test that an unreachable target at ν = 0.001 clamps σ to its upper bound."""
        lat = latent_similarities(make_rng(9).normal(size=(10, 2)), 0.001, 40.0)
        assert not lat.converged.any()
        assert np.all(lat.sigma == SIGMA_MAX)

    def test_given_sigma_is_used(self):
        """Test that a supplied σ is taken as is."""
        Z = make_rng(10).normal(size=(6, 2))
        sigma = np.full(6, 0.7)
        lat = latent_similarities(Z, 2.0, 5.0, sigma)
        assert lat.sigma is not None
        np.testing.assert_array_equal(lat.sigma, sigma)
