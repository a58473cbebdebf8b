"""Unit tests for gaussian_oracle module."""

import math

import numpy as np
import pytest
from parameterized import parameterized

from mflsi import gaussian_oracle as oracle
from mflsi.errors import DivergentPrefactorError, DomainError
from mflsi.gaussian_oracle import GaussianMeasure


def random_spd(gen, k, low=0.3, high=2.0):
    """Random symmetric positive-definite matrix with spectrum in [low, high]."""
    q, _ = np.linalg.qr(gen.normal(size=(k, k)))
    return (q * gen.uniform(low, high, size=k)) @ q.T


class TestGaussianMeasure:
    """Test GaussianMeasure."""

    def test_point_mass(self):
        """Test the zero-covariance representation of a point mass."""
        point = GaussianMeasure.point([1.0, 2.0])
        assert point.is_point
        assert point.dim == 2

    def test_rejects_asymmetric(self):
        """Test a non-symmetric covariance."""
        with pytest.raises(DomainError, match="symmetric"):
            GaussianMeasure(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        """Test a covariance with a negative eigenvalue."""
        with pytest.raises(DomainError, match="positive definite"):
            GaussianMeasure(np.zeros(2), np.diag([1.0, -1.0]))

    def test_product(self):
        """Test N independent copies of a d-dimensional Gaussian."""
        measure = GaussianMeasure.product([1.0, -1.0], np.diag([2.0, 3.0]), 3)
        assert measure.dim == 6
        np.testing.assert_array_equal(measure.mean, [1.0, -1.0] * 3)
        np.testing.assert_array_equal(np.diag(measure.cov), [2.0, 3.0] * 3)

    def test_sample_moments(self, rng):
        """Test sampled mean and covariance."""
        cov = random_spd(rng, 3)
        measure = GaussianMeasure(np.array([1.0, 0.0, -2.0]), cov)
        samples = measure.sample(np.random.default_rng(1), 200_000)
        np.testing.assert_allclose(samples.mean(axis=0), measure.mean, atol=0.02)
        np.testing.assert_allclose(np.cov(samples.T), cov, atol=0.03)


class TestGibbsGaussian:
    """Test the exact Gibbs measure."""

    def test_no_interaction(self):
        """Test cov = I/a when λ = 0."""
        measure = oracle.gibbs_gaussian(2.0, 0.0, 3, 2)
        np.testing.assert_allclose(measure.cov, np.eye(6) / 2.0, atol=1e-15)

    def test_two_particles(self):
        """Test eigenpairs {1, 1/2} along (1, −1)/√2 and (1, 1)/√2."""
        cov = oracle.gibbs_gaussian(1.0, 1.0, 2, 1).cov
        minus = np.array([1.0, -1.0]) / math.sqrt(2.0)
        plus = np.array([1.0, 1.0]) / math.sqrt(2.0)
        np.testing.assert_allclose(cov @ minus, minus, atol=1e-15)
        np.testing.assert_allclose(cov @ plus, 0.5 * plus, atol=1e-15)

    def test_inverse_of_precision(self):
        """Test cov · precision = I."""
        measure = oracle.gibbs_gaussian(1.5, 0.7, 5, 3)
        precision = oracle.gibbs_precision(1.5, 0.7, 5, 3)
        np.testing.assert_allclose(measure.cov @ precision, np.eye(15), atol=1e-13)

    def test_spectrum(self):
        """Test eigenvalues and multiplicities of the precision."""
        assert oracle.gibbs_spectrum(1.0, 2.0, 4, 3) == [(1.0, 9), (3.0, 3)]
        assert oracle.gibbs_spectrum(1.0, 2.0, 1, 3) == [(3.0, 3)]
        eigenvalues = np.linalg.eigvalsh(oracle.gibbs_precision(1.0, 2.0, 4, 3))
        np.testing.assert_allclose(eigenvalues, [1.0] * 9 + [3.0] * 3, atol=1e-13)

    @parameterized.expand([(2,), (10,), (100,)])
    def test_exact_gap_uniform_in_n(self, n):
        """Test λ_min(P) = a for λ ≥ 0."""
        assert oracle.exact_gap(0.8, 1.3, n) == 0.8

    def test_not_normalizable(self):
        """Test a + λ ≤ 0."""
        with pytest.raises(DomainError, match="normalizable"):
            oracle.gibbs_gaussian(1.0, -1.0, 3, 1)


class TestOuFlow:
    """Test ou_flow and euler_maruyama_moments."""

    def test_time_zero(self, rng):
        """Test t = 0 returns m0 exactly."""
        m0 = GaussianMeasure(rng.normal(size=3), random_spd(rng, 3))
        assert oracle.ou_flow(m0, random_spd(rng, 3), 0.0) is m0

    def test_stationary_limit(self, rng):
        """Test t → ∞ gives N(0, P⁻¹)."""
        precision = random_spd(rng, 3, low=0.5)
        m0 = GaussianMeasure(rng.normal(size=3), random_spd(rng, 3))
        flowed = oracle.ou_flow(m0, precision, 200.0)
        np.testing.assert_allclose(flowed.mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(flowed.cov, np.linalg.inv(precision), atol=1e-12)

    def test_scalar_formula(self):
        """Test cov ≈ 1 − e⁻² from a near point mass."""
        m0 = GaussianMeasure([0.0], [[1e-12]])
        flowed = oracle.ou_flow(m0, np.eye(1), 1.0)
        assert flowed.cov[0, 0] == pytest.approx(1.0 - math.exp(-2.0), abs=1e-12)

    def test_point_mass_start(self):
        """Test a point mass is transported and spread."""
        flowed = oracle.ou_flow(GaussianMeasure.point([2.0]), 3.0 * np.eye(1), 0.5)
        assert flowed.mean[0] == pytest.approx(2.0 * math.exp(-1.5))
        assert flowed.cov[0, 0] == pytest.approx((1.0 - math.exp(-3.0)) / 3.0)

    def test_zero_eigenvalue_is_brownian(self):
        """Test the variance grows as 2t along a flat direction."""
        flowed = oracle.ou_flow(GaussianMeasure.point([0.0, 0.0]), np.diag([0.0, 1.0]), 0.7)
        assert flowed.cov[0, 0] == pytest.approx(1.4)

    def test_negative_time(self):
        """Test t < 0."""
        with pytest.raises(DomainError):
            oracle.ou_flow(GaussianMeasure.point([0.0]), np.eye(1), -1.0)

    def test_euler_maruyama_converges(self):
        """Test the Euler–Maruyama law approaches the exact flow with first order."""
        precision = oracle.gibbs_precision(1.0, 1.0, 2, 1)
        m0 = GaussianMeasure([1.0, -0.5], 0.2 * np.eye(2))
        exact = oracle.ou_flow(m0, precision, 1.0)
        errors = []
        for dt in (0.02, 0.01, 0.005):
            em = oracle.euler_maruyama_moments(m0, precision, dt, round(1.0 / dt))
            errors.append(np.abs(em.cov - exact.cov).max() + np.abs(em.mean - exact.mean).max())
        assert 1.5 <= errors[0] / errors[1] <= 3.0
        assert 1.5 <= errors[1] / errors[2] <= 3.0


class TestDivergences:
    """Test kl_gaussian, fisher_gaussian, w2_gaussian and w2_point."""

    def test_identical(self, rng):
        """Test all divergences vanish for p = q."""
        p = GaussianMeasure(rng.normal(size=3), random_spd(rng, 3))
        assert oracle.kl_gaussian(p, p) == pytest.approx(0.0, abs=1e-12)
        assert oracle.fisher_gaussian(p, p) == pytest.approx(0.0, abs=1e-12)
        assert oracle.w2_gaussian(p, p) == pytest.approx(0.0, abs=1e-6)

    def test_shifted_standard(self):
        """Test kl = μ²/2, fisher = μ², w2 = |μ| for N(μ, 1) against N(0, 1)."""
        p, q = GaussianMeasure([1.7], [[1.0]]), GaussianMeasure([0.0], [[1.0]])
        assert oracle.kl_gaussian(p, q) == pytest.approx(1.7**2 / 2)
        assert oracle.fisher_gaussian(p, q) == pytest.approx(1.7**2)
        assert oracle.w2_gaussian(p, q) == pytest.approx(1.7)

    def test_scalar_variances(self):
        """Test the scalar formulas for differing variances."""
        p, q = GaussianMeasure([0.0], [[4.0]]), GaussianMeasure([0.0], [[1.0]])
        assert oracle.kl_gaussian(p, q) == pytest.approx(0.5 * (4.0 - 1.0 - math.log(4.0)))
        assert oracle.fisher_gaussian(p, q) == pytest.approx((1.0 - 0.25) ** 2 * 4.0)
        assert oracle.w2_gaussian(p, q) == pytest.approx(1.0)

    @pytest.mark.slow
    def test_monte_carlo_agreement(self, rng):
        """Test kl and fisher against Monte Carlo integrals of log(dp/dq) and |∇log(dp/dq)|²."""
        p = GaussianMeasure(rng.normal(size=3) * 0.5, random_spd(rng, 3, 0.5, 1.5))
        q = GaussianMeasure(np.zeros(3), random_spd(rng, 3, 0.5, 1.5))
        x = p.sample(np.random.default_rng(11), 1_000_000)
        p_inv, q_inv = np.linalg.inv(p.cov), np.linalg.inv(q.cov)
        dp, dq = x - p.mean, x - q.mean
        log_ratio = (
            -0.5 * np.einsum("ni,ij,nj->n", dp, p_inv, dp)
            + 0.5 * np.einsum("ni,ij,nj->n", dq, q_inv, dq)
            - 0.5 * np.log(np.linalg.det(p.cov) / np.linalg.det(q.cov))
        )
        score = -dp @ p_inv + dq @ q_inv
        fisher = np.sum(score**2, axis=1)
        stderr = log_ratio.std() / 1000.0
        assert abs(log_ratio.mean() - oracle.kl_gaussian(p, q)) <= 3 * stderr
        assert abs(fisher.mean() - oracle.fisher_gaussian(p, q)) <= 3 * fisher.std() / 1000.0

    def test_gaussian_lsi(self, rng):
        """Test 2·λ_min(Σq⁻¹)·kl ≤ fisher for random pairs with shared q."""
        q = GaussianMeasure(np.zeros(3), random_spd(rng, 3))
        rho = 1.0 / np.linalg.eigvalsh(q.cov).max()
        for _ in range(50):
            p = GaussianMeasure(rng.normal(size=3), random_spd(rng, 3))
            assert 2.0 * rho * oracle.kl_gaussian(p, q) <= oracle.fisher_gaussian(p, q) + 1e-12

    def test_entropy_decay(self, rng):
        """Test kl(p_t, stationary) ≤ e^{−2λ_min t}·kl(p_0, stationary), with equality along the slow mode."""
        precision = oracle.gibbs_precision(1.0, 1.0, 3, 1)
        target = oracle.stationary(precision)
        p0 = GaussianMeasure(rng.normal(size=3), 0.5 * random_spd(rng, 3))
        h0 = oracle.kl_gaussian(p0, target)
        for t in (0.1, 0.5, 1.0):
            assert oracle.kl_gaussian(oracle.ou_flow(p0, precision, t), target) <= math.exp(-2 * t) * h0 + 1e-12
        slow = GaussianMeasure(np.array([1.0, -1.0, 0.0]), target.cov)
        h_slow = oracle.kl_gaussian(slow, target)
        assert oracle.kl_gaussian(oracle.ou_flow(slow, precision, 0.8), target) == pytest.approx(math.exp(-1.6) * h_slow)

    def test_w2_point_moment_identity(self, rng):
        """Test w2_point² = ∫|x − y|² dq(y) by Monte Carlo."""
        q = GaussianMeasure(rng.normal(size=2), random_spd(rng, 2))
        x = np.array([0.3, -1.2])
        y = q.sample(np.random.default_rng(2), 400_000)
        values = np.sum((x - y) ** 2, axis=1)
        assert abs(values.mean() - oracle.w2_point(x, q) ** 2) <= 3 * values.std() / math.sqrt(values.size)

    def test_point_mass_rejected(self):
        """Test that kl, fisher and w2 need nondegenerate covariances."""
        point, q = GaussianMeasure.point([0.0]), GaussianMeasure([0.0], [[1.0]])
        for func in (oracle.kl_gaussian, oracle.fisher_gaussian, oracle.w2_gaussian):
            with pytest.raises(DomainError, match="singular"):
                func(point, q)
        assert oracle.w2_point([2.0], point) == 2.0

    def test_dimension_mismatch(self):
        """Test measures on different spaces."""
        with pytest.raises(DomainError, match="dimension"):
            oracle.kl_gaussian(GaussianMeasure([0.0], [[1.0]]), GaussianMeasure([0.0, 0.0], np.eye(2)))


class TestQuadraticMgf:
    """Test quadratic_mgf."""

    def test_scalar(self):
        """Test log E exp(c(b + √s Z)²) = −½log(1 − 2cs) + cb²/(1 − 2cs)."""
        m0 = GaussianMeasure([1.0], [[0.5]])
        expected = -0.5 * math.log(1 - 0.2 * 0.5) + 0.1 * 1.0 / (1 - 0.2 * 0.5)
        assert oracle.quadratic_mgf(m0, [0.0], 0.1) == pytest.approx(expected)

    def test_point(self):
        """Test a point mass gives c|x − center|²."""
        assert oracle.quadratic_mgf(GaussianMeasure.point([1.0, 2.0]), [1.0, 0.0], 0.3) == pytest.approx(1.2)

    def test_divergent(self):
        """Test 2c·λ_max(Σ) ≥ 1."""
        with pytest.raises(DivergentPrefactorError):
            oracle.quadratic_mgf(GaussianMeasure([0.0], [[1.0]]), [0.0], 0.5)

    def test_monte_carlo(self, rng):
        """Test against a Monte Carlo average in two dimensions."""
        m0 = GaussianMeasure([0.5, -0.2], random_spd(rng, 2, 0.2, 0.6))
        x = m0.sample(np.random.default_rng(4), 400_000)
        values = np.exp(0.2 * np.sum((x - [0.1, 0.1]) ** 2, axis=1))
        stderr = values.std() / math.sqrt(values.size)
        assert abs(math.log(values.mean()) - oracle.quadratic_mgf(m0, [0.1, 0.1], 0.2)) <= 3 * stderr / values.mean()
