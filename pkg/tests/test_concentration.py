"""Unit tests for concentration module."""

import math

import numpy as np
import pytest
from parameterized import parameterized
from scipy import stats

from mflsi import concentration, constants
from mflsi.concentration import ConcentrationQuery
from mflsi.dynamics import InitialLaw
from mflsi.energy import GaussianMeanField
from mflsi.errors import DivergentPrefactorError, DomainError, RegimeError
from mflsi.gaussian_oracle import GaussianMeasure, gibbs_gaussian, kl_gaussian, ou_flow
from mflsi.models import ConstantsInput, Scheme, TailEstimate
from mflsi.observables import ComposedFunction, PolynomialFunction, RadialFunction


STANDARD = GaussianMeasure(np.zeros(1), np.eye(1))
ORIGIN = GaussianMeasure.point(np.zeros(1))


def query(t=2.0, r=1.0, m_hess=1.0, rho=1.0, initial=ORIGIN, observable=None):
    """Single-particle query for the 1d Ornstein–Uhlenbeck process by default."""
    return ConcentrationQuery(t=t, r=r, m_hess=m_hess, rho=rho, initial=initial, observable=observable)


class TestConcentrationQuery:
    """Test query validation."""

    @parameterized.expand(
        [
            ("short_time", {"t": 0.5}),
            ("negative_r", {"r": -1.0}),
            ("zero_rho", {"rho": 0.0}),
            ("negative_hessian", {"m_hess": -1.0}),
        ]
    )
    def test_rejects(self, _, overrides):
        """Test out-of-domain parameters."""
        with pytest.raises(DomainError):
            query(**overrides)

    def test_rejects_non_lipschitz_observable(self):
        """Test an observable with unbounded gradient."""
        with pytest.raises(DomainError, match="Lipschitz"):
            query(observable=ComposedFunction(PolynomialFunction.coordinate(0), "exp"))

    def test_accepts_lipschitz_observable(self):
        """Test 1-Lipschitz observables are accepted."""
        assert query(observable=RadialFunction()).observable.lipschitz == 1.0
        assert query(observable=PolynomialFunction.coordinate(0)).observable.name == "x0"


class TestSingleParticleBound:
    """Test bound_single and its logarithm."""

    def test_ornstein_uhlenbeck_example(self):
        """Test M = ρ = 1, m₀ = δ₀, t = 2, r = 1 gives exp((4/6)e⁻¹ − 1/4)."""
        expected = math.exp(4.0 / 6.0 * math.exp(-1.0) - 0.25)
        assert concentration.bound_single(query(), STANDARD) == pytest.approx(expected, rel=1e-12)
        assert concentration.bound_single(query(), STANDARD) == pytest.approx(0.9953, abs=1e-3)

    def test_zero_deviation_is_vacuous(self):
        """Test r = 0 returns the prefactor, which is at least 1."""
        assert concentration.bound_single(query(r=0.0), STANDARD) >= 1.0

    def test_monotone(self):
        """Test the bound decreases in r and t and increases in M."""
        rs = [concentration.log_bound_single(query(r=r), STANDARD) for r in (0.0, 0.5, 1.0, 2.0, 4.0)]
        ts = [concentration.log_bound_single(query(t=t), STANDARD) for t in (1.0, 2.0, 5.0, 10.0)]
        ms = [concentration.log_bound_single(query(m_hess=m), STANDARD) for m in (0.0, 1.0, 2.0, 5.0)]
        assert np.all(np.diff(rs) < 0)
        assert np.all(np.diff(ts) < 0)
        assert np.all(np.diff(ms) > 0)

    def test_gaussian_initial_closed_form(self):
        """Test the prefactor for m₀ = N(1, 1/4) against c·tr + log E exp(c|X|²)."""
        initial = GaussianMeasure(np.ones(1), 0.25 * np.eye(1))
        c = concentration.prefactor_exponent(1.0, 1.0, 3.0)
        shrink = 1.0 - 2.0 * c * 0.25
        expected = c + (-0.5 * math.log(shrink) + c / shrink) - 0.25
        assert concentration.log_bound_single(query(t=3.0, initial=initial), STANDARD) == pytest.approx(expected, rel=1e-12)

    def test_divergent_prefactor(self):
        """Test a wide initial law at t = 1 has no finite prefactor."""
        with pytest.raises(DivergentPrefactorError):
            concentration.bound_single(query(t=1.0, initial=STANDARD), STANDARD)
        assert math.isfinite(concentration.bound_single(query(t=5.0, initial=STANDARD), STANDARD))

    def test_overflow_is_infinite(self):
        """Test a far point mass overflows to inf."""
        far = GaussianMeasure.point(np.array([1e3]))
        assert concentration.bound_single(query(t=1.0, r=0.0, initial=far), STANDARD) == math.inf


class TestSampledPrefactor:
    """Test log_prefactor on samples of m₀."""

    def test_matches_closed_form(self):
        """Test Monte Carlo against the Gaussian closed form."""
        initial = GaussianMeasure(np.zeros(1), 0.25 * np.eye(1))
        c = concentration.prefactor_exponent(1.0, 1.0, 2.0)
        samples = initial.sample(np.random.default_rng(21), 200_000)
        exact = concentration.log_prefactor(initial, STANDARD, c)
        assert concentration.log_prefactor(samples, STANDARD, c) == pytest.approx(exact, abs=1e-2)

    def test_heavy_tail_flagged(self):
        """Test Cauchy samples are treated as divergent."""
        samples = np.random.default_rng(22).standard_cauchy(size=(10_000, 1))
        with pytest.raises(DivergentPrefactorError, match="top 1%"):
            concentration.log_prefactor(samples, STANDARD, 1.0)

    def test_dimension_mismatch(self):
        """Test samples in the wrong dimension."""
        with pytest.raises(DomainError, match="do not match"):
            concentration.log_prefactor(np.zeros((10, 2)), STANDARD, 0.1)


class TestParticleBound:
    """Test bound_particle."""

    def test_closed_form(self, gaussian_model, reference_inputs):
        """Test M_mm + M_mx, ρ^N and the Nρ^N r²/4 exponent."""
        n = 100
        report = constants.report(reference_inputs)
        m_star = gibbs_gaussian(1.0, 1.0, n, 1)
        q = query(t=3.0, r=0.2, initial=GaussianMeasure.point(np.zeros(n)))
        rho_n = report.rho_lsi()
        c = (2.0**2 + 3.0) / 6.0 * math.exp(-rho_n * 2.0)
        expected = math.exp(c * np.trace(m_star.cov) - n * rho_n * 0.04 / 4.0)
        assert concentration.bound_particle(q, report, gaussian_model.bounds, n, m_star) == pytest.approx(expected, rel=1e-10)

    def test_more_particles_tighter(self, gaussian_model, reference_inputs):
        """Test the exponent grows linearly in N at fixed ρ^N."""
        report = constants.report(reference_inputs)
        bounds = []
        for n in (50, 100, 200):
            q = query(t=40.0, r=0.5, initial=GaussianMeasure.point(np.zeros(n)))
            bounds.append(concentration.bound_particle(q, report, gaussian_model.bounds, n, gibbs_gaussian(1.0, 1.0, n, 1)))
        assert bounds[0] > bounds[1] > bounds[2]

    def test_invalid_regime(self, gaussian_model):
        """Test an invalid constants report."""
        report = constants.report(ConstantsInput(dim=1, n_particles=2, epsilon=0.5, m_mm=5.0, rho=1.0))
        q = query(initial=GaussianMeasure.point(np.zeros(2)))
        with pytest.raises(RegimeError):
            concentration.bound_particle(q, report, gaussian_model.bounds, 2, gibbs_gaussian(1.0, 1.0, 2, 1))


class TestEntropyBounds:
    """Test entropy decay and contraction bounds."""

    def test_decay_example(self):
        """Test μ₀ = N(2, 1), m_* = N(0, 1), M = 1 at t = 1 gives (4/3)·4."""
        mu0 = GaussianMeasure(np.array([2.0]), np.eye(1))
        assert concentration.entropy_decay_bound(mu0, STANDARD, 1.0, 1.0, 1.0) == pytest.approx(16.0 / 3.0, rel=1e-12)

    def test_decay_dominates_exact_entropy(self):
        """Test the bound dominates H(μ_t|m_*) along the exact flow."""
        mu0 = GaussianMeasure(np.array([2.0]), np.eye(1))
        for t in np.linspace(1.0, 10.0, 10):
            exact = kl_gaussian(ou_flow(mu0, np.eye(1), t), STANDARD)
            assert exact <= concentration.entropy_decay_bound(mu0, STANDARD, t, 1.0, 1.0)

    def test_decay_from_point(self):
        """Test a point mass uses |x − mean|² + tr cov."""
        mu0 = GaussianMeasure.point(np.array([1.0]))
        assert concentration.entropy_decay_bound(mu0, STANDARD, 1.0, 0.0, 1.0, control_energy=0.5) == pytest.approx(2.5)

    def test_decay_rejects_short_time(self):
        """Test t < 1."""
        with pytest.raises(DomainError, match="t >= 1"):
            concentration.entropy_decay_bound(ORIGIN, STANDARD, 0.5, 1.0, 1.0)

    def test_short_time(self):
        """Test ((M² + 3)/3)·W₂² + control energy."""
        assert concentration.short_time_entropy_bound(2.0, 3.0, 1.0) == pytest.approx(9.0)
        with pytest.raises(DomainError):
            concentration.short_time_entropy_bound(-1.0, 1.0)

    def test_contraction(self):
        """Test perfect and defective contraction."""
        assert concentration.entropy_contraction_bound(2.0, 0.5, 1.0) == pytest.approx(2.0 * math.exp(-1.0))
        assert concentration.defective_contraction_bound(2.0, 0.5, 0.0, 1.0) == pytest.approx(2.0 * math.exp(-1.0))
        # floor δ/2ρ′ as t → ∞
        assert concentration.defective_contraction_bound(2.0, 0.5, 0.3, 1e3) == pytest.approx(0.3)

    def test_chained_endpoints(self):
        """Test the chained bound is no worse than either pure contraction."""
        h0, rho_prime, delta, rho_n, t = 5.0, 0.445, 6.5, 0.169, 4.0
        bound, switch = concentration.chained_entropy_bound(h0, rho_prime, delta, rho_n, t)
        assert 0.0 <= switch <= t
        assert bound <= concentration.entropy_contraction_bound(h0, rho_n, t) + 1e-12
        assert bound <= concentration.defective_contraction_bound(h0, rho_prime, delta, t) + 1e-12

    def test_chained_without_defect(self):
        """Test δ = 0 with ρ′ > ρ^N contracts at ρ′ all the way."""
        bound, switch = concentration.chained_entropy_bound(1.0, 0.5, 0.0, 0.2, 2.0)
        assert bound == pytest.approx(math.exp(-2.0), rel=1e-6)
        assert switch == pytest.approx(2.0, abs=1e-4)


class TestChernoff:
    """Test the exponential moment optimization."""

    def test_optimum(self):
        """Test λ = rρ/2 attains log prefactor − ρr²/4."""
        r, rho, log_prefactor = 1.5, 0.7, 0.3
        lam = concentration.optimal_lambda(r, rho)
        best = concentration.chernoff_log_bound(lam, r, rho, log_prefactor)
        assert best == pytest.approx(log_prefactor - rho * r**2 / 4.0)
        for other in (lam - 0.1, lam + 0.1, 0.0):
            assert concentration.chernoff_log_bound(other, r, rho, log_prefactor) > best


class TestEmpiricalTail:
    """Test empirical tails of the simulated flow."""

    def test_ornstein_uhlenbeck_tail(self, product_model):
        """Test the 1d OU tail from δ₀ matches the Gaussian tail and is dominated."""
        t, r_grid, n = 2.0, [0.5, 1.0, 1.5], 2000
        estimates = concentration.empirical_tail(
            product_model,
            InitialLaw.point([[0.0]]),
            PolynomialFunction.coordinate(0),
            t,
            r_grid,
            n,
            seed=5,
            n_particles=1,
            dim=1,
            scheme=Scheme.EXACT_GAUSSIAN,
        )
        sd = math.sqrt(1.0 - math.exp(-2.0 * t))
        for estimate, r in zip(estimates, r_grid):
            exact = stats.norm.sf(r / sd)
            assert abs(estimate.fraction - exact) < 4.0 * math.sqrt(exact * (1.0 - exact) / n)
            bound = concentration.bound_single(query(t=t, r=r), STANDARD)
            assert concentration.compare_tail(estimate, bound).dominated

    def test_sentinel_counts_every_replica(self, product_model):
        """Test r = −inf counts all replicas."""
        estimates = concentration.empirical_tail(
            product_model, InitialLaw.point([[0.0]]), RadialFunction(), 1.0, [-math.inf], 1000, seed=6, n_particles=1, dim=1, dt=0.1
        )
        assert estimates[0].exceed == 1000
        assert estimates[0].fraction == 1.0

    def test_rejects_few_replicas(self, product_model):
        """Test fewer than 1000 replicas."""
        with pytest.raises(DomainError, match="1000"):
            concentration.empirical_tail(
                product_model, InitialLaw.point([[0.0]]), RadialFunction(), 1.0, [0.1], 999, seed=0, n_particles=1, dim=1
            )

    def test_rejects_time_grid(self, product_model):
        """Test t that is not a multiple of dt."""
        with pytest.raises(DomainError, match="multiple of dt"):
            concentration.empirical_tail(
                product_model, InitialLaw.point([[0.0]]), RadialFunction(), 1.005, [0.1], 1000, seed=0, n_particles=1, dim=1
            )

    def test_rejects_steep_observable(self, product_model):
        """Test an observable with gradient norm 2."""
        with pytest.raises(DomainError, match="gradient norm"):
            concentration.empirical_tail(
                product_model,
                InitialLaw.point([[0.0]]),
                PolynomialFunction.linear([2.0]),
                1.0,
                [0.1],
                1000,
                seed=0,
                n_particles=1,
                dim=1,
                dt=0.1,
            )


class TestWilsonInterval:
    """Test the Wilson interval and tail comparison."""

    def test_zero_count(self):
        """Test the upper end z²/(n + z²) when nothing exceeds."""
        z = stats.norm.ppf(0.995)
        low, high = concentration.wilson_interval(0, 1000)
        assert low == pytest.approx(0.0, abs=1e-15)
        assert high == pytest.approx(z**2 / (1000 + z**2), rel=1e-9)

    def test_comparison_flags(self):
        """Test dominated and vacuous flags."""
        estimate = TailEstimate(t=1.0, r=0.5, exceed=100, n_replicas=1000, ci99=concentration.wilson_interval(100, 1000))
        assert concentration.compare_tail(estimate, 1.2).vacuous
        assert concentration.compare_tail(estimate, 0.2).dominated
        assert not concentration.compare_tail(estimate, 0.05).dominated


class TestReferenceMean:
    """Test reference_mean."""

    def test_affine_exact(self, gaussian_model):
        """Test affine observables are evaluated at the centred mean."""
        f = PolynomialFunction({(0,): 1.0, (): 0.5})
        assert concentration.reference_mean(gaussian_model, f, 4, 1, seed=0) == 0.5

    def test_second_moment(self, gaussian_model):
        """Test E (X¹)² = (1 − 1/N)/a + 1/(N(a + λ)) from Gibbs samples."""
        value = concentration.reference_mean(gaussian_model, PolynomialFunction.monomial(0, 0), 4, 1, seed=3)
        assert value == pytest.approx(0.75 + 0.125, abs=0.02)

    def test_gaussian_model_class(self):
        """Test a Gaussian model without interaction has unit variance."""
        value = concentration.reference_mean(GaussianMeanField(1.0), PolynomialFunction.monomial(0, 0), 2, 1, seed=4)
        assert value == pytest.approx(1.0, abs=0.02)
