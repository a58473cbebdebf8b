"""Unit tests for models module."""

import math

import numpy as np
import pytest
from parameterized import parameterized

from mflsi.errors import DomainError, ExitStatus
from mflsi.models import (
    ConstantsInput,
    EnergyBounds,
    EnsembleState,
    GibbsMethod,
    InequalityVerdict,
    LsiFormula,
    ParticleConfiguration,
    Scheme,
    SimConfig,
    TailComparison,
    TailEstimate,
    ValidationResult,
    verdict_status,
    worst_status,
)


def verdict(holds=True, inconclusive=False):
    """Minimal verdict with the given flags."""
    return InequalityVerdict("check", 1.0, 2.0, 0.1, 0.1, 0.1, 10.0, holds, inconclusive, 100)


class TestParticleConfiguration:
    """Test ParticleConfiguration model."""

    def test_one_dimensional_input_becomes_column(self):
        """Test a vector of N scalars is read as N particles in d = 1."""
        config = ParticleConfiguration(np.array([1.0, 2.0, 3.0]))
        assert config.points.shape == (3, 1)
        assert config.n_particles == 3
        assert config.dim == 1

    def test_points_are_frozen_copies(self):
        """Test the stored array is read-only and detached from the input."""
        source = np.zeros((2, 2))
        config = ParticleConfiguration(source)
        source[0, 0] = 5.0
        assert config.points[0, 0] == 0.0
        with pytest.raises(ValueError):
            config.points[0, 0] = 1.0

    def test_flat_round_trip(self):
        """Test from_flat and flat are particle-major inverses."""
        config = ParticleConfiguration.from_flat(np.arange(6.0), dim=2)
        np.testing.assert_array_equal(config.points, [[0, 1], [2, 3], [4, 5]])
        np.testing.assert_array_equal(config.flat, np.arange(6.0))

    def test_weights(self):
        """Test the empirical measure puts mass 1/N on every particle."""
        config = ParticleConfiguration(np.zeros((4, 2)))
        np.testing.assert_allclose(config.weights, 0.25)

    def test_permuted(self):
        """Test particles are reordered."""
        config = ParticleConfiguration(np.array([[1.0], [2.0], [3.0]]))
        np.testing.assert_array_equal(config.permuted([2, 0, 1]).points[:, 0], [3.0, 1.0, 2.0])

    @parameterized.expand(
        [
            ("nan", np.array([[np.nan, 0.0]])),
            ("inf", np.array([[np.inf]])),
            ("empty", np.zeros((0, 2))),
            ("three_dims", np.zeros((2, 2, 2))),
        ]
    )
    def test_rejects(self, _, points):
        """Test malformed configurations."""
        with pytest.raises(DomainError):
            ParticleConfiguration(points)

    def test_from_flat_rejects_bad_length(self):
        """Test a flat vector that does not split into particles."""
        with pytest.raises(DomainError):
            ParticleConfiguration.from_flat(np.zeros(5), dim=2)


class TestEnergyBounds:
    """Test EnergyBounds model."""

    def test_alpha(self):
        """Test α = m_mm / ρ."""
        assert EnergyBounds(m_mm=0.5, m_mx=1.0, rho_hat=2.0).alpha == 0.25

    @parameterized.expand(
        [
            ("negative_m_mm", -1.0, 1.0, 1.0),
            ("negative_m_mx", 1.0, -1.0, 1.0),
            ("zero_rho", 1.0, 1.0, 0.0),
        ]
    )
    def test_rejects(self, _, m_mm, m_mx, rho_hat):
        """Test invalid signs."""
        with pytest.raises(DomainError):
            EnergyBounds(m_mm, m_mx, rho_hat)


class TestConstantsInput:
    """Test ConstantsInput model."""

    def test_reference_input(self, reference_inputs):
        """Test the derived quantities of the reference input."""
        assert reference_inputs.alpha == 0.5
        assert reference_inputs.above_threshold

    def test_threshold(self):
        """Test N ≤ α is below the threshold."""
        assert not ConstantsInput(dim=1, n_particles=2, epsilon=0.5, m_mm=4.0, rho=1.0).above_threshold

    def test_infinite_particles(self):
        """Test the mean field limit is accepted."""
        assert ConstantsInput(dim=1, n_particles=math.inf, epsilon=0.5, m_mm=1.0, rho=1.0).above_threshold

    def test_with_epsilon_and_scaled(self, reference_inputs):
        """Test copies change only the requested fields."""
        other = reference_inputs.with_epsilon(0.25)
        assert other.epsilon == 0.25
        assert other.rho == reference_inputs.rho
        scaled = reference_inputs.scaled(3.0)
        assert (scaled.m_mm, scaled.rho) == (1.5, 3.0)
        assert scaled.alpha == reference_inputs.alpha

    @parameterized.expand(
        [
            ("zero_dim", {"dim": 0}),
            ("no_particles", {"n_particles": 0.5}),
            ("nan_particles", {"n_particles": math.nan}),
            ("epsilon_zero", {"epsilon": 0.0}),
            ("epsilon_one", {"epsilon": 1.0}),
            ("negative_m_mm", {"m_mm": -0.1}),
            ("zero_rho", {"rho": 0.0}),
        ]
    )
    def test_rejects(self, _, overrides):
        """Test the parameter domain."""
        kwargs = {"dim": 1, "n_particles": 10, "epsilon": 0.5, "m_mm": 0.5, "rho": 1.0} | overrides
        with pytest.raises(DomainError):
            ConstantsInput(**kwargs)


class TestSimConfig:
    """Test SimConfig model."""

    def test_final_time(self, short_sim):
        """Test t = n_steps · dt."""
        assert short_sim.final_time == pytest.approx(0.1)
        assert short_sim.scheme is Scheme.EULER_MARUYAMA

    @parameterized.expand(
        [
            ("zero_dt", {"dt": 0.0}),
            ("negative_steps", {"n_steps": -1}),
            ("no_replicas", {"n_replicas": 0}),
            ("no_threads", {"threads": 0}),
            ("negative_seed", {"seed": -1}),
            ("huge_seed", {"seed": 2**64}),
        ]
    )
    def test_rejects(self, _, overrides):
        """Test invalid settings."""
        with pytest.raises(DomainError):
            SimConfig(**({"dt": 0.01, "n_steps": 10} | overrides))


class TestEnsembleState:
    """Test EnsembleState model."""

    def test_shape_properties(self):
        """Test R, N and d are read from the replica array."""
        state = EnsembleState(np.zeros((3, 4, 2)), time=1.0)
        assert (state.n_replicas, state.n_particles, state.dim) == (3, 4, 2)
        assert state.configuration(1).points.shape == (4, 2)
        assert state.diverged == {}


class TestTailRecords:
    """Test TailEstimate and TailComparison."""

    def test_fraction(self):
        """Test the empirical fraction."""
        assert TailEstimate(t=1.0, r=0.5, exceed=25, n_replicas=100, ci99=(0.15, 0.37)).fraction == 0.25

    @parameterized.expand(
        [
            ("dominated", 0.5, True, False),
            ("below_ci", 0.3, False, False),
            ("vacuous", 1.2, True, True),
        ]
    )
    def test_flags(self, _, bound, dominated, vacuous):
        """Test domination against the upper CI end and vacuity at 1."""
        comparison = TailComparison(t=1.0, r=0.5, empirical=0.25, empirical_ci99=(0.15, 0.37), bound=bound)
        assert comparison.dominated is dominated
        assert comparison.vacuous is vacuous
        assert comparison.as_row()["ci_high"] == 0.37


class TestStatuses:
    """Test status aggregation."""

    def test_validation_result_success(self):
        """Test success means an OK status."""
        assert ValidationResult("x", ExitStatus.OK, "").success
        assert not ValidationResult("x", ExitStatus.INCONCLUSIVE, "").success

    @parameterized.expand(
        [
            ("empty", [], ExitStatus.OK),
            ("all_ok", [ExitStatus.OK, ExitStatus.OK], ExitStatus.OK),
            ("inconclusive", [ExitStatus.OK, ExitStatus.INCONCLUSIVE], ExitStatus.INCONCLUSIVE),
            ("failure_wins", [ExitStatus.INCONCLUSIVE, ExitStatus.FAILED, ExitStatus.OK], ExitStatus.FAILED),
            ("regime_error", [ExitStatus.FAILED, ExitStatus.REGIME_ERROR], ExitStatus.REGIME_ERROR),
        ]
    )
    def test_worst_status(self, _, statuses, expected):
        """Test the ranking OK < INCONCLUSIVE < FAILED < error statuses."""
        assert worst_status(statuses) is expected

    def test_verdict_status(self):
        """Test inconclusive verdicts are not counted as failures."""
        assert verdict_status([verdict()]) is ExitStatus.OK
        assert verdict_status([verdict(), verdict(holds=False, inconclusive=True)]) is ExitStatus.INCONCLUSIVE
        assert verdict_status([verdict(holds=False), verdict(inconclusive=True)]) is ExitStatus.FAILED


class TestEnums:
    """Test enum values used in configuration files."""

    def test_values(self):
        """Test the configuration spellings."""
        assert Scheme("exact_gaussian") is Scheme.EXACT_GAUSSIAN
        assert GibbsMethod("mala") is GibbsMethod.MALA
        assert LsiFormula("theorem") is LsiFormula.THEOREM
