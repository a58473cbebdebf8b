"""Test configuration and shared fixtures."""

import numpy as np
import pytest

from mflsi.energy import EnergyModel, GaussianMeanField, RbfInteraction
from mflsi.models import ConstantsInput, EnergyBounds, ParticleConfiguration, SimConfig


class DriftFreeModel(EnergyModel):
    """F ≡ 0: the particle SDE reduces to Brownian motion."""

    name = "drift_free"

    @property
    def bounds(self):
        """Zero interaction, unit hat-measure constant."""
        return EnergyBounds(m_mm=0.0, m_mx=0.0, rho_hat=1.0)

    @property
    def params(self):
        """No parameters."""
        return {}

    def energy(self, atoms):
        """Zero energy."""
        return np.zeros(atoms.shape[:-2])

    def flat_derivative(self, atoms, y):
        """Zero flat derivative."""
        return np.zeros(y.shape[:-1])

    def intrinsic_derivative(self, atoms, y):
        """Zero intrinsic derivative."""
        return np.zeros_like(y)

    def grad_intrinsic(self, atoms, y):
        """Zero Hessian."""
        return np.zeros((*y.shape, y.shape[-1]))

    def second_intrinsic(self, atoms, y, y2):
        """Zero interaction."""
        d = y.shape[-1]
        return np.zeros((*y.shape[:-1], y2.shape[-2], d, d))


@pytest.fixture
def gaussian_model():
    """GaussianMeanField with a = 1, λ = 1."""
    return GaussianMeanField(a=1.0, lam=1.0)


@pytest.fixture
def product_model():
    """GaussianMeanField without interaction (a = 1, λ = 0)."""
    return GaussianMeanField(a=1.0, lam=0.0)


@pytest.fixture
def rbf_model():
    """Gaussian kernel interaction with moderate strength."""
    return RbfInteraction(a=1.0, kappa=0.5, sigma=1.0, rho_hat=0.5)


@pytest.fixture
def drift_free_model():
    """Energy with vanishing derivatives."""
    return DriftFreeModel()


@pytest.fixture
def reference_inputs():
    """d = 1, N = 100, ε = 1/2, M_mm = 1/2, ρ = 1 (α = 1/2)."""
    return ConstantsInput(dim=1, n_particles=100, epsilon=0.5, m_mm=0.5, rho=1.0)


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(20240611)


@pytest.fixture
def small_config(rng):
    """Random configuration with N = 4 particles in d = 2."""
    return ParticleConfiguration(rng.normal(size=(4, 2)))


@pytest.fixture
def short_sim():
    """Short simulation settings."""
    return SimConfig(dt=0.01, n_steps=10, seed=7, n_replicas=8)
