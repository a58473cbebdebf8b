"""Mean field energy functionals and the N-particle potential built from them.

An energy model is evaluated on empirical measures only. Every method takes the
atoms of the measure as an array of shape (..., N, d) (leading axes are batch
axes, one empirical measure per batch entry) and the evaluation points as an
array of shape (..., K, d).

The N-particle Langevin potential is U^N(x) = N·F(μ_x), so that
∇ᵢU^N(x) = D_mF(μ_x, xⁱ) and
∇²ᵢⱼU^N(x) = ∇D_mF(μ_x, xⁱ)·1_{i=j} + (1/N)·D_m²F(μ_x, xⁱ, xʲ).
"""

# Standard lib imports
import logging
import math
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass
from typing import Any

# Third party imports
import numpy as np
from scipy import linalg

# Local imports
from mflsi import abk_common
from mflsi.errors import DomainError, EvaluationError, HessianAsymmetryError
from mflsi.models import EnergyBounds, ParticleConfiguration


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
HESSIAN_SYMMETRY_TOLERANCE = 1e-10
# sup over s >= 0 of |(s - 1)·exp(-s/2)| is 1 (at s = 0); the positive branch peaks at s = 3
RBF_CURVATURE_POSITIVE_PEAK = 2.0 * math.exp(-1.5)

logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Energy model base
# -----------------------------------------------------------------------------
class EnergyModel(metaclass=ABCMeta):
    """Flat-convex mean field energy with analytic derivatives.

    Subclasses implement the energy F and its derivatives on empirical measures.
    Finite differences are never used at runtime.
    """

    name: str = ""

    @property
    @abstractmethod
    def bounds(self) -> EnergyBounds:
        """Regularity bounds (M^F_mm, M^F_mx, ρ)."""
        raise NotImplementedError

    @property
    @abstractmethod
    def params(self) -> dict[str, float]:
        """Constructor parameters, used to echo the model in reports."""
        raise NotImplementedError

    @abstractmethod
    def energy(self, atoms: np.ndarray) -> np.ndarray:
        """F(μ) for empirical measures with the given atoms, shape (...)."""
        raise NotImplementedError

    @abstractmethod
    def flat_derivative(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """δF/δm(μ, y), shape (..., K)."""
        raise NotImplementedError

    @abstractmethod
    def intrinsic_derivative(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """D_mF(μ, y), shape (..., K, d)."""
        raise NotImplementedError

    @abstractmethod
    def grad_intrinsic(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """∇_y D_mF(μ, y), shape (..., K, d, d)."""
        raise NotImplementedError

    @abstractmethod
    def second_intrinsic(self, atoms: np.ndarray, y: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """D_m²F(μ, y, y′) for all pairs, shape (..., K, L, d, d)."""
        raise NotImplementedError

    def hessian_form(self, atoms: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Σᵢⱼ vⁱ·∇²ᵢⱼU^N(x)·vʲ for batches of configurations x = atoms and directions v.

        Args:
            atoms: configurations, shape (B, N, d)
            v: directions, shape (B, N, d)

        Returns:
            Array of shape (B,)
        """
        n = atoms.shape[-2]
        diag = self.grad_intrinsic(atoms, atoms)
        cross = self.second_intrinsic(atoms, atoms, atoms)
        local = np.einsum("bia,biac,bic->b", v, diag, v)
        interaction = np.einsum("bia,bijac,bjc->b", v, cross, v) / n
        return local + interaction

    def describe(self) -> str:
        """Short human readable description."""
        args = ", ".join(f"{key}={value:g}" for key, value in self.params.items())
        return f"{self.name}({args})"


# -----------------------------------------------------------------------------
# Gaussian mean field model
# -----------------------------------------------------------------------------
class GaussianMeanField(EnergyModel):
    """F(m) = (a/2)∫|x|² dm + (λ/2)|∫x dm|².

    The Gibbs measure is Gaussian with precision a·I + (λ/N)(ones ⊗ I_d),
    which makes every quantity of the laboratory available in closed form.

    Args:
        a: confinement strength, a > 0
        lam: mean interaction strength, λ ≥ 0
    """

    name = "gaussian_mean_field"

    def __init__(self, a: float, lam: float = 0.0) -> None:
        """Initialize the Gaussian model."""
        if not a > 0:
            raise DomainError(f"GaussianMeanField requires a > 0, got {a}")
        if not lam >= 0:
            raise DomainError(f"GaussianMeanField requires lam >= 0, got {lam}")
        self.a = float(a)
        self.lam = float(lam)

    @property
    def bounds(self) -> EnergyBounds:
        """(M_mm, M_mx, ρ) = (λ, a, a)."""
        return EnergyBounds(m_mm=self.lam, m_mx=self.a, rho_hat=self.a)

    @property
    def params(self) -> dict[str, float]:
        """Model parameters."""
        return {"a": self.a, "lam": self.lam}

    def energy(self, atoms: np.ndarray) -> np.ndarray:
        """F(μ)."""
        mean = atoms.mean(axis=-2)
        return 0.5 * self.a * np.mean(np.sum(atoms**2, axis=-1), axis=-1) + 0.5 * self.lam * np.sum(mean**2, axis=-1)

    def flat_derivative(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """δF/δm(μ, y) = (a/2)|y|² + λ·mean(μ)·y."""
        mean = atoms.mean(axis=-2)
        return 0.5 * self.a * np.sum(y**2, axis=-1) + self.lam * np.einsum("...kd,...d->...k", y, mean)

    def intrinsic_derivative(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """D_mF(μ, y) = a·y + λ·mean(μ)."""
        return self.a * y + self.lam * atoms.mean(axis=-2)[..., None, :]

    def grad_intrinsic(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """∇D_mF = a·I."""
        d = y.shape[-1]
        return np.broadcast_to(self.a * np.eye(d), (*y.shape, d)).copy()

    def second_intrinsic(self, atoms: np.ndarray, y: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """D_m²F = λ·I."""
        d = y.shape[-1]
        shape = (*np.broadcast_shapes(y.shape[:-2], y2.shape[:-2]), y.shape[-2], y2.shape[-2], d, d)
        return np.broadcast_to(self.lam * np.eye(d), shape).copy()

    def hessian_form(self, atoms: np.ndarray, v: np.ndarray) -> np.ndarray:
        """a·|v|² + (λ/N)·|Σᵢvⁱ|²."""
        n = atoms.shape[-2]
        return self.a * np.sum(v**2, axis=(-2, -1)) + self.lam / n * np.sum(v.sum(axis=-2) ** 2, axis=-1)


# -----------------------------------------------------------------------------
# Gaussian kernel interaction model
# -----------------------------------------------------------------------------
class RbfInteraction(EnergyModel):
    """F(m) = (a/2)∫|x|² dm + (κ/2)∬exp(−|x−x′|²/2σ²) dm dm.

    The Gaussian kernel is of positive type, so the interaction is flat convex.
    With k(z) = exp(−|z|²/2σ²), ∇²k(z) = k(z)(zzᵀ/σ⁴ − I/σ²) has eigenvalues
    (s − 1)e^{−s/2}/σ² along z (s = |z|²/σ²) and −e^{−s/2}/σ² across z, so
    ‖∇²k‖ ≤ 1/σ² with the positive part never above 2e^{−3/2}/σ². Hence

        M_mm = κ/σ²
        M_mx = max(|a − κ/σ²|, a + 2e^{−3/2}κ/σ²)

    The hat-measure LSI constant has no closed form here and is supplied.

    Args:
        a: confinement strength, a > 0
        kappa: interaction strength, κ ≥ 0
        sigma: kernel width, σ > 0
        rho_hat: uniform LSI constant of the hat measures
    """

    name = "rbf_interaction"

    def __init__(self, a: float, kappa: float, sigma: float, rho_hat: float) -> None:
        """Initialize the kernel interaction model."""
        if not a > 0 or not kappa >= 0 or not sigma > 0:
            raise DomainError(f"RbfInteraction requires a > 0, kappa >= 0, sigma > 0, got {a}, {kappa}, {sigma}")
        self.a = float(a)
        self.kappa = float(kappa)
        self.sigma = float(sigma)
        self.rho_hat = float(rho_hat)
        self._bounds = EnergyBounds(
            m_mm=self.kappa / self.sigma**2,
            m_mx=max(abs(self.a - self.kappa / self.sigma**2), self.a + RBF_CURVATURE_POSITIVE_PEAK * self.kappa / self.sigma**2),
            rho_hat=self.rho_hat,
        )

    @property
    def bounds(self) -> EnergyBounds:
        """Closed-form kernel-derivative suprema and the supplied ρ."""
        return self._bounds

    @property
    def params(self) -> dict[str, float]:
        """Model parameters."""
        return {"a": self.a, "kappa": self.kappa, "sigma": self.sigma, "rho_hat": self.rho_hat}

    def kernel(self, z: np.ndarray) -> np.ndarray:
        """k(z) = exp(−|z|²/2σ²) over the last axis."""
        return np.exp(-0.5 * np.sum(z**2, axis=-1) / self.sigma**2)

    def _pairs(self, y: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = y[..., :, None, :] - x[..., None, :, :]
        return z, self.kernel(z)

    def energy(self, atoms: np.ndarray) -> np.ndarray:
        """F(μ)."""
        _, k = self._pairs(atoms, atoms)
        return 0.5 * self.a * np.mean(np.sum(atoms**2, axis=-1), axis=-1) + 0.5 * self.kappa * np.mean(k, axis=(-2, -1))

    def flat_derivative(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """δF/δm(μ, y) = (a/2)|y|² + κ∫k(y − x′)μ(dx′)."""
        _, k = self._pairs(y, atoms)
        return 0.5 * self.a * np.sum(y**2, axis=-1) + self.kappa * k.mean(axis=-1)

    def intrinsic_derivative(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """D_mF(μ, y) = a·y − (κ/σ²)∫(y − x′)k(y − x′)μ(dx′)."""
        z, k = self._pairs(y, atoms)
        return self.a * y - self.kappa / self.sigma**2 * np.mean(z * k[..., None], axis=-2)

    def grad_intrinsic(self, atoms: np.ndarray, y: np.ndarray) -> np.ndarray:
        """∇D_mF(μ, y) = a·I + κ∫∇²k(y − x′)μ(dx′)."""
        z, k = self._pairs(y, atoms)
        d = y.shape[-1]
        outer = np.einsum("...a,...b->...ab", z, z) / self.sigma**4
        curvature = k[..., None, None] * (outer - np.eye(d) / self.sigma**2)
        return self.a * np.eye(d) + self.kappa * curvature.mean(axis=-3)

    def second_intrinsic(self, atoms: np.ndarray, y: np.ndarray, y2: np.ndarray) -> np.ndarray:
        """D_m²F(μ, y, y′) = κ·k(z)(I/σ² − zzᵀ/σ⁴), z = y − y′ (independent of μ)."""
        z, k = self._pairs(y, y2)
        d = y.shape[-1]
        outer = np.einsum("...a,...b->...ab", z, z) / self.sigma**4
        return self.kappa * k[..., None, None] * (np.eye(d) / self.sigma**2 - outer)

    def hessian_form(self, atoms: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Pairwise evaluation of Σᵢⱼ vⁱ·∇²ᵢⱼU^N·vʲ without d×d blocks."""
        n = atoms.shape[-2]
        z, k = self._pairs(atoms, atoms)
        s2 = self.sigma**2
        zv_i = np.einsum("...ija,...ia->...ij", z, v)
        zv_j = np.einsum("...ija,...ja->...ij", z, v)
        v_sq = np.sum(v**2, axis=-1)
        local = self.a * v_sq.sum(axis=-1)
        local = local + self.kappa / n * np.sum(k * (zv_i**2 / s2**2 - v_sq[..., :, None] / s2), axis=(-2, -1))
        vv = np.einsum("...ia,...ja->...ij", v, v)
        interaction = self.kappa / n * np.sum(k * (vv / s2 - zv_i * zv_j / s2**2), axis=(-2, -1))
        return local + interaction


# -----------------------------------------------------------------------------
# Energy model factory
# -----------------------------------------------------------------------------
class EnergyModelFactory:
    """Creates energy models by name."""

    _models: dict[str, type[EnergyModel]] = {GaussianMeanField.name: GaussianMeanField, RbfInteraction.name: RbfInteraction}

    @classmethod
    def available(cls) -> list[str]:
        """Names of the built-in models."""
        return sorted(cls._models)

    @classmethod
    def create_model(cls, name: str, params: dict[str, Any]) -> EnergyModel:
        """Create a model from its name and constructor parameters.

        Args:
            name: model name, one of ``available()``
            params: keyword arguments of the model constructor

        Returns:
            The constructed model
        """
        try:
            model_class = cls._models[name]
        except KeyError:
            raise DomainError(f"unknown energy model {name!r}, available: {', '.join(cls.available())}") from None
        try:
            return model_class(**params)
        except TypeError as e:
            raise DomainError(f"bad parameters for {name}: {e}") from e


# -----------------------------------------------------------------------------
# N-particle potential, drift and Hessian
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class BlockHessian:
    """Symmetrized (Nd)×(Nd) Hessian of U^N in d×d blocks.

    Attributes:
        matrix: the symmetrized matrix
        asymmetry: relative Frobenius defect ‖H − Hᵀ‖/‖H‖ before symmetrization
        n_particles: N
        dim: d
    """

    matrix: np.ndarray
    asymmetry: float
    n_particles: int
    dim: int

    def block(self, i: int, j: int) -> np.ndarray:
        """The d×d block ∇²ᵢⱼU^N."""
        d = self.dim
        return self.matrix[i * d : (i + 1) * d, j * d : (j + 1) * d]


def batch_potential(model: EnergyModel, points: np.ndarray) -> np.ndarray:
    """U^N for a batch of configurations of shape (B, N, d)."""
    return points.shape[-2] * model.energy(points)


def batch_drift(model: EnergyModel, points: np.ndarray) -> np.ndarray:
    """−D_mF(μ_x, xⁱ) for a batch of configurations of shape (B, N, d)."""
    return -model.intrinsic_derivative(points, points)


@abk_common.function_trace
def potential_un(model: EnergyModel, config: ParticleConfiguration) -> float:
    """U^N(x) = N·F(μ_x).

    Args:
        model: energy model
        config: particle configuration

    Returns:
        The potential value
    """
    value = float(batch_potential(model, config.points))
    if not math.isfinite(value):
        local = model.flat_derivative(config.points, config.points)
        bad = np.flatnonzero(~np.isfinite(local))
        index = int(bad[0]) if bad.size else int(np.argmax(np.sum(config.points**2, axis=-1)))
        raise EvaluationError(f"non-finite energy {value} at particle {index}: {config.points[index]}", point=config.points[index])
    return value


def drift(model: EnergyModel, config: ParticleConfiguration) -> np.ndarray:
    """Drift of the particle SDE, component i equal to −D_mF(μ_x, xⁱ) = −∇ᵢU^N(x).

    Args:
        model: energy model
        config: particle configuration

    Returns:
        Array of shape (N, d)
    """
    return batch_drift(model, config.points)


@abk_common.function_trace
def hessian_un(model: EnergyModel, config: ParticleConfiguration, tolerance: float = HESSIAN_SYMMETRY_TOLERANCE) -> BlockHessian:
    """Assemble ∇²U^N(x) from ∇D_mF on the diagonal and D_m²F/N everywhere.

    Args:
        model: energy model
        config: particle configuration
        tolerance: maximal admissible relative asymmetry before symmetrization

    Returns:
        The symmetrized block Hessian with its asymmetry defect
    """
    x = config.points
    n, d = x.shape
    blocks = model.second_intrinsic(x, x, x) / n
    diag = model.grad_intrinsic(x, x)
    blocks[np.arange(n), np.arange(n)] += diag
    matrix = blocks.transpose(0, 2, 1, 3).reshape(n * d, n * d)
    scale = max(float(np.linalg.norm(matrix)), np.finfo(float).tiny)
    defect = float(np.linalg.norm(matrix - matrix.T)) / scale
    if defect > tolerance:
        raise HessianAsymmetryError(defect, tolerance)
    if defect > 0:
        logger.debug(f"Hessian asymmetry defect {defect:.2e} removed by symmetrization")
    return BlockHessian(matrix=0.5 * (matrix + matrix.T), asymmetry=defect, n_particles=n, dim=d)


def hessian_form(model: EnergyModel, points: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched quadratic form of ∇²U^N, shape (B,), for points and directions of shape (B, N, d)."""
    return model.hessian_form(np.asarray(points, dtype=float), np.asarray(v, dtype=float))


def interaction_convexity(model: EnergyModel, config: ParticleConfiguration) -> float:
    """Smallest eigenvalue of the block matrix [(1/N)·D_m²F(μ_x, xⁱ, xʲ)].

    Nonnegative for flat-convex energies: this is the quantity dropped in the
    lower bound of the Γ₂ term.
    """
    x = config.points
    n, d = x.shape
    matrix = (model.second_intrinsic(x, x, x) / n).transpose(0, 2, 1, 3).reshape(n * d, n * d)
    return float(linalg.eigh(0.5 * (matrix + matrix.T), eigvals_only=True)[0])


def leave_one_out_gap(model: EnergyModel, config: ParticleConfiguration) -> float:
    """maxᵢ |D_mF(μ_x, xⁱ) − D_mF(μ_{x⁻ⁱ}, xⁱ)|.

    Measures how far the conditional drift of particle i is from the drift of
    the hat measure built on the other particles.
    """
    x = config.points
    n = x.shape[0]
    if n < 2:
        raise DomainError("leave-one-out gap needs at least two particles")
    full = model.intrinsic_derivative(x, x)
    gap = 0.0
    for i in range(n):
        others = np.delete(x, i, axis=0)
        reduced = model.intrinsic_derivative(others, x[i : i + 1])[0]
        gap = max(gap, float(np.linalg.norm(full[i] - reduced)))
    return gap
