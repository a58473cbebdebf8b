"""Positive-type interaction kernels and the discrete quadratic forms built from them.

A kernel W on R^d × R^d is of positive type when ∬W dμ⊗² ≥ 0 for every
signed measure μ of zero total mass. Its cross Hessian ∇²₁₂W then yields a
nonnegative quadratic form Σᵢⱼ vⁱᵀ∇²₁₂W(xⁱ, xʲ)vʲ, obtained as the h → 0
limit of the same double integral over μ_h = Σᵢ(δ_{xⁱ+hvⁱ} − δ_{xⁱ}) / h.
"""

# Standard lib imports
import logging
import math
from abc import ABCMeta, abstractmethod
from collections.abc import Sequence
from typing import Any

# Third party imports
import numpy as np
from scipy import linalg

# Local imports
from mflsi import abk_common
from mflsi.dynamics import PhiloxNoise
from mflsi.energy import EnergyModel, RbfInteraction
from mflsi.errors import DomainError
from mflsi.models import PositivityReport


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
KERNEL_STREAM = 2
POSITIVITY_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12
FD_STEP = 1e-4

logger = logging.getLogger(__name__)


class Kernel(metaclass=ABCMeta):
    """Interaction kernel W(x, x′) with its cross Hessian ∇²₁₂W.

    Both methods broadcast over leading axes of points of shape (..., d).
    """

    name: str = "kernel"
    symmetric: bool = True

    @abstractmethod
    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """W(x, y), shape (...)."""
        raise NotImplementedError

    @abstractmethod
    def cross_hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """∇ₓ∇ᵧW(x, y), shape (..., d, d) indexed [x-component, y-component]."""
        raise NotImplementedError

    def gram(self, atoms: np.ndarray) -> np.ndarray:
        """Matrix [W(aᵢ, aⱼ)] for atoms of shape (n, d)."""
        atoms = np.asarray(atoms, dtype=float)
        return self.value(atoms[:, None, :], atoms[None, :, :])

    def cross_hessian_error(self, x: np.ndarray, y: np.ndarray) -> float:
        """Relative Frobenius error of ``cross_hessian`` against mixed central differences.

        Args:
            x: points of shape (B, d)
            y: points of shape (B, d)

        Returns:
            max over the batch of |H − H_fd| / max(1, |H|)
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = x.shape[-1]
        basis = np.eye(d) * FD_STEP
        numeric = np.empty((*x.shape[:-1], d, d))
        for k in range(d):
            for m in range(d):
                numeric[..., k, m] = (
                    self.value(x + basis[k], y + basis[m])
                    - self.value(x + basis[k], y - basis[m])
                    - self.value(x - basis[k], y + basis[m])
                    + self.value(x - basis[k], y - basis[m])
                ) / (4 * FD_STEP**2)
        exact = self.cross_hessian(x, y)
        diff = np.sqrt(np.sum((exact - numeric) ** 2, axis=(-2, -1)))
        scale = np.maximum(1.0, np.sqrt(np.sum(exact**2, axis=(-2, -1))))
        return float(np.max(diff / scale))

    def __repr__(self) -> str:
        """Kernel name."""
        return f"{type(self).__name__}({self.name})"


class LinearKernel(Kernel):
    """W(x, x′) = x·x′, with ∇²₁₂W = I."""

    name = "linear"

    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Inner product."""
        return np.sum(np.asarray(x) * np.asarray(y), axis=-1)

    def cross_hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Identity."""
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return np.broadcast_to(np.eye(shape[-1]), (*shape, shape[-1])).copy()


class RbfKernel(Kernel):
    """W(x, x′) = s·exp(−|x − x′|²/2σ²).

    ∇²₁₂W = W·(I/σ² − zzᵀ/σ⁴) with z = x − x′.

    Args:
        sigma: width σ > 0
        scale: amplitude s ≥ 0
    """

    name = "rbf"

    def __init__(self, sigma: float = 1.0, scale: float = 1.0, name: str = "rbf"):
        """Initialize the kernel."""
        if not sigma > 0 or not scale >= 0:
            raise DomainError(f"rbf kernel needs sigma > 0 and scale >= 0, got {sigma}, {scale}")
        self.sigma = float(sigma)
        self.scale = float(scale)
        self.name = name

    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gaussian bump of x − y."""
        z = np.asarray(x) - np.asarray(y)
        return self.scale * np.exp(-0.5 * np.sum(z**2, axis=-1) / self.sigma**2)

    def cross_hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """W·(I/σ² − zzᵀ/σ⁴)."""
        z = np.asarray(x) - np.asarray(y)
        d = z.shape[-1]
        w = self.value(x, y)[..., None, None]
        return w * (np.eye(d) / self.sigma**2 - z[..., :, None] * z[..., None, :] / self.sigma**4)


class CosineKernel(Kernel):
    """W(x, x′) = cos(ω·(x − x′)), of positive type by Bochner's theorem.

    Args:
        frequency: ω, a scalar (applied to every coordinate) or a d-vector
    """

    name = "cosine"

    def __init__(self, frequency: float | Sequence[float] = 1.0):
        """Initialize the kernel."""
        self.frequency = np.atleast_1d(np.asarray(frequency, dtype=float))

    def _omega(self, d: int) -> np.ndarray:
        if self.frequency.size not in (1, d):
            raise DomainError(f"frequency of length {self.frequency.size} does not fit dimension {d}")
        return np.broadcast_to(self.frequency, (d,))

    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """cos(ω·(x − y))."""
        z = np.asarray(x) - np.asarray(y)
        return np.cos(z @ self._omega(z.shape[-1]))

    def cross_hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """cos(ω·(x − y))·ωωᵀ."""
        z = np.asarray(x) - np.asarray(y)
        omega = self._omega(z.shape[-1])
        return np.cos(z @ omega)[..., None, None] * np.outer(omega, omega)


class NegatedKernel(Kernel):
    """−W for a base kernel W."""

    def __init__(self, base: Kernel):
        """Wrap the base kernel."""
        self.base = base
        self.name = f"neg_{base.name}"
        self.symmetric = base.symmetric

    def value(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """−W."""
        return -self.base.value(x, y)

    def cross_hessian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """−∇²₁₂W."""
        return -self.base.cross_hessian(x, y)


def interaction_kernel(model: EnergyModel) -> Kernel:
    """Second flat derivative κ·k(x − x′) of the interaction of an ``RbfInteraction`` model."""
    if not isinstance(model, RbfInteraction):
        raise DomainError(f"{model.name} has no pairwise interaction kernel")
    return RbfKernel(model.sigma, model.kappa, name="interaction")


def create_kernel(name: str, params: dict[str, Any] | None = None, model: EnergyModel | None = None) -> Kernel:
    """Build a kernel by name.

    Args:
        name: linear, rbf, cosine, interaction, or any of these prefixed with ``neg_``
        params: keyword parameters of the kernel (sigma, scale, frequency)
        model: energy model for the ``interaction`` kernel

    Returns:
        The kernel
    """
    params = dict(params or {})
    if name.startswith("neg_"):
        return NegatedKernel(create_kernel(name[len("neg_") :], params, model))
    try:
        if name == "linear":
            return LinearKernel(**params)
        if name == "rbf":
            return RbfKernel(**params)
        if name == "cosine":
            return CosineKernel(**params)
    except TypeError as error:
        raise DomainError(f"bad parameters for kernel {name}: {error}") from error
    if name == "interaction":
        if model is None:
            raise DomainError("the interaction kernel needs an energy model")
        return interaction_kernel(model)
    raise DomainError(f"unknown kernel {name!r}")


# -----------------------------------------------------------------------------
# Forms
# -----------------------------------------------------------------------------
def _pair(xs: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    vs = np.asarray(vs, dtype=float)
    if xs.shape != vs.shape or xs.ndim < 2:
        raise DomainError(f"xs and vs must share a shape (..., N, d), got {xs.shape} and {vs.shape}")
    return xs, vs


def quadratic_form(kernel: Kernel, xs: np.ndarray, vs: np.ndarray) -> np.ndarray | float:
    """Σᵢⱼ vⁱᵀ∇²₁₂W(xⁱ, xʲ)vʲ for points and vectors of shape (..., N, d)."""
    xs, vs = _pair(xs, vs)
    hess = kernel.cross_hessian(xs[..., :, None, :], xs[..., None, :, :])
    value = np.einsum("...ik,...ijkm,...jm->...", vs, hess, vs)
    return float(value) if value.ndim == 0 else value


def measure_energy(kernel: Kernel, atoms: np.ndarray, weights: np.ndarray) -> float:
    """∬W dμ⊗² for the signed discrete measure μ = Σₐ wₐδ_{atomₐ}."""
    weights = np.asarray(weights, dtype=float)
    return float(weights @ kernel.gram(atoms) @ weights)


def mu_h_form(kernel: Kernel, xs: np.ndarray, vs: np.ndarray, h: float) -> float:
    """(1/h²)∬W d(μ_h)⊗² with μ_h = Σᵢ(δ_{xⁱ+hvⁱ} − δ_{xⁱ})."""
    if not h > 0:
        raise DomainError(f"h must be positive, got {h}")
    xs, vs = _pair(xs, vs)
    atoms = np.concatenate([xs + h * vs, xs])
    weights = np.concatenate([np.ones(len(xs)), -np.ones(len(xs))])
    return measure_energy(kernel, atoms, weights) / h**2


def convergence_order(kernel: Kernel, xs: np.ndarray, vs: np.ndarray, hs: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Errors |mu_h_form − quadratic_form| along ``hs`` and the observed orders between consecutive steps.

    Orders are NaN where both errors are at round-off level.
    """
    hs = np.asarray(hs, dtype=float)
    target = quadratic_form(kernel, xs, vs)
    errors = np.array([abs(mu_h_form(kernel, xs, vs, h) - target) for h in hs])
    floor = 1e-12 * max(1.0, abs(target))
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.where(
            (errors[:-1] > floor) & (errors[1:] > floor),
            np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]),
            np.nan,
        )
    logger.debug(f"{kernel.name}: mu_h errors {errors}, orders {orders}")
    return errors, orders


def gram_min_eigenvalue(kernel: Kernel, atoms: np.ndarray) -> float:
    """Smallest eigenvalue of the Gram matrix restricted to zero-mass weight vectors."""
    atoms = np.asarray(atoms, dtype=float)
    if len(atoms) < 2:
        raise DomainError("the centred Gram matrix needs at least two atoms")
    basis = linalg.null_space(np.ones((1, len(atoms))))
    gram = kernel.gram(atoms)
    reduced = basis.T @ (0.5 * (gram + gram.T)) @ basis
    return float(linalg.eigh(reduced, eigvals_only=True)[0])


@abk_common.function_trace
def positive_type_check(
    kernel: Kernel,
    n_trials: int,
    atoms_per_trial: int,
    seed: int,
    *,
    dim: int = 1,
    spread: float = 2.0,
    tolerance: float = POSITIVITY_TOLERANCE,
) -> PositivityReport:
    """Search random zero-mass signed measures for a negative ∬W dμ⊗².

    Trial k draws N(0, spread²) atoms and standard normal weights, centred to
    total mass 0, from its own Philox substream, so trials are independent of
    each other and of their evaluation order.

    Args:
        kernel: kernel under test
        n_trials: number of signed measures, ≥ 1
        atoms_per_trial: atoms per measure, ≥ 2
        seed: root seed
        dim: dimension d of the atoms
        spread: standard deviation of the atoms
        tolerance: values above −tolerance are treated as round-off

    Returns:
        The minimum with its minimizing measure
    """
    if n_trials < 1 or atoms_per_trial < 2:
        raise DomainError(f"need n_trials >= 1 and atoms_per_trial >= 2, got {n_trials}, {atoms_per_trial}")
    noise = PhiloxNoise(seed, stream=KERNEL_STREAM)
    best = (math.inf, None, None)
    symmetric = True
    for trial in range(n_trials):
        gen = noise.generator(trial, 0)
        atoms = spread * gen.standard_normal((atoms_per_trial, dim))
        weights = gen.standard_normal(atoms_per_trial)
        weights -= weights.mean()
        gram = kernel.gram(atoms)
        if kernel.symmetric and np.max(np.abs(gram - gram.T)) > SYMMETRY_TOLERANCE * max(1.0, float(np.max(np.abs(gram)))):
            symmetric = False
        value = float(weights @ gram @ weights)
        if value < best[0]:
            best = (value, atoms, weights)
    min_value, atoms, weights = best
    if not symmetric:
        logger.warning(f"kernel {kernel.name} is flagged symmetric but its Gram matrices are not")
    report = PositivityReport(
        kernel=kernel.name,
        min_value=min_value,
        argmin_atoms=atoms,
        argmin_weights=weights,
        n_trials=n_trials,
        tolerance=tolerance,
        gram_min_eigenvalue=gram_min_eigenvalue(kernel, atoms),
        symmetric=symmetric,
    )
    logger.info(f"kernel {kernel.name}: min energy {min_value:.3g} over {n_trials} trials, positive={report.positive}")
    return report
