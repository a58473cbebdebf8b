"""Closed-form ground truth for the Gaussian mean field model.

For F(m) = (a/2)∫|x|² dm + (λ/2)|∫x dm|² the N-particle Gibbs measure is the
centred Gaussian with precision P = a·I + (λ/N)(ones ⊗ I_d), and the particle
SDE is the linear equation dX = −PX dt + √2 dB. Laws, entropies, Fisher
informations and Wasserstein distances of Gaussians are computed from
symmetric eigendecompositions.

A covariance that is exactly zero stands for a point mass. Only ``w2_point``,
``ou_flow``, ``euler_maruyama_moments`` and ``quadratic_mgf`` accept it.
"""

# Standard lib imports
import logging
import math
from dataclasses import dataclass

# Third party imports
import numpy as np
from scipy import linalg

# Local imports
from mflsi.errors import DivergentPrefactorError, DomainError


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
EIGENVALUE_FLOOR = 1e-14
SYMMETRY_TOLERANCE = 1e-12

logger = logging.getLogger(__name__)


def _symmetric_eigh(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the symmetric part of ``matrix``."""
    return linalg.eigh(0.5 * (matrix + matrix.T))


def _spd_eigh(matrix: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    w, v = _symmetric_eigh(matrix)
    if w[0] <= EIGENVALUE_FLOOR:
        raise DomainError(f"singular {what}: smallest eigenvalue {w[0]:.3e}")
    return w, v


def _from_eigen(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (v * w) @ v.T


@dataclass(frozen=True)
class GaussianMeasure:
    """Gaussian law on R^k, or a point mass when ``cov`` is exactly zero.

    Attributes:
        mean: vector of length k
        cov: symmetric positive-definite k×k matrix (or the zero matrix)
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        """Validate symmetry and definiteness."""
        mean = np.atleast_1d(np.array(self.mean, dtype=float))
        cov = np.atleast_2d(np.array(self.cov, dtype=float))
        k = mean.shape[0]
        if mean.ndim != 1 or cov.shape != (k, k):
            raise DomainError(f"mean of shape {mean.shape} does not match cov of shape {cov.shape}")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > SYMMETRY_TOLERANCE * scale:
            raise DomainError("covariance is not symmetric")
        if np.any(cov) and _symmetric_eigh(cov)[0][0] <= 0:
            raise DomainError("covariance is not positive definite")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def point(cls, x: np.ndarray) -> "GaussianMeasure":
        """Point mass at x."""
        x = np.atleast_1d(np.asarray(x, dtype=float).reshape(-1))
        return cls(x, np.zeros((x.size, x.size)))

    @classmethod
    def product(cls, mean: np.ndarray, cov: np.ndarray, n_particles: int) -> "GaussianMeasure":
        """N independent copies of N(mean, cov) on R^d, as a law on R^{Nd}."""
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        return cls(np.tile(mean, n_particles), np.kron(np.eye(n_particles), cov))

    @property
    def dim(self) -> int:
        """Dimension k."""
        return self.mean.shape[0]

    @property
    def is_point(self) -> bool:
        """Whether this is a point mass."""
        return not np.any(self.cov)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` samples, shape (size, k)."""
        z = rng.standard_normal((size, self.dim))
        if self.is_point:
            return np.broadcast_to(self.mean, z.shape).copy()
        w, v = _symmetric_eigh(self.cov)
        return self.mean + (z * np.sqrt(np.clip(w, 0.0, None))) @ v.T


# -----------------------------------------------------------------------------
# Gibbs measure of the Gaussian model
# -----------------------------------------------------------------------------
def _check_normalizable(a: float, lam: float, n: int, d: int) -> None:
    if n < 1 or d < 1:
        raise DomainError(f"N and d must be >= 1, got {n}, {d}")
    if not (a > 0 and a + lam > 0):
        raise DomainError(f"Gibbs measure is not normalizable for a={a}, lam={lam}")


def mean_projector(n: int, d: int) -> np.ndarray:
    """Orthogonal projector (1/N)(ones ⊗ I_d) onto configurations with all particles equal."""
    return np.kron(np.full((n, n), 1.0 / n), np.eye(d))


def gibbs_precision(a: float, lam: float, n: int, d: int) -> np.ndarray:
    """P = a·I_{Nd} + (λ/N)(ones_N ⊗ I_d)."""
    _check_normalizable(a, lam, n, d)
    return a * np.eye(n * d) + lam * mean_projector(n, d)


def gibbs_spectrum(a: float, lam: float, n: int, d: int) -> list[tuple[float, int]]:
    """Eigenvalues of the Gibbs precision with multiplicities.

    Difference modes carry a with multiplicity (N−1)d, the mean mode a + λ
    with multiplicity d.
    """
    _check_normalizable(a, lam, n, d)
    spectrum = [(a, (n - 1) * d), (a + lam, d)]
    return [(value, mult) for value, mult in spectrum if mult > 0]


def exact_gap(a: float, lam: float, n: int, d: int = 1) -> float:
    """Exact LSI and Poincaré constant of the Gibbs measure, λ_min(P)."""
    return min(value for value, _ in gibbs_spectrum(a, lam, n, d))


def gibbs_gaussian(a: float, lam: float, n: int, d: int) -> GaussianMeasure:
    """Exact N-particle Gibbs measure of GaussianMeanField(a, λ).

    The covariance is assembled from the two spectral projectors rather than
    by inverting P.
    """
    _check_normalizable(a, lam, n, d)
    projector = mean_projector(n, d)
    cov = (np.eye(n * d) - projector) / a + projector / (a + lam)
    return GaussianMeasure(np.zeros(n * d), cov)


def stationary(precision: np.ndarray) -> GaussianMeasure:
    """Invariant law N(0, P⁻¹) of dX = −PX dt + √2 dB."""
    w, v = _spd_eigh(precision, "precision")
    return GaussianMeasure(np.zeros(precision.shape[0]), _from_eigen(1.0 / w, v))


# -----------------------------------------------------------------------------
# Flows
# -----------------------------------------------------------------------------
def ou_flow(m0: GaussianMeasure, precision: np.ndarray, t: float) -> GaussianMeasure:
    """Law at time t of dX = −PX dt + √2 dB started from m0.

    mean_t = e^{−Pt}mean₀, cov_t = e^{−Pt}cov₀e^{−Pt} + P⁻¹(I − e^{−2Pt}),
    where the last term is read as 2t on zero eigenvalues of P.
    """
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if precision.shape != (m0.dim, m0.dim):
        raise DomainError(f"precision of shape {precision.shape} does not act on R^{m0.dim}")
    if t == 0:
        return m0
    w, v = _symmetric_eigh(precision)
    propagator = _from_eigen(np.exp(-w * t), v)
    with np.errstate(divide="ignore", invalid="ignore"):
        noise = np.where(w != 0, -np.expm1(-2.0 * w * t) / w, 2.0 * t)
    cov = propagator @ m0.cov @ propagator + _from_eigen(noise, v)
    defect = float(np.max(np.abs(cov - cov.T)))
    if defect > 0:
        logger.debug(f"ou_flow covariance symmetrized, defect {defect:.2e}")
    return GaussianMeasure(propagator @ m0.mean, 0.5 * (cov + cov.T))


def euler_maruyama_moments(m0: GaussianMeasure, precision: np.ndarray, dt: float, n_steps: int) -> GaussianMeasure:
    """Exact law of the Euler–Maruyama chain x ← (I − dt·P)x + √(2dt)ξ after ``n_steps`` steps."""
    if not dt > 0 or n_steps < 0:
        raise DomainError(f"need dt > 0 and n_steps >= 0, got {dt}, {n_steps}")
    step = np.eye(m0.dim) - dt * precision
    mean, cov = m0.mean.copy(), m0.cov.copy()
    for _ in range(n_steps):
        mean = step @ mean
        cov = step @ cov @ step.T + 2.0 * dt * np.eye(m0.dim)
    return GaussianMeasure(mean, 0.5 * (cov + cov.T))


# -----------------------------------------------------------------------------
# Divergences and distances
# -----------------------------------------------------------------------------
def _check_pair(p: GaussianMeasure, q: GaussianMeasure) -> None:
    if p.dim != q.dim:
        raise DomainError(f"dimension mismatch: {p.dim} vs {q.dim}")


def kl_gaussian(p: GaussianMeasure, q: GaussianMeasure) -> float:
    """Relative entropy H(p | q)."""
    _check_pair(p, q)
    wp, _ = _spd_eigh(p.cov, "covariance of p")
    wq, vq = _spd_eigh(q.cov, "covariance of q")
    q_inv = _from_eigen(1.0 / wq, vq)
    diff = q.mean - p.mean
    value = 0.5 * (np.trace(q_inv @ p.cov) - p.dim + diff @ q_inv @ diff + np.sum(np.log(wq)) - np.sum(np.log(wp)))
    return max(float(value), 0.0)


def fisher_gaussian(p: GaussianMeasure, q: GaussianMeasure) -> float:
    """Relative Fisher information I(p | q) = ∫|∇log(dp/dq)|² dp."""
    _check_pair(p, q)
    wp, vp = _spd_eigh(p.cov, "covariance of p")
    wq, vq = _spd_eigh(q.cov, "covariance of q")
    gap = _from_eigen(1.0 / wq, vq) - _from_eigen(1.0 / wp, vp)
    shift = _from_eigen(1.0 / wq, vq) @ (p.mean - q.mean)
    return float(np.trace(gap @ p.cov @ gap) + shift @ shift)


def w2_gaussian(p: GaussianMeasure, q: GaussianMeasure) -> float:
    """Quadratic Wasserstein distance W₂(p, q) between nondegenerate Gaussians."""
    _check_pair(p, q)
    _spd_eigh(p.cov, "covariance of p")
    wq, vq = _spd_eigh(q.cov, "covariance of q")
    root_q = _from_eigen(np.sqrt(wq), vq)
    cross = np.sum(np.sqrt(np.clip(_symmetric_eigh(root_q @ p.cov @ root_q)[0], 0.0, None)))
    value = float(np.sum((p.mean - q.mean) ** 2) + np.trace(p.cov) + np.trace(q.cov) - 2.0 * cross)
    return math.sqrt(max(value, 0.0))


def w2_point(x: np.ndarray, q: GaussianMeasure) -> float:
    """W₂(δ_x, q) = (|x − mean|² + tr cov)^{1/2}."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != q.dim:
        raise DomainError(f"dimension mismatch: {x.size} vs {q.dim}")
    return math.sqrt(float(np.sum((x - q.mean) ** 2) + np.trace(q.cov)))


def quadratic_mgf(m0: GaussianMeasure, center: np.ndarray, c: float) -> float:
    """log E exp(c|X − center|²) for X ~ m0.

    Equal to −½ logdet(I − 2cΣ) + c·bᵀ(I − 2cΣ)⁻¹b with b = mean − center.

    Raises:
        DivergentPrefactorError: when 2c·λ_max(Σ) ≥ 1
    """
    center = np.asarray(center, dtype=float).reshape(-1)
    if center.size != m0.dim:
        raise DomainError(f"dimension mismatch: {center.size} vs {m0.dim}")
    b = m0.mean - center
    if m0.is_point:
        return float(c * b @ b)
    w, v = _symmetric_eigh(m0.cov)
    shrink = 1.0 - 2.0 * c * w
    if np.any(shrink <= 0):
        raise DivergentPrefactorError(f"E exp(c|X - center|^2) diverges: 2c*lambda_max = {2.0 * c * w[-1]:.6g} >= 1")
    coords = v.T @ b
    return float(-0.5 * np.sum(np.log(shrink)) + c * np.sum(coords**2 / shrink))
