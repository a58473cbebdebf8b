"""Monte Carlo checks of functional inequalities on samples of the Gibbs measure.

Every check reduces per-sample feature vectors block by block into a running
mean and co-moment matrix, so both sides of an inequality come from the same
samples and their difference gets a delta-method standard error. Samples are
either one array of shape (S, N, d) or any re-iterable source of such blocks,
e.g. a ``GibbsSampleStream``.
"""

# Standard lib imports
import logging
import math
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor

# Third party imports
import numpy as np
from scipy import linalg

# Local imports
from mflsi import abk_common
from mflsi.energy import EnergyModel, GaussianMeanField, batch_drift
from mflsi.errors import DictionaryError, DomainError
from mflsi.gaussian_oracle import GaussianMeasure, gibbs_gaussian, gibbs_precision, kl_gaussian, ou_flow
from mflsi.models import GapEstimate, InequalityVerdict
from mflsi.observables import TestFunction


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
SIGMA_LEVEL = 3.0
INCONCLUSIVE_FRACTION = 0.5
POSITIVITY_FLOOR = 1e-8
GRAM_CONDITION_LIMIT = 1e10
ENTROPY_FLOOR = 1e-14
DEFAULT_BLOCK_SIZE = 4096

Samples = np.ndarray | Iterable[np.ndarray]

logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Streaming reduction
# -----------------------------------------------------------------------------
class StreamingMoments:
    """Running mean and co-moment matrix of feature vectors.

    Block means use compensated summation and blocks are merged with the
    pairwise update of Chan et al., so the result does not depend on how the
    samples were split into blocks beyond floating-point reassociation.
    """

    def __init__(self, n_features: int, covariance: bool = True):
        """Initialize an empty accumulator."""
        self.count = 0
        self.mean = np.zeros(n_features)
        self.m2 = np.zeros((n_features, n_features)) if covariance else None

    @classmethod
    def from_block(cls, features: np.ndarray, covariance: bool = True) -> "StreamingMoments":
        """Moments of one block of features of shape (B, k)."""
        features = np.asarray(features, dtype=float)
        moments = cls(features.shape[1], covariance)
        if features.shape[0] == 0:
            return moments
        moments.count = features.shape[0]
        moments.mean = np.array([math.fsum(column) for column in features.T]) / moments.count
        if covariance:
            centered = features - moments.mean
            moments.m2 = centered.T @ centered
        return moments

    def merge(self, other: "StreamingMoments") -> None:
        """Fold another accumulator into this one."""
        if other.count == 0:
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        if self.m2 is not None:
            self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.count * other.count / total)
        self.mean = self.mean + delta * (other.count / total)
        self.count = total

    def update(self, features: np.ndarray) -> None:
        """Fold one block of features of shape (B, k) into the accumulator."""
        self.merge(StreamingMoments.from_block(features, self.m2 is not None))

    def covariance(self) -> np.ndarray:
        """Unbiased sample covariance of the features."""
        if self.m2 is None:
            raise DomainError("covariance was not tracked")
        if self.count < 2:
            return np.full_like(self.m2, np.nan)
        return self.m2 / (self.count - 1)

    def stderr(self, weights: np.ndarray) -> float:
        """Standard error of the linear statistic weightsᵀ·mean."""
        weights = np.asarray(weights, dtype=float)
        variance = float(weights @ self.covariance() @ weights)
        return math.sqrt(max(variance, 0.0) / self.count)


def _iter_blocks(samples: Samples, block_size: int) -> Iterator[np.ndarray]:
    if isinstance(samples, np.ndarray):
        if samples.ndim != 3:
            raise DomainError(f"samples must have shape (S, N, d), got {samples.shape}")
        for start in range(0, samples.shape[0], block_size):
            yield samples[start : start + block_size]
        return
    for block in samples:
        block = np.asarray(block, dtype=float)
        if block.ndim != 3:
            raise DomainError(f"sample blocks must have shape (B, N, d), got {block.shape}")
        yield block


def reduce_features(
    samples: Samples,
    features: Callable[[np.ndarray], np.ndarray],
    n_features: int,
    *,
    covariance: bool = True,
    block_size: int = DEFAULT_BLOCK_SIZE,
    threads: int = 1,
) -> StreamingMoments:
    """Stream the samples through a feature map and accumulate its moments.

    Blocks are evaluated on up to ``threads`` workers and merged in sample
    order, so the result does not depend on the thread count.

    Args:
        samples: array of shape (S, N, d) or re-iterable source of blocks
        features: map from a block of shape (B, N, d) to features of shape (B, k)
        n_features: k
        covariance: also accumulate the co-moment matrix
        block_size: block length when slicing an array
        threads: worker threads

    Returns:
        The accumulated moments
    """

    def reduce_block(block: np.ndarray) -> StreamingMoments:
        return StreamingMoments.from_block(features(block), covariance)

    total = StreamingMoments(n_features, covariance)
    blocks = _iter_blocks(samples, block_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            for moments in executor.map(reduce_block, blocks):
                total.merge(moments)
    else:
        for block in blocks:
            total.merge(reduce_block(block))
    if total.count == 0:
        raise DomainError("no samples")
    return total


# -----------------------------------------------------------------------------
# Verdicts
# -----------------------------------------------------------------------------
def _verdict(
    name: str,
    moments: StreamingMoments,
    lhs: tuple[float, np.ndarray],
    rhs: tuple[float, np.ndarray],
    equality: bool = False,
) -> InequalityVerdict:
    """Build a verdict from (value, gradient in the feature means) for each side."""
    lhs_value, lhs_grad = lhs
    rhs_value, rhs_grad = rhs
    combined = moments.stderr(np.asarray(lhs_grad) - np.asarray(rhs_grad))
    gap = rhs_value - lhs_value
    if combined > 0:
        margin = gap / combined
    else:
        margin = 0.0 if gap == 0 else math.copysign(math.inf, gap)
    tolerance = SIGMA_LEVEL * combined
    holds = abs(gap) <= tolerance if equality else lhs_value <= rhs_value + tolerance
    inconclusive = combined > INCONCLUSIVE_FRACTION * max(abs(lhs_value), abs(rhs_value))
    if inconclusive:
        logger.warning(f"{name}: combined stderr {combined:.3g} exceeds half the compared magnitude")
    elif not holds:
        logger.info(f"{name}: violated by {-margin:.2f} standard errors")
    return InequalityVerdict(
        name=name,
        lhs=float(lhs_value),
        rhs=float(rhs_value),
        lhs_stderr=moments.stderr(lhs_grad),
        rhs_stderr=moments.stderr(rhs_grad),
        combined_stderr=combined,
        margin_sigmas=float(margin),
        holds=bool(holds),
        inconclusive=bool(inconclusive),
        n_samples=moments.count,
    )


def generator_action(model: EnergyModel, f: TestFunction, x: np.ndarray) -> np.ndarray:
    """L^N f = Δf − Σᵢ D_mF(μ_x, xⁱ)·∇ᵢf on a block of shape (B, N, d)."""
    return f.laplacian(x) + np.sum(batch_drift(model, x) * f.gradient(x), axis=(1, 2))


def gamma2(model: EnergyModel, f: TestFunction, x: np.ndarray) -> np.ndarray:
    """Γ₂(f) = ‖∇²f‖²_HS + ∇fᵀ∇²U^N∇f on a block of shape (B, N, d)."""
    return f.hessian_sq(x) + model.hessian_form(x, f.gradient(x))


@abk_common.function_trace
def gamma2_identity_check(model: EnergyModel, samples: Samples, f: TestFunction, *, threads: int = 1) -> InequalityVerdict:
    """Check ∫(L^N f)² = ∫Γ₂(f) under the Gibbs measure as an equality within 3σ.

    Args:
        model: energy model the samples were drawn for
        samples: samples of exp(−U^N)
        f: test function
        threads: worker threads

    Returns:
        The verdict with lhs = ∫(L^N f)² and rhs = ∫Γ₂(f)
    """

    def features(x: np.ndarray) -> np.ndarray:
        return np.column_stack([generator_action(model, f, x) ** 2, gamma2(model, f, x)])

    moments = reduce_features(samples, features, 2, threads=threads)
    return _verdict(f"gamma2_identity[{f.name}]", moments, (moments.mean[0], [1.0, 0.0]), (moments.mean[1], [0.0, 1.0]), equality=True)


@abk_common.function_trace
def second_order_poincare_check(
    model: EnergyModel, samples: Samples, f: TestFunction, rho2: float, *, threads: int = 1
) -> InequalityVerdict:
    """Check ρ₂∫|∇f|² ≤ ∫(L^N f)².

    Args:
        model: energy model the samples were drawn for
        samples: samples of exp(−U^N)
        f: test function
        rho2: Poincaré constant, usually ``constants.poincare_constant``
        threads: worker threads

    Returns:
        The verdict
    """

    def features(x: np.ndarray) -> np.ndarray:
        return np.column_stack([np.sum(f.gradient(x) ** 2, axis=(1, 2)), generator_action(model, f, x) ** 2])

    moments = reduce_features(samples, features, 2, threads=threads)
    return _verdict(
        f"second_order_poincare[{f.name}]", moments, (rho2 * moments.mean[0], [rho2, 0.0]), (moments.mean[1], [0.0, 1.0])
    )


@abk_common.function_trace
def poincare_check(model: EnergyModel, samples: Samples, f: TestFunction, rho: float, *, threads: int = 1) -> InequalityVerdict:
    """Check ρ·Var(f) ≤ ∫|∇f|².

    ``model`` only documents which Gibbs measure was sampled.
    """

    def features(x: np.ndarray) -> np.ndarray:
        value = f.value(x)
        return np.column_stack([value, value**2, np.sum(f.gradient(x) ** 2, axis=(1, 2))])

    moments = reduce_features(samples, features, 3, threads=threads)
    m = moments.mean
    return _verdict(
        f"poincare[{f.name}]", moments, (rho * (m[1] - m[0] ** 2), [-2.0 * rho * m[0], rho, 0.0]), (m[2], [0.0, 0.0, 1.0])
    )


def _entropy(t: np.ndarray) -> np.ndarray:
    return t * np.log(t)


@abk_common.function_trace
def defective_lsi_check(
    model: EnergyModel, samples: Samples, f: TestFunction, rho_prime: float, delta: float, *, threads: int = 1
) -> InequalityVerdict:
    """Check ∫φ(f²) − φ(∫f²) ≤ (2/ρ′)∫|∇f|² + (δ/2ρ′)∫f² with φ(t) = t·log t.

    f is clipped below at 1e-8 so that φ stays finite; the gradient vanishes
    where the clipping is active. ``model`` only documents which Gibbs measure
    was sampled.

    Args:
        model: energy model the samples were drawn for
        samples: samples of exp(−U^N)
        f: test function, positive where it matters
        rho_prime: defective LSI constant ρ′ > 0
        delta: defect δ ≥ 0 (δ = 0 checks a perfect LSI)
        threads: worker threads

    Returns:
        The verdict
    """
    if not rho_prime > 0 or not delta >= 0:
        raise DomainError(f"need rho_prime > 0 and delta >= 0, got {rho_prime}, {delta}")

    def features(x: np.ndarray) -> np.ndarray:
        raw = f.value(x)
        clipped = np.maximum(raw, POSITIVITY_FLOOR)
        grad_sq = np.where(raw > POSITIVITY_FLOOR, np.sum(f.gradient(x) ** 2, axis=(1, 2)), 0.0)
        return np.column_stack([_entropy(clipped**2), clipped**2, grad_sq])

    moments = reduce_features(samples, features, 3, threads=threads)
    m = moments.mean
    lhs = m[0] - float(_entropy(m[1]))
    rhs = 2.0 / rho_prime * m[2] + delta / (2.0 * rho_prime) * m[1]
    label = "lsi" if delta == 0 else "defective_lsi"
    return _verdict(
        f"{label}[{f.name}]",
        moments,
        (lhs, [1.0, -(math.log(m[1]) + 1.0), 0.0]),
        (rhs, [0.0, delta / (2.0 * rho_prime), 2.0 / rho_prime]),
    )


# -----------------------------------------------------------------------------
# Spectral gap
# -----------------------------------------------------------------------------
def _dictionary_features(dictionary: Sequence[TestFunction], x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values = np.column_stack([f.value(x) for f in dictionary])
    grads = np.stack([f.gradient(x).reshape(x.shape[0], -1) for f in dictionary], axis=1)
    return values, grads


@abk_common.function_trace
def rayleigh_gap(samples: Samples, dictionary: Sequence[TestFunction], *, threads: int = 1) -> GapEstimate:
    """Minimal Rayleigh quotient ∫|∇f|²/Var(f) over f in the span of the dictionary.

    Solves the generalized eigenproblem A·c = λ·B·c with A the Gram matrix of
    gradients and B the covariance matrix of the dictionary. The standard
    error comes from a second pass over the samples with the influence
    function |∇f_c|² − λ(f_c − ∫f_c)² of the minimizer f_c.

    Args:
        samples: samples of the measure, re-iterable
        dictionary: at least two test functions
        threads: worker threads

    Returns:
        The gap estimate

    Raises:
        DictionaryError: fewer than two functions, or a covariance Gram
            matrix with condition number above 1e10
    """
    k = len(dictionary)
    if k < 2:
        raise DictionaryError(f"the dictionary needs at least two functions, got {k}")
    if not isinstance(samples, np.ndarray) and iter(samples) is samples:
        samples = list(samples)
    upper = np.triu_indices(k)

    def first_pass(x: np.ndarray) -> np.ndarray:
        values, grads = _dictionary_features(dictionary, x)
        products = values[:, :, None] * values[:, None, :]
        inner = np.einsum("bkp,blp->bkl", grads, grads)
        return np.column_stack([values, products[:, upper[0], upper[1]], inner[:, upper[0], upper[1]]])

    n_pairs = len(upper[0])
    moments = reduce_features(samples, first_pass, k + 2 * n_pairs, covariance=False, threads=threads)
    mean = moments.mean[:k]
    second = np.zeros((k, k))
    second[upper] = moments.mean[k : k + n_pairs]
    gram = np.zeros((k, k))
    gram[upper] = moments.mean[k + n_pairs :]
    second = second + np.triu(second, 1).T
    gram = gram + np.triu(gram, 1).T
    cov = second - np.outer(mean, mean)

    spectrum = linalg.eigh(cov, eigvals_only=True)
    condition = math.inf if spectrum[0] <= 0 else float(spectrum[-1] / spectrum[0])
    if condition > GRAM_CONDITION_LIMIT:
        raise DictionaryError(f"covariance Gram matrix condition {condition:.3g} exceeds {GRAM_CONDITION_LIMIT:.0e}")
    eigenvalues, vectors = linalg.eigh(gram, cov)
    value = float(eigenvalues[0])
    coef = vectors[:, 0]

    def influence(x: np.ndarray) -> np.ndarray:
        values, grads = _dictionary_features(dictionary, x)
        grad_c = np.einsum("k,bkp->bp", coef, grads)
        centered = (values - mean) @ coef
        return (np.sum(grad_c**2, axis=1) - value * centered**2)[:, None]

    spread = reduce_features(samples, influence, 1, threads=threads)
    stderr = spread.stderr(np.ones(1))
    logger.info(f"rayleigh gap {value:.6g} ± {stderr:.2g} from {k} functions, condition {condition:.3g}")
    return GapEstimate(value=value, stderr=stderr, coefficients=coef, condition=condition, n_samples=moments.count)


# -----------------------------------------------------------------------------
# Entropy decay on the Gaussian model
# -----------------------------------------------------------------------------
def entropy_curve(model: GaussianMeanField, m0: GaussianMeasure, times: Sequence[float], n_particles: int, dim: int) -> np.ndarray:
    """Exact H(m^N_t | m^N_*) along the Langevin flow of the Gaussian model.

    Args:
        model: Gaussian mean field model
        m0: nondegenerate Gaussian initial law on R^{Nd}
        times: time grid
        n_particles: N
        dim: d

    Returns:
        Relative entropies on the grid
    """
    if not isinstance(model, GaussianMeanField):
        raise DomainError("entropy curves are exact only for the GaussianMeanField model")
    precision = gibbs_precision(model.a, model.lam, n_particles, dim)
    target = gibbs_gaussian(model.a, model.lam, n_particles, dim)
    return np.array([kl_gaussian(ou_flow(m0, precision, float(t)), target) for t in times])


@abk_common.function_trace
def entropy_decay_rate(model: GaussianMeanField, m0: GaussianMeasure, times: Sequence[float], n_particles: int, dim: int) -> float:
    """Least-squares decay rate of log H(m^N_t | m^N_*) over a time grid.

    Grid points where H has fallen to 1e-14 or below are dropped.

    Returns:
        The fitted rate r in H ≈ C·e^{−rt}

    Raises:
        DomainError: fewer than two grid points remain
    """
    times = np.asarray(times, dtype=float)
    entropy = entropy_curve(model, m0, times, n_particles, dim)
    keep = entropy > ENTROPY_FLOOR
    if np.count_nonzero(~keep):
        logger.debug(f"dropped {np.count_nonzero(~keep)} grid point(s) with entropy below {ENTROPY_FLOOR}")
    if np.count_nonzero(keep) < 2:
        raise DomainError("fewer than two grid points with entropy above the floor")
    slope = np.polyfit(times[keep], np.log(entropy[keep]), 1)[0]
    return float(-slope)
