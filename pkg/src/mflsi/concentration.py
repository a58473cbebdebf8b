"""Long-time concentration envelopes and their empirical counterparts.

For t ≥ 1 and a 1-Lipschitz f, the Langevin flow started from m₀ satisfies

    P[f(X_t) − m_*[f] ≥ r] ≤ ∫exp(c·W₂²(δ_x, m_*)) m₀(dx) · exp(−ρr²/4),
    c = ((M² + 3)/6)·e^{−ρ(t−1)},

and the particle version replaces M by M_mm + M_mx, ρ by ρ^N and ρr² by
Nρ^N r² for the empirical average of f. Only the mean and covariance of m_*
enter W₂²(δ_x, m_*) = |x − mean|² + tr cov, so m_* is passed as the
GaussianMeasure with its first two moments.
"""

# Standard lib imports
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

# Third party imports
import numpy as np
from scipy import optimize, special, stats

# Local imports
from mflsi import abk_common
from mflsi.dynamics import InitialLaw, sample_gibbs, simulate
from mflsi.energy import EnergyModel, GaussianMeanField
from mflsi.errors import DivergentPrefactorError, DomainError, RegimeError
from mflsi.gaussian_oracle import GaussianMeasure, quadratic_mgf, w2_gaussian, w2_point
from mflsi.models import ConstantsReport, EnergyBounds, GibbsMethod, LsiFormula, Scheme, SimConfig, TailComparison, TailEstimate
from mflsi.observables import PolynomialFunction, TestFunction


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
TAIL_CONFIDENCE = 0.99
LIPSCHITZ_SLACK = 1e-9
MIN_REPLICAS = 1000
HEAVY_TAIL_QUANTILE = 0.99
HEAVY_TAIL_SHARE = 0.5
REFERENCE_SAMPLES = 100_000

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConcentrationQuery:
    """Inputs of a concentration envelope.

    Attributes:
        t: time, t ≥ 1
        r: deviation level, r ≥ 0
        m_hess: bound M on the operator norm of ∇²U
        rho: LSI constant of m_*
        initial: m₀, a GaussianMeasure (point masses have zero covariance) or
            samples of shape (S, k) of any other law
        observable: optional test function, checked to be 1-Lipschitz
    """

    t: float
    r: float
    m_hess: float
    rho: float
    initial: GaussianMeasure | np.ndarray
    observable: TestFunction | None = None

    def __post_init__(self):
        """Validate the query."""
        if not self.t >= 1:
            raise DomainError(f"concentration bounds need t >= 1, got {self.t}")
        if not self.r >= 0 or not self.m_hess >= 0 or not self.rho > 0:
            raise DomainError(f"need r >= 0, m_hess >= 0, rho > 0, got {self.r}, {self.m_hess}, {self.rho}")
        if self.observable is not None and self.observable.lipschitz > 1 + LIPSCHITZ_SLACK:
            raise DomainError(f"observable {self.observable.name} has Lipschitz constant {self.observable.lipschitz} > 1")


def _exp(value: float) -> float:
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf


def prefactor_exponent(m_hess: float, rho: float, t: float) -> float:
    """c = ((M² + 3)/6)·e^{−ρ(t−1)}."""
    return (m_hess**2 + 3.0) / 6.0 * math.exp(-rho * (t - 1.0))


def log_prefactor(initial: GaussianMeasure | np.ndarray, m_star: GaussianMeasure, c: float) -> float:
    """log ∫exp(c·W₂²(δ_x, m_*)) m₀(dx).

    Closed form for Gaussian and point m₀. Samples of any other m₀ are
    averaged in log space; when the top 1% of the integrand carries more than
    half of the mass the integral is treated as divergent.

    Raises:
        DivergentPrefactorError: the integral diverges (Gaussian m₀ too wide)
            or looks heavy-tailed (sampled m₀)
    """
    trace = float(np.trace(m_star.cov))
    if isinstance(initial, GaussianMeasure):
        return c * trace + quadratic_mgf(initial, m_star.mean, c)
    samples = np.asarray(initial, dtype=float).reshape(len(initial), -1)
    if samples.shape[1] != m_star.dim:
        raise DomainError(f"samples of dimension {samples.shape[1]} do not match m_* of dimension {m_star.dim}")
    exponents = c * (np.sum((samples - m_star.mean) ** 2, axis=1) + trace)
    total = special.logsumexp(exponents)
    top = np.sort(exponents)[int(HEAVY_TAIL_QUANTILE * len(exponents)) :]
    share = math.exp(special.logsumexp(top) - total)
    if share > HEAVY_TAIL_SHARE:
        raise DivergentPrefactorError(f"top 1% of the sampled prefactor integrand carries {share:.0%} of the mass")
    return float(total - math.log(len(exponents)))


def log_bound_single(q: ConcentrationQuery, m_star: GaussianMeasure) -> float:
    """Logarithm of the single-particle envelope."""
    c = prefactor_exponent(q.m_hess, q.rho, q.t)
    return log_prefactor(q.initial, m_star, c) - q.rho * q.r**2 / 4.0


@abk_common.function_trace
def bound_single(q: ConcentrationQuery, m_star: GaussianMeasure) -> float:
    """Envelope on P[f(X_t) − m_*[f] ≥ r], reported as-is (values above 1 are vacuous).

    Args:
        q: query
        m_star: invariant law (only its mean and covariance are used)

    Returns:
        The bound, ``math.inf`` when it overflows
    """
    return _exp(log_bound_single(q, m_star))


@abk_common.function_trace
def bound_particle(
    q: ConcentrationQuery,
    constants: ConstantsReport,
    bounds: EnergyBounds,
    n: int,
    m_star_n: GaussianMeasure,
    formula: LsiFormula = LsiFormula.PIPELINE,
) -> float:
    """Envelope on P[(1/N)Σᵢf(Xⁱ_t) − E f(X_*) ≥ r] for the particle system.

    M and ρ of the query are replaced by M_mm + M_mx from ``bounds`` and by
    ρ^N from ``constants``; ``q.initial`` and ``m_star_n`` live on R^{Nd}.

    Raises:
        RegimeError: the constants report is not valid
    """
    if not constants.valid:
        raise RegimeError("rho_lsi", constants.rho_lsi(formula), constants.reason)
    rho_n = constants.rho_lsi(formula)
    c = prefactor_exponent(bounds.m_mm + bounds.m_mx, rho_n, q.t)
    return _exp(log_prefactor(q.initial, m_star_n, c) - n * rho_n * q.r**2 / 4.0)


# -----------------------------------------------------------------------------
# Entropy bounds
# -----------------------------------------------------------------------------
def short_time_entropy_bound(w2_sq: float, m_hess: float, control_energy: float = 0.0) -> float:
    """H(μ₁|m_*) ≤ ((M² + 3)/3)·W₂²(μ₀, m_*) + ½∫₀¹∫|α|²."""
    if w2_sq < 0 or control_energy < 0:
        raise DomainError("W2 squared and the control energy must be nonnegative")
    return (m_hess**2 + 3.0) / 3.0 * w2_sq + control_energy


def entropy_decay_bound(
    mu0: GaussianMeasure, m_star: GaussianMeasure, t: float, m_hess: float, rho: float, control_energy: float = 0.0
) -> float:
    """H(μ_t|m_*) ≤ ((M² + 3)/3)·e^{−ρ(t−1)}·W₂²(μ₀, m_*) + ½∫₀ᵗ∫|α|².

    Args:
        mu0: initial law, Gaussian or point mass
        m_star: Gaussian invariant law
        t: time, t ≥ 1
        m_hess: Hessian bound M
        rho: LSI constant of m_*
        control_energy: the term ½∫∫|α|², 0 for uncontrolled flows

    Returns:
        The bound
    """
    if not t >= 1:
        raise DomainError(f"the entropy decay bound needs t >= 1, got {t}")
    w2 = w2_point(mu0.mean, m_star) if mu0.is_point else w2_gaussian(mu0, m_star)
    return math.exp(-rho * (t - 1.0)) * short_time_entropy_bound(w2**2, m_hess) + control_energy


def entropy_contraction_bound(h0: float, rho: float, t: float) -> float:
    """e^{−2ρt}·H₀ under a ρ-LSI."""
    return math.exp(-2.0 * rho * t) * h0


def defective_contraction_bound(h0: float, rho_prime: float, delta: float, t: float) -> float:
    """e^{−2ρ′t}·H₀ + (δ/2ρ′)(1 − e^{−2ρ′t}) under a (ρ′, δ) defective LSI."""
    if not rho_prime > 0:
        raise DomainError(f"rho_prime must be positive, got {rho_prime}")
    decay = math.exp(-2.0 * rho_prime * t)
    return decay * h0 + delta / (2.0 * rho_prime) * (1.0 - decay)


def chained_entropy_bound(h0: float, rho_prime: float, delta: float, rho_n: float, t: float) -> tuple[float, float]:
    """Defective contraction up to a switch time s, then ρ^N contraction, minimized over s ∈ [0, t].

    Returns:
        (bound, switch time)
    """
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")

    def chained(s: float) -> float:
        return entropy_contraction_bound(defective_contraction_bound(h0, rho_prime, delta, s), rho_n, t - s)

    candidates = [(chained(0.0), 0.0), (chained(t), t)]
    if t > 0:
        result = optimize.minimize_scalar(chained, bounds=(0.0, t), method="bounded")
        candidates.append((float(result.fun), float(result.x)))
    return min(candidates)


def optimal_lambda(r: float, rho: float) -> float:
    """Exponential moment parameter λ = rρ/2 minimizing the Chernoff bound."""
    return r * rho / 2.0


def chernoff_log_bound(lam: float, r: float, rho: float, log_prefactor_value: float) -> float:
    """log P ≤ log prefactor + λ²/ρ − λr."""
    return log_prefactor_value + lam**2 / rho - lam * r


# -----------------------------------------------------------------------------
# Empirical tails
# -----------------------------------------------------------------------------
def reference_mean(model: EnergyModel, f: TestFunction, n_particles: int, dim: int, seed: int, n_samples: int = REFERENCE_SAMPLES) -> float:
    """E f(X_*) under the 1-marginal of the N-particle Gibbs measure.

    Affine f on the Gaussian model is evaluated at the centred marginal mean
    exactly; everything else is averaged over Gibbs samples and particles.
    """
    if isinstance(model, GaussianMeanField):
        if isinstance(f, PolynomialFunction) and f.degree <= 1:
            return float(f.value(np.zeros((1, 1, dim)))[0])
        method = GibbsMethod.EXACT_GAUSSIAN
    else:
        method = GibbsMethod.MALA
    samples = sample_gibbs(model, n_particles, dim, max(1, n_samples // n_particles), seed, method)
    return float(np.mean(f.value(samples.reshape(-1, 1, dim))))


def wilson_interval(exceed: int, n: int, confidence: float = TAIL_CONFIDENCE) -> tuple[float, float]:
    """Wilson score interval of a binomial proportion."""
    ci = stats.binomtest(exceed, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@abk_common.function_trace
def empirical_tail(
    model: EnergyModel,
    m0: InitialLaw,
    f: TestFunction,
    t: float,
    r_grid: Sequence[float],
    n_replicas: int,
    seed: int,
    *,
    n_particles: int,
    dim: int,
    dt: float = 0.01,
    scheme: Scheme | None = None,
    reference: float | None = None,
    threads: int = 1,
) -> list[TailEstimate]:
    """Simulate replicas to time t and count deviations of (1/N)Σᵢf(Xⁱ_t) − E f(X_*) ≥ r.

    Args:
        model: energy model
        m0: initial law
        f: 1-Lipschitz observable on R^d
        t: time, a multiple of dt
        r_grid: deviation levels (−inf counts every replica)
        n_replicas: at least 1000
        seed: root seed of the simulation
        n_particles: N
        dim: d
        dt: time step
        scheme: exact for the Gaussian model and Euler–Maruyama otherwise, by default
        reference: E f(X_*), computed by ``reference_mean`` when omitted
        threads: worker threads

    Returns:
        One estimate per deviation level
    """
    if n_replicas < MIN_REPLICAS:
        raise DomainError(f"empirical tails need at least {MIN_REPLICAS} replicas, got {n_replicas}")
    n_steps = round(t / dt)
    if not math.isclose(n_steps * dt, t, rel_tol=1e-9):
        raise DomainError(f"t = {t} is not a multiple of dt = {dt}")
    if scheme is None:
        scheme = Scheme.EXACT_GAUSSIAN if isinstance(model, GaussianMeanField) else Scheme.EULER_MARUYAMA
    cfg = SimConfig(dt=dt, n_steps=n_steps, seed=seed, n_replicas=n_replicas, scheme=scheme, threads=threads)
    final = simulate(model, m0, cfg, n_particles=n_particles, dim=dim).final.replicas
    particles = final.reshape(-1, 1, dim)
    slope = float(np.max(np.sqrt(np.sum(f.gradient(particles) ** 2, axis=(1, 2)))))
    if slope > 1 + LIPSCHITZ_SLACK:
        raise DomainError(f"observable {f.name} has gradient norm {slope:.6g} > 1 on the sampled particles")
    if reference is None:
        reference = reference_mean(model, f, n_particles, dim, seed)
    deviation = f.value(particles).reshape(n_replicas, -1).mean(axis=1) - reference
    estimates = []
    for r in r_grid:
        exceed = int(np.count_nonzero(deviation >= r))
        estimates.append(TailEstimate(t=t, r=float(r), exceed=exceed, n_replicas=n_replicas, ci99=wilson_interval(exceed, n_replicas)))
    return estimates


def compare_tail(estimate: TailEstimate, bound: float) -> TailComparison:
    """Pair an empirical tail with its envelope."""
    comparison = TailComparison(t=estimate.t, r=estimate.r, empirical=estimate.fraction, empirical_ci99=estimate.ci99, bound=bound)
    if not comparison.dominated:
        logger.warning(f"bound {bound:.4g} below empirical CI {estimate.ci99} at t={estimate.t}, r={estimate.r}")
    return comparison
