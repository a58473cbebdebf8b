"""Explicit constants of the N-particle log-Sobolev pipeline.

The pipeline has three steps:

1. a defective LSI with constant ρ′ and defect δ,
2. a uniform Poincaré inequality with constant ρ − M_mm/N,
3. a tightening that merges both into a perfect LSI.

All functions are pure. ``n_particles`` may be ``math.inf``, in which case
every 1/N correction vanishes and the mean field limits come out exactly.
"""

# Standard lib imports
import logging
import math
from collections.abc import Callable, Iterable

# Third party imports
import numpy as np
from scipy import optimize

# Local imports
from mflsi import abk_common
from mflsi.errors import DomainError, RegimeError
from mflsi.models import ConstantsInput, ConstantsReport, LsiFormula


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
EPSILON_LOWER = 1e-8
EPSILON_UPPER = 1.0 - 1e-8
EPSILON_TOLERANCE = 1e-10
EPSILON_GRID_SIZE = 257

logger = logging.getLogger(__name__)


def _epsilon_factor(epsilon: float) -> float:
    """ε⁻¹ − 1, validated."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must lie in (0, 1), got {epsilon}")
    return 1.0 / epsilon - 1.0


def defective_constants(inputs: ConstantsInput) -> tuple[float, float]:
    """Defective LSI constant and defect.

    ρ′ = (1−ε)ρ − (M_mm/N)(8 + 6(ε⁻¹−1)M_mm/ρ)
    δ = 2d·M_mm·(5 + 3(ε⁻¹−1)M_mm/ρ)

    A nonpositive ρ′ is returned as computed and logged; callers decide
    whether the regime is usable.

    Args:
        inputs: pipeline inputs

    Returns:
        (rho_prime, delta)
    """
    factor = _epsilon_factor(inputs.epsilon)
    alpha = inputs.alpha
    rho_prime = (1.0 - inputs.epsilon) * inputs.rho - inputs.m_mm / inputs.n_particles * (8.0 + 6.0 * factor * alpha)
    delta = 2.0 * inputs.dim * inputs.m_mm * (5.0 + 3.0 * factor * alpha)
    if rho_prime <= 0:
        logger.info(f"defective constant rho_prime = {rho_prime:.6g} is not positive")
    return rho_prime, delta


def poincare_constant(rho: float, m_mm: float, n: float) -> float:
    """Uniform Poincaré constant ρ − M_mm/N (nonpositive values mean no bound)."""
    if not n >= 1:
        raise DomainError(f"n must be >= 1, got {n}")
    value = rho - m_mm / n
    if value <= 0:
        logger.info(f"Poincare constant {value:.6g} is not positive (N <= alpha)")
    return value


def _check_tightening_args(rho1: float, rho2: float, delta: float) -> None:
    if not (rho1 > 0 and rho2 > 0):
        raise DomainError(f"tightening needs positive constants, got rho1={rho1}, rho2={rho2}")
    if not delta >= 0:
        raise DomainError(f"defect must be nonnegative, got {delta}")


def tighten(rho1: float, rho2: float, delta: float) -> float:
    """Perfect LSI constant ρ₁ρ₂/(ρ₂ + δ/4) from a defective LSI and a Poincaré inequality."""
    _check_tightening_args(rho1, rho2, delta)
    return rho1 * rho2 / (rho2 + delta / 4.0)


def standard_tightening(rho1: float, rho2: float, delta: float) -> float:
    """Rothaus-based tightening (1/ρ₁ + (δ/(4ρ₁) + 1)/ρ₂)⁻¹, for comparison only."""
    _check_tightening_args(rho1, rho2, delta)
    return 1.0 / (1.0 / rho1 + (delta / (4.0 * rho1) + 1.0) / rho2)


def lsi_constant_pipeline(inputs: ConstantsInput) -> float:
    """Canonical ρ^N: tighten(ρ′, ρ − M_mm/N, δ).

    Raises:
        RegimeError: when ρ′ or the Poincaré constant is not positive
    """
    rho_prime, delta = defective_constants(inputs)
    rho_poincare = poincare_constant(inputs.rho, inputs.m_mm, inputs.n_particles)
    if rho_poincare <= 0:
        raise RegimeError("rho_poincare", rho_poincare)
    if rho_prime <= 0:
        raise RegimeError("rho_prime", rho_prime)
    return tighten(rho_prime, rho_poincare, delta)


def lsi_constant_theorem(inputs: ConstantsInput) -> float:
    """Closed form ρ[1 − ε − (8α + 6(ε⁻¹−1))α²/N] / [1 + 2d(5 + 3(ε⁻¹−1)α)α/(1 − α/N)].

    Raises:
        RegimeError: when N ≤ α or the value is not positive
    """
    factor = _epsilon_factor(inputs.epsilon)
    alpha = inputs.alpha
    if not inputs.above_threshold:
        raise RegimeError("n_particles", inputs.n_particles, f"N = {inputs.n_particles} does not exceed alpha = {alpha}")
    numerator = 1.0 - inputs.epsilon - (8.0 * alpha + 6.0 * factor) * alpha**2 / inputs.n_particles
    denominator = 1.0 + 2.0 * inputs.dim * (5.0 + 3.0 * factor * alpha) * alpha / (1.0 - alpha / inputs.n_particles)
    value = inputs.rho * numerator / denominator
    if value <= 0:
        raise RegimeError("rho_lsi_theorem", value)
    return value


def lsi_limit_remark(dim: int, rho: float, alpha: float, epsilon: float) -> float:
    """Published N → ∞ limit (1−ε)ρ / (1 + 2dα(5 + 3(ε⁻¹−1)α))."""
    factor = _epsilon_factor(epsilon)
    return (1.0 - epsilon) * rho / (1.0 + 2.0 * dim * alpha * (5.0 + 3.0 * factor * alpha))


def pipeline_limit(dim: int, rho: float, m_mm: float, epsilon: float) -> float:
    """N → ∞ limit of the pipeline, (1−ε)ρ / (1 + δ/(4ρ))."""
    return lsi_constant_pipeline(ConstantsInput(dim=dim, n_particles=math.inf, epsilon=epsilon, m_mm=m_mm, rho=rho))


def _formula(formula: LsiFormula) -> Callable[[ConstantsInput], float]:
    return lsi_constant_pipeline if formula is LsiFormula.PIPELINE else lsi_constant_theorem


@abk_common.function_trace
def optimize_epsilon(inputs: ConstantsInput, formula: LsiFormula = LsiFormula.PIPELINE) -> tuple[float, float]:
    """Maximize ρ^N over ε ∈ [1e−8, 1 − 1e−8].

    A coarse grid locates the best bracket, then a bounded scalar search
    refines it to 1e−10. The ε carried by ``inputs`` is ignored.

    Args:
        inputs: pipeline inputs
        formula: which closed form to maximize

    Returns:
        (epsilon_star, rho_star), rho_star never below the value at ε = 1/2

    Raises:
        RegimeError: when no ε gives a valid constant
    """
    evaluate = _formula(formula)

    def value(epsilon: float) -> float:
        try:
            return evaluate(inputs.with_epsilon(float(epsilon)))
        except RegimeError:
            return -math.inf

    grid = np.unique(
        np.concatenate(
            [
                np.linspace(EPSILON_LOWER, EPSILON_UPPER, EPSILON_GRID_SIZE),
                np.geomspace(EPSILON_LOWER, 1e-2, 33),
                1.0 - np.geomspace(1.0 - EPSILON_UPPER, 1e-2, 33),
            ]
        )
    )
    values = np.array([value(eps) for eps in grid])
    if not np.any(np.isfinite(values)):
        raise RegimeError(f"rho_lsi_{formula.value}", float(values.max()), f"no epsilon in (0, 1) gives a valid {formula.value} constant")

    best = int(np.argmax(values))
    candidates = [(float(values[best]), float(grid[best])), (value(0.5), 0.5)]
    lower = float(grid[max(best - 1, 0)])
    upper = float(grid[min(best + 1, grid.size - 1)])
    if upper > lower:
        result = optimize.minimize_scalar(
            lambda eps: -value(eps),
            bounds=(lower, upper),
            method="bounded",
            options={"xatol": EPSILON_TOLERANCE},
        )
        candidates.append((-float(result.fun), float(result.x)))
    rho_star, epsilon_star = max(candidates)
    logger.debug(f"optimize_epsilon({formula.value}): epsilon*={epsilon_star:.10g}, rho*={rho_star:.10g}")
    return epsilon_star, rho_star


def _or_nan(compute: Callable[[], float]) -> float:
    try:
        return compute()
    except (RegimeError, DomainError, ZeroDivisionError):
        return math.nan


@abk_common.function_trace
def report(inputs: ConstantsInput) -> ConstantsReport:
    """Evaluate every constant for one input without raising on invalid regimes.

    Values that exist but are nonpositive are kept as computed and the report
    is flagged invalid; values that are undefined are NaN.
    """
    rho_prime, delta = defective_constants(inputs)
    rho_poincare = poincare_constant(inputs.rho, inputs.m_mm, inputs.n_particles)
    reasons = []
    if not inputs.above_threshold:
        reasons.append(f"N={inputs.n_particles:g} <= alpha={inputs.alpha:g}")
    if rho_prime <= 0:
        reasons.append(f"rho_prime={rho_prime:.6g} <= 0")
    if rho_poincare <= 0:
        reasons.append(f"rho_poincare={rho_poincare:.6g} <= 0")

    def raw_pipeline() -> float:
        if rho_poincare + delta / 4.0 == 0:
            return math.nan
        return rho_prime * rho_poincare / (rho_poincare + delta / 4.0)

    try:
        epsilon_star, rho_optimized = optimize_epsilon(inputs, LsiFormula.PIPELINE)
    except RegimeError:
        epsilon_star, rho_optimized = math.nan, math.nan
    return ConstantsReport(
        inputs=inputs,
        alpha=inputs.alpha,
        rho_prime=rho_prime,
        delta=delta,
        rho_poincare=rho_poincare,
        rho_lsi_pipeline=lsi_constant_pipeline(inputs) if not reasons else raw_pipeline(),
        rho_lsi_theorem=_or_nan(lambda: lsi_constant_theorem(inputs)),
        rho_lsi_standard=_or_nan(lambda: standard_tightening(rho_prime, rho_poincare, delta)),
        rho_limit_remark=lsi_limit_remark(inputs.dim, inputs.rho, inputs.alpha, inputs.epsilon),
        rho_limit_pipeline=_or_nan(lambda: pipeline_limit(inputs.dim, inputs.rho, inputs.m_mm, inputs.epsilon)),
        epsilon_star=epsilon_star,
        rho_lsi_optimized=rho_optimized,
        valid=not reasons,
        reason="; ".join(reasons),
    )


def sweep(
    dims: Iterable[int], n_particles: Iterable[float], epsilons: Iterable[float], m_mm: float, rho: float
) -> list[ConstantsReport]:
    """One report per grid point, ordered by (N, ε, d)."""
    dims, epsilons = list(dims), list(epsilons)
    return [
        report(ConstantsInput(dim=dim, n_particles=n, epsilon=eps, m_mm=m_mm, rho=rho))
        for n in n_particles
        for eps in epsilons
        for dim in dims
    ]
