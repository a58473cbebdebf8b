"""Data models for the mean field laboratory.

Defines particle configurations, model bounds, constants inputs and reports,
simulation settings and the verdict records produced by the checks.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from mflsi.errors import DomainError, ExitStatus


class Scheme(Enum):
    """Time integration scheme for the particle SDE."""

    EULER_MARUYAMA = "euler_maruyama"
    EXACT_GAUSSIAN = "exact_gaussian"


class GibbsMethod(Enum):
    """Sampling method for the N-particle Gibbs measure."""

    EXACT_GAUSSIAN = "exact_gaussian"
    MALA = "mala"


class LsiFormula(Enum):
    """Which closed form of the N-particle log-Sobolev constant to use."""

    PIPELINE = "pipeline"
    THEOREM = "theorem"


@dataclass(frozen=True)
class ParticleConfiguration:
    """A point of R^{Nd} together with its empirical measure.

    The empirical measure puts weight exactly 1/N on every row of ``points``.

    Attributes:
        points: array of shape (N, d) with finite entries
    """

    points: np.ndarray

    def __post_init__(self):
        """Validate shape and finiteness, then freeze the array."""
        points = np.array(self.points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise DomainError(f"points must have shape (N, d) with N, d >= 1, got {points.shape}")
        if not np.all(np.isfinite(points)):
            raise DomainError("points must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def from_flat(cls, flat: np.ndarray, dim: int) -> "ParticleConfiguration":
        """Build a configuration from a flat vector of length N*d."""
        flat = np.asarray(flat, dtype=float)
        if dim < 1 or flat.size % dim:
            raise DomainError(f"flat vector of length {flat.size} is not a multiple of d={dim}")
        return cls(flat.reshape(-1, dim))

    @property
    def n_particles(self) -> int:
        """Number of particles N."""
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        """Dimension d of each particle."""
        return self.points.shape[1]

    @property
    def flat(self) -> np.ndarray:
        """The configuration as a vector of length N*d (particle-major)."""
        return self.points.reshape(-1)

    @property
    def weights(self) -> np.ndarray:
        """Weights of the empirical measure, all equal to 1/N."""
        return np.full(self.n_particles, 1.0 / self.n_particles)

    def permuted(self, permutation) -> "ParticleConfiguration":
        """Return the configuration with particles reordered."""
        return ParticleConfiguration(self.points[np.asarray(permutation)])


@dataclass(frozen=True)
class EnergyBounds:
    """Regularity bounds of a mean field energy.

    Attributes:
        m_mm: bound on the operator norm of D_m²F
        m_mx: bound on the operator norm of ∇ₓD_mF
        rho_hat: uniform LSI constant of the hat measures (and Poincaré constant of the conditionals)
    """

    m_mm: float
    m_mx: float
    rho_hat: float

    def __post_init__(self):
        """Validate signs."""
        if not (self.m_mm >= 0 and self.m_mx >= 0):
            raise DomainError(f"m_mm and m_mx must be nonnegative, got {self.m_mm}, {self.m_mx}")
        if not self.rho_hat > 0:
            raise DomainError(f"rho_hat must be positive, got {self.rho_hat}")

    @property
    def alpha(self) -> float:
        """Interaction ratio m_mm / rho_hat."""
        return self.m_mm / self.rho_hat


@dataclass(frozen=True)
class ConstantsInput:
    """Inputs of the log-Sobolev constant pipeline.

    Attributes:
        dim: particle dimension d
        n_particles: number of particles N (``math.inf`` for the mean field limit)
        epsilon: free parameter in (0, 1)
        m_mm: bound on D_m²F
        rho: uniform LSI constant of the hat measures
    """

    dim: int
    n_particles: float
    epsilon: float
    m_mm: float
    rho: float

    def __post_init__(self):
        """Validate the parameter domain."""
        if self.dim < 1:
            raise DomainError(f"dim must be >= 1, got {self.dim}")
        if not self.n_particles >= 1:
            raise DomainError(f"n_particles must be >= 1, got {self.n_particles}")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.m_mm >= 0:
            raise DomainError(f"m_mm must be nonnegative, got {self.m_mm}")
        if not self.rho > 0:
            raise DomainError(f"rho must be positive, got {self.rho}")

    @property
    def alpha(self) -> float:
        """Interaction ratio α = m_mm / ρ."""
        return self.m_mm / self.rho

    @property
    def above_threshold(self) -> bool:
        """Whether N > α, the hypothesis of the N-particle LSI."""
        return self.n_particles > self.alpha

    def with_epsilon(self, epsilon: float) -> "ConstantsInput":
        """Copy with another ε."""
        return ConstantsInput(self.dim, self.n_particles, epsilon, self.m_mm, self.rho)

    def scaled(self, factor: float) -> "ConstantsInput":
        """Copy with (ρ, m_mm) multiplied by the same positive factor."""
        return ConstantsInput(self.dim, self.n_particles, self.epsilon, self.m_mm * factor, self.rho * factor)


@dataclass
class ConstantsReport:
    """Every derived constant of the log-Sobolev pipeline for one input.

    Invalid-regime values are kept as computed (or NaN when undefined) and flagged.

    Attributes:
        inputs: the evaluated input
        alpha: m_mm / ρ
        rho_prime: defective LSI constant ρ′
        delta: defect δ
        rho_poincare: uniform Poincaré constant ρ − m_mm/N
        rho_lsi_pipeline: tightened constant (canonical ρ^N)
        rho_lsi_theorem: closed form of the main theorem
        rho_lsi_standard: classical Rothaus-based tightening
        rho_limit_remark: published N → ∞ limit of the closed form
        rho_limit_pipeline: N → ∞ limit of the pipeline
        epsilon_star: maximizing ε of the pipeline
        rho_lsi_optimized: pipeline value at epsilon_star
        valid: whether all pipeline constants are positive
        reason: why the report is invalid (empty when valid)
    """

    inputs: ConstantsInput
    alpha: float
    rho_prime: float
    delta: float
    rho_poincare: float
    rho_lsi_pipeline: float
    rho_lsi_theorem: float
    rho_lsi_standard: float
    rho_limit_remark: float
    rho_limit_pipeline: float
    epsilon_star: float
    rho_lsi_optimized: float
    valid: bool
    reason: str = ""

    def rho_lsi(self, formula: LsiFormula = LsiFormula.PIPELINE) -> float:
        """Return ρ^N in the requested form."""
        return self.rho_lsi_pipeline if formula is LsiFormula.PIPELINE else self.rho_lsi_theorem

    def as_row(self) -> dict[str, object]:
        """Flatten into a CSV row."""
        return {
            "dim": self.inputs.dim,
            "n_particles": self.inputs.n_particles,
            "epsilon": self.inputs.epsilon,
            "m_mm": self.inputs.m_mm,
            "rho": self.inputs.rho,
            "alpha": self.alpha,
            "rho_prime": self.rho_prime,
            "delta": self.delta,
            "rho_poincare": self.rho_poincare,
            "rho_lsi_pipeline": self.rho_lsi_pipeline,
            "rho_lsi_theorem": self.rho_lsi_theorem,
            "rho_lsi_standard": self.rho_lsi_standard,
            "rho_limit_remark": self.rho_limit_remark,
            "rho_limit_pipeline": self.rho_limit_pipeline,
            "epsilon_star": self.epsilon_star,
            "rho_lsi_optimized": self.rho_lsi_optimized,
            "valid": self.valid,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class SimConfig:
    """Time stepping settings of a particle simulation.

    Attributes:
        dt: time step
        n_steps: number of steps
        seed: root seed of the noise streams
        n_replicas: number of independent replicas of the particle system
        scheme: integration scheme
        snapshot_every: record a snapshot every this many steps (0 → initial and final only)
        block_size: replicas per noise block; fixes the stream layout independently of threads
        threads: worker threads (never changes results)
    """

    dt: float
    n_steps: int
    seed: int = 0
    n_replicas: int = 1
    scheme: Scheme = Scheme.EULER_MARUYAMA
    snapshot_every: int = 0
    block_size: int = 256
    threads: int = 1

    def __post_init__(self):
        """Validate the settings."""
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0 or self.n_replicas < 1 or self.block_size < 1 or self.threads < 1:
            raise DomainError("n_steps >= 0, n_replicas >= 1, block_size >= 1 and threads >= 1 are required")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def final_time(self) -> float:
        """Time reached after all steps."""
        return self.n_steps * self.dt


@dataclass
class EnsembleState:
    """Replicas of the particle system at a common time.

    Attributes:
        replicas: array of shape (R, N, d)
        time: current time
        diverged: replica index → time at which it produced non-finite coordinates
    """

    replicas: np.ndarray
    time: float = 0.0
    diverged: dict[int, float] = field(default_factory=dict)

    @property
    def n_replicas(self) -> int:
        """Number of replicas R."""
        return self.replicas.shape[0]

    @property
    def n_particles(self) -> int:
        """Number of particles N."""
        return self.replicas.shape[1]

    @property
    def dim(self) -> int:
        """Particle dimension d."""
        return self.replicas.shape[2]

    def configuration(self, replica: int) -> ParticleConfiguration:
        """Return one replica as a ParticleConfiguration."""
        return ParticleConfiguration(self.replicas[replica])


@dataclass(frozen=True)
class InequalityVerdict:
    """Monte Carlo verdict on an inequality lhs ≤ rhs (or an equality).

    Attributes:
        name: label of the check
        lhs: estimated left-hand side
        rhs: estimated right-hand side
        lhs_stderr: standard error of lhs
        rhs_stderr: standard error of rhs
        combined_stderr: standard error of lhs − rhs from the shared samples
        margin_sigmas: (rhs − lhs) / combined_stderr
        holds: lhs ≤ rhs + 3·combined_stderr (|lhs − rhs| ≤ 3σ for equalities)
        inconclusive: combined stderr exceeds half the magnitude of the compared values
        n_samples: number of samples used
    """

    name: str
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    combined_stderr: float
    margin_sigmas: float
    holds: bool
    inconclusive: bool = False
    n_samples: int = 0

    def as_row(self) -> dict[str, object]:
        """Flatten into a CSV row."""
        return {
            "check": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "lhs_stderr": self.lhs_stderr,
            "rhs_stderr": self.rhs_stderr,
            "combined_stderr": self.combined_stderr,
            "margin_sigmas": self.margin_sigmas,
            "holds": self.holds,
            "inconclusive": self.inconclusive,
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class TailEstimate:
    """Fraction of replicas whose aggregated observable deviates by at least r.

    Attributes:
        t: time
        r: deviation level
        exceed: number of replicas with deviation ≥ r
        n_replicas: number of replicas
        ci99: Wilson 99% interval of the fraction
    """

    t: float
    r: float
    exceed: int
    n_replicas: int
    ci99: tuple[float, float]

    @property
    def fraction(self) -> float:
        """Empirical tail probability."""
        return self.exceed / self.n_replicas


@dataclass(frozen=True)
class TailComparison:
    """Empirical deviation tail against its theoretical envelope.

    Attributes:
        t: time
        r: deviation level
        empirical: fraction of replicas deviating by at least r
        empirical_ci99: Wilson 99% interval of ``empirical``
        bound: theoretical envelope (reported as-is, may exceed 1)
        dominated: bound ≥ upper CI end, or bound ≥ 1
        vacuous: bound ≥ 1
    """

    t: float
    r: float
    empirical: float
    empirical_ci99: tuple[float, float]
    bound: float
    dominated: bool = field(init=False)
    vacuous: bool = field(init=False)

    def __post_init__(self):
        """Derive the domination and vacuity flags."""
        object.__setattr__(self, "vacuous", bool(self.bound >= 1.0))
        object.__setattr__(self, "dominated", bool(self.bound >= self.empirical_ci99[1] or self.bound >= 1.0))

    def as_row(self) -> dict[str, object]:
        """Flatten into a CSV row."""
        return {
            "t": self.t,
            "r": self.r,
            "empirical": self.empirical,
            "ci_low": self.empirical_ci99[0],
            "ci_high": self.empirical_ci99[1],
            "bound": self.bound,
            "dominated": self.dominated,
            "vacuous": self.vacuous,
        }


@dataclass(frozen=True)
class GapEstimate:
    """Minimal Rayleigh quotient ∫|∇f|²/Var(f) over the span of a dictionary.

    Attributes:
        value: the estimated spectral gap (an upper bound on the Poincaré constant)
        stderr: delta-method standard error of ``value``
        coefficients: minimizing combination, normalized to unit variance
        condition: condition number of the estimated covariance Gram matrix
        n_samples: number of samples used
    """

    value: float
    stderr: float
    coefficients: np.ndarray
    condition: float
    n_samples: int

    def as_row(self) -> dict[str, object]:
        """Flatten into a CSV row."""
        return {
            "gap": self.value,
            "stderr": self.stderr,
            "condition": self.condition,
            "dictionary_size": len(self.coefficients),
            "n_samples": self.n_samples,
        }


@dataclass(frozen=True)
class PositivityReport:
    """Outcome of a randomized positive-type check of a kernel.

    Attributes:
        kernel: kernel name
        min_value: smallest ∬W dμ⊗² found over the trials
        argmin_atoms: atoms of the minimizing signed measure
        argmin_weights: weights of the minimizing signed measure, summing to 0
        n_trials: number of random signed measures tried
        tolerance: values above −tolerance count as round-off
        gram_min_eigenvalue: smallest eigenvalue of the centred Gram matrix on the argmin atoms
        symmetric: W(x, x′) = W(x′, x) on every sampled pair
        positive: min_value ≥ −tolerance
    """

    kernel: str
    min_value: float
    argmin_atoms: np.ndarray
    argmin_weights: np.ndarray
    n_trials: int
    tolerance: float
    gram_min_eigenvalue: float
    symmetric: bool
    positive: bool = field(init=False)

    def __post_init__(self):
        """Derive the verdict from the minimum."""
        object.__setattr__(self, "positive", bool(self.min_value >= -self.tolerance))

    def as_row(self) -> dict[str, object]:
        """Flatten into a CSV row."""
        return {
            "kernel": self.kernel,
            "min_value": self.min_value,
            "gram_min_eigenvalue": self.gram_min_eigenvalue,
            "n_trials": self.n_trials,
            "tolerance": self.tolerance,
            "symmetric": self.symmetric,
            "positive": self.positive,
        }


@dataclass
class ValidationResult:
    """Outcome of one experiment or suite check.

    Attributes:
        check_name: name of the check, also the report file name
        status: exit status the outcome maps to
        message: one-line summary
        rows: records written to the report
    """

    check_name: str
    status: ExitStatus
    message: str
    rows: list[dict[str, object]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        """Whether the check passed."""
        return self.status is ExitStatus.OK


STATUS_RANK = {ExitStatus.OK: 0, ExitStatus.INCONCLUSIVE: 1, ExitStatus.FAILED: 2}


def worst_status(statuses) -> ExitStatus:
    """Weakest outcome: a failure outranks an inconclusive verdict, which outranks a pass."""
    return max(statuses, key=lambda status: STATUS_RANK.get(status, len(STATUS_RANK)), default=ExitStatus.OK)


def verdict_status(verdicts) -> ExitStatus:
    """Exit status of a set of inequality verdicts."""
    statuses = []
    for verdict in verdicts:
        if verdict.inconclusive:
            statuses.append(ExitStatus.INCONCLUSIVE)
        elif not verdict.holds:
            statuses.append(ExitStatus.FAILED)
        else:
            statuses.append(ExitStatus.OK)
    return worst_status(statuses)
