"""Simulation of the N-particle Langevin system and sampling of its Gibbs measure.

Replicas are stored as one array of shape (R, N, d) and processed in fixed
blocks of ``SimConfig.block_size`` replicas. Every block draws its noise from
its own counter-based Philox stream keyed by (stream, block, step), so the
output is bit-for-bit identical for any number of worker threads.
"""

# Standard lib imports
import logging
import math
from abc import ABCMeta, abstractmethod
from collections.abc import Callable, Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

# Third party imports
import numpy as np

# Local imports
from mflsi import abk_common
from mflsi.energy import EnergyModel, GaussianMeanField, batch_drift, batch_potential
from mflsi.errors import DomainError, MalaTuningError, SimulationDivergenceError
from mflsi.gaussian_oracle import GaussianMeasure, gibbs_gaussian
from mflsi.models import EnsembleState, GibbsMethod, Scheme, SimConfig


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
SIMULATION_STREAM = 0
GIBBS_STREAM = 1
MALA_TARGET_ACCEPTANCE = 0.55
MALA_ACCEPTANCE_WINDOW = (0.1, 0.9)
MALA_DEFAULT_BURN_IN = 500
MALA_CHECK_STEPS = 50

Control = Callable[[float, np.ndarray], np.ndarray]

logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# Noise sources
# -----------------------------------------------------------------------------
class NoiseSource(metaclass=ABCMeta):
    """Standard Gaussian increments indexed by (block, step).

    Step 0 is reserved for initial sampling; time step k draws with key k + 1.
    """

    @abstractmethod
    def generator(self, block: int, step: int) -> np.random.Generator:
        """Generator of the (block, step) substream."""
        raise NotImplementedError

    def normals(self, block: int, step: int, shape: tuple[int, ...]) -> np.ndarray:
        """Standard normal draws of the given shape."""
        return self.generator(block, step).standard_normal(shape)


class PhiloxNoise(NoiseSource):
    """Counter-based Philox substreams spawned from one root seed.

    Args:
        seed: root seed, a 64-bit unsigned integer
        stream: namespace separating simulation noise from sampler noise
    """

    def __init__(self, seed: int, stream: int = SIMULATION_STREAM):
        """Initialize the noise source."""
        self.seed = int(seed)
        self.stream = int(stream)

    def generator(self, block: int, step: int) -> np.random.Generator:
        """Fresh generator for the substream (stream, block, step)."""
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream, block, step))
        return np.random.Generator(np.random.Philox(sequence))


class ZeroNoise(NoiseSource):
    """Suppresses the diffusion: every increment is zero."""

    def generator(self, block: int, step: int) -> np.random.Generator:
        """Seeded generator, only used for non-Gaussian draws."""
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(0, spawn_key=(block, step))))

    def normals(self, block: int, step: int, shape: tuple[int, ...]) -> np.ndarray:
        """Zeros."""
        return np.zeros(shape)


class PermutedNoise(NoiseSource):
    """Reorders the particle axis of another source's increments.

    Particle i receives the increment that particle ``permutation[i]`` would
    have received from ``base``.
    """

    def __init__(self, base: NoiseSource, permutation: np.ndarray):
        """Initialize with the wrapped source and the particle permutation."""
        self.base = base
        self.permutation = np.asarray(permutation)

    def generator(self, block: int, step: int) -> np.random.Generator:
        """Generator of the wrapped source."""
        return self.base.generator(block, step)

    def normals(self, block: int, step: int, shape: tuple[int, ...]) -> np.ndarray:
        """Permuted increments of the wrapped source."""
        return self.base.normals(block, step, shape)[:, self.permutation]


# -----------------------------------------------------------------------------
# Initial laws
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class InitialLaw:
    """Law m₀ of the initial configuration.

    Use the constructors ``point``, ``gaussian`` and ``gibbs``.

    Attributes:
        kind: "point", "gaussian" or "gibbs"
        points: configuration of shape (N, d) for a point mass
        mean: particle mean of shape (d,) for the Gaussian product law
        cov: particle covariance of shape (d, d) for the Gaussian product law
        method: sampling method for the Gibbs law
    """

    kind: str
    points: np.ndarray | None = None
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    method: GibbsMethod = GibbsMethod.EXACT_GAUSSIAN

    @classmethod
    def point(cls, points) -> "InitialLaw":
        """Point mass at one configuration."""
        points = np.asarray(points, dtype=float)
        return cls(kind="point", points=points if points.ndim == 2 else points[:, None])

    @classmethod
    def gaussian(cls, mean, cov) -> "InitialLaw":
        """Independent particles with law N(mean, cov) on R^d."""
        return cls(kind="gaussian", mean=np.atleast_1d(np.asarray(mean, dtype=float)), cov=np.atleast_2d(np.asarray(cov, dtype=float)))

    @classmethod
    def gibbs(cls, method: GibbsMethod = GibbsMethod.EXACT_GAUSSIAN) -> "InitialLaw":
        """The N-particle Gibbs measure itself."""
        return cls(kind="gibbs", method=method)

    def as_gaussian(self, model: EnergyModel, n_particles: int, dim: int) -> GaussianMeasure:
        """The law on R^{Nd} as a GaussianMeasure (point masses have zero covariance)."""
        if self.kind == "point":
            return GaussianMeasure.point(self.points.reshape(-1))
        if self.kind == "gaussian":
            return GaussianMeasure.product(self.mean, self.cov, n_particles)
        if not isinstance(model, GaussianMeanField):
            raise DomainError("the Gibbs measure is Gaussian only for GaussianMeanField models")
        return gibbs_gaussian(model.a, model.lam, n_particles, dim)

    def sample(self, model: EnergyModel, n_replicas: int, n_particles: int, dim: int, noise: NoiseSource, block_size: int) -> np.ndarray:
        """Draw R initial configurations, shape (R, N, d), block by block."""
        if self.kind == "point":
            if self.points.shape != (n_particles, dim):
                raise DomainError(f"initial points of shape {self.points.shape} do not match N={n_particles}, d={dim}")
            return np.broadcast_to(self.points, (n_replicas, n_particles, dim)).copy()
        if self.kind == "gibbs":
            seed = noise.seed if isinstance(noise, PhiloxNoise) else 0
            return sample_gibbs(model, n_particles, dim, n_replicas, seed, self.method, block_size=block_size)
        w, v = np.linalg.eigh(self.cov)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        blocks = []
        for block, start in enumerate(range(0, n_replicas, block_size)):
            size = min(block_size, n_replicas - start)
            blocks.append(self.mean + noise.normals(block, 0, (size, n_particles, dim)) @ root.T)
        return np.concatenate(blocks)


# -----------------------------------------------------------------------------
# Trajectories
# -----------------------------------------------------------------------------
@dataclass
class Snapshot:
    """Replica states at one recorded time.

    Attributes:
        time: snapshot time
        step: number of steps taken
        replicas: array of shape (R, N, d); diverged replicas are NaN
    """

    time: float
    step: int
    replicas: np.ndarray

    def finite_replicas(self) -> np.ndarray:
        """Replicas with finite coordinates."""
        keep = np.all(np.isfinite(self.replicas), axis=(1, 2))
        return self.replicas[keep]

    def ensemble_mean(self) -> np.ndarray:
        """Mean of the flattened configurations over finite replicas, shape (N·d,)."""
        finite = self.finite_replicas()
        return finite.reshape(finite.shape[0], -1).mean(axis=0)

    def ensemble_cov(self) -> np.ndarray:
        """Covariance of the flattened configurations over finite replicas, shape (N·d, N·d)."""
        finite = self.finite_replicas()
        return np.atleast_2d(np.cov(finite.reshape(finite.shape[0], -1), rowvar=False))

    def observables(self, model: EnergyModel) -> dict[str, np.ndarray]:
        """Per-replica summaries: empirical mean per coordinate, second moment and U^N."""
        values = {f"mean_x{k}": self.replicas[:, :, k].mean(axis=1) for k in range(self.replicas.shape[2])}
        values["second_moment"] = np.mean(np.sum(self.replicas**2, axis=2), axis=1)
        with np.errstate(invalid="ignore", over="ignore"):
            values["potential"] = batch_potential(model, self.replicas)
        return values


@dataclass
class Trajectory:
    """Snapshots of a simulation together with its bookkeeping.

    Attributes:
        snapshots: recorded snapshots in time order
        diverged: replica index → time of divergence
        control_energy: per-replica ∫Σᵢ|αⁱ(s, Yₛ)|² ds accumulated along the run
    """

    snapshots: list[Snapshot] = field(default_factory=list)
    diverged: dict[int, float] = field(default_factory=dict)
    control_energy: np.ndarray | None = None

    @property
    def final(self) -> Snapshot:
        """Last snapshot."""
        return self.snapshots[-1]

    @property
    def times(self) -> list[float]:
        """Snapshot times."""
        return [snapshot.time for snapshot in self.snapshots]

    def records(self, model: EnergyModel) -> Iterator[tuple[float, int, str, float]]:
        """Rows (time, replica, observable, value) in a fixed order."""
        for snapshot in self.snapshots:
            for name, values in snapshot.observables(model).items():
                for replica, value in enumerate(values):
                    yield snapshot.time, replica, name, float(value)


# -----------------------------------------------------------------------------
# Particle simulator
# -----------------------------------------------------------------------------
class ParticleSimulator:
    """Integrates dXⁱ = (−D_mF(μ_X, Xⁱ) + αⁱ(t, X)) dt + √2 dBⁱ for all replicas.

    Args:
        model: energy model
        cfg: simulation settings
        control: optional control α(t, x) acting on batches of shape (B, N, d)
        noise: noise source, Philox streams from ``cfg.seed`` by default
    """

    def __init__(self, model: EnergyModel, cfg: SimConfig, control: Control | None = None, noise: NoiseSource | None = None):
        """Initialize the simulator."""
        if cfg.scheme is Scheme.EXACT_GAUSSIAN:
            if not isinstance(model, GaussianMeanField):
                raise DomainError("the exact_gaussian scheme needs a GaussianMeanField model")
            if control is not None:
                raise DomainError("the exact_gaussian scheme does not support a control")
        self.model = model
        self.cfg = cfg
        self.control = control
        self.noise = noise or PhiloxNoise(cfg.seed)
        self.logger = logging.getLogger(__name__)

    def _advance(self, x: np.ndarray, block: int, step: int) -> tuple[np.ndarray, np.ndarray]:
        """One step of a block; returns the new states and per-replica control energy."""
        dt = self.cfg.dt
        time = step * dt
        xi = self.noise.normals(block, step + 1, x.shape)
        spent = np.zeros(x.shape[0])
        with np.errstate(invalid="ignore", over="ignore"):
            if self.cfg.scheme is Scheme.EXACT_GAUSSIAN:
                a, lam = self.model.a, self.model.lam
                x_bar = x.mean(axis=1, keepdims=True)
                xi_bar = xi.mean(axis=1, keepdims=True)
                return (
                    math.exp(-a * dt) * (x - x_bar)
                    + math.exp(-(a + lam) * dt) * x_bar
                    + _ou_scale(a, dt) * (xi - xi_bar)
                    + _ou_scale(a + lam, dt) * xi_bar
                ), spent
            velocity = batch_drift(self.model, x)
            if self.control is not None:
                alpha = np.asarray(self.control(time, x), dtype=float)
                if alpha.shape != x.shape:
                    raise DomainError(f"control returned shape {alpha.shape}, expected {x.shape}")
                velocity = velocity + alpha
                spent = np.sum(alpha**2, axis=(1, 2)) * dt
            return x + velocity * dt + math.sqrt(2.0 * dt) * xi, spent

    def _run_block(self, block: int, x: np.ndarray, first_step: int, n_steps: int, record: set[int]):
        """Advance one block, recording states at the requested step counts."""
        x = x.copy()
        frozen = ~np.all(np.isfinite(x), axis=(1, 2))
        diverged: dict[int, float] = {}
        spent = np.zeros(x.shape[0])
        recorded = {first_step: x.copy()} if first_step in record else {}
        for step in range(first_step, first_step + n_steps):
            new, energy = self._advance(x, block, step)
            bad = ~np.all(np.isfinite(new), axis=(1, 2)) & ~frozen
            for row in np.flatnonzero(bad):
                diverged[block * self.cfg.block_size + int(row)] = (step + 1) * self.cfg.dt
            frozen |= bad
            new[frozen] = np.nan
            spent += np.where(frozen, 0.0, energy)
            x = new
            if step + 1 in record:
                recorded[step + 1] = x.copy()
        return x, recorded, diverged, spent

    def _blocks(self, replicas: np.ndarray) -> list[tuple[int, np.ndarray]]:
        size = self.cfg.block_size
        return [(block, replicas[start : start + size]) for block, start in enumerate(range(0, replicas.shape[0], size))]

    def _map_blocks(self, replicas: np.ndarray, first_step: int, n_steps: int, record: set[int]):
        jobs = self._blocks(replicas)
        if self.cfg.threads > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.threads) as executor:
                return list(executor.map(lambda job: self._run_block(job[0], job[1], first_step, n_steps, record), jobs))
        return [self._run_block(block, x, first_step, n_steps, record) for block, x in jobs]

    def step(self, state: EnsembleState) -> EnsembleState:
        """Advance every replica by one time step.

        Raises:
            SimulationDivergenceError: when a replica becomes non-finite; the
                partially advanced state is attached as ``trajectory``
        """
        first_step = round(state.time / self.cfg.dt)
        results = self._map_blocks(state.replicas, first_step, 1, set())
        replicas = np.concatenate([result[0] for result in results])
        diverged = dict(state.diverged)
        new = {index: time for result in results for index, time in result[2].items()}
        diverged.update(new)
        advanced = EnsembleState(replicas=replicas, time=state.time + self.cfg.dt, diverged=diverged)
        if new:
            raise SimulationDivergenceError(new, advanced)
        return advanced

    @abk_common.function_trace
    def run(self, initial: InitialLaw | np.ndarray, n_particles: int | None = None, dim: int | None = None) -> Trajectory:
        """Sample m₀ and integrate ``cfg.n_steps`` steps.

        Snapshots are taken at t = 0, every ``cfg.snapshot_every`` steps and at
        the final time.

        Args:
            initial: initial law, or explicit initial replicas of shape (R, N, d)
            n_particles: N, required for Gaussian and Gibbs initial laws
            dim: d, required for Gaussian and Gibbs initial laws

        Returns:
            The trajectory

        Raises:
            SimulationDivergenceError: after the run, when any replica diverged;
                the full trajectory is attached
        """
        cfg = self.cfg
        if isinstance(initial, InitialLaw):
            if initial.kind == "point":
                n_particles, dim = initial.points.shape
            elif n_particles is None or dim is None:
                raise DomainError("n_particles and dim are required for Gaussian and Gibbs initial laws")
            replicas = initial.sample(self.model, cfg.n_replicas, n_particles, dim, self.noise, cfg.block_size)
        else:
            replicas = np.array(initial, dtype=float)
            if replicas.ndim != 3 or replicas.shape[0] != cfg.n_replicas:
                raise DomainError(f"initial replicas must have shape ({cfg.n_replicas}, N, d), got {replicas.shape}")
        record = {0, cfg.n_steps}
        if cfg.snapshot_every:
            record.update(range(0, cfg.n_steps, cfg.snapshot_every))

        with abk_common.PerformanceTimer(f"simulate {cfg.n_replicas} replicas x {cfg.n_steps} steps", self.logger):
            results = self._map_blocks(replicas, 0, cfg.n_steps, record)

        trajectory = Trajectory(control_energy=np.concatenate([result[3] for result in results]))
        for step in sorted(record):
            states = np.concatenate([result[1][step] for result in results])
            trajectory.snapshots.append(Snapshot(time=step * cfg.dt, step=step, replicas=states))
        for result in results:
            trajectory.diverged.update(result[2])
        if trajectory.diverged:
            self.logger.warning(f"{len(trajectory.diverged)} replica(s) diverged")
            raise SimulationDivergenceError(trajectory.diverged, trajectory)
        return trajectory


def _ou_scale(rate: float, dt: float) -> float:
    """Standard deviation of ∫₀^dt e^{−rate(dt−s)}√2 dB."""
    return math.sqrt(-math.expm1(-2.0 * rate * dt) / rate) if rate else math.sqrt(2.0 * dt)


def step(
    model: EnergyModel, state: EnsembleState, cfg: SimConfig, control: Control | None = None, noise: NoiseSource | None = None
) -> EnsembleState:
    """Advance an ensemble by one step of the configured scheme."""
    return ParticleSimulator(model, cfg, control, noise).step(state)


def simulate(
    model: EnergyModel,
    m0: InitialLaw | np.ndarray,
    cfg: SimConfig,
    control: Control | None = None,
    noise: NoiseSource | None = None,
    *,
    n_particles: int | None = None,
    dim: int | None = None,
) -> Trajectory:
    """Simulate the particle system from m₀.

    Args:
        model: energy model
        m0: initial law or explicit replicas of shape (R, N, d)
        cfg: simulation settings
        control: optional control α(t, x) on batches of shape (B, N, d)
        noise: optional noise source (test hook), Philox streams by default
        n_particles: N, required unless m0 is a point mass or explicit replicas
        dim: d, required unless m0 is a point mass or explicit replicas

    Returns:
        The trajectory
    """
    return ParticleSimulator(model, cfg, control, noise).run(m0, n_particles, dim)


# -----------------------------------------------------------------------------
# Gibbs sampling
# -----------------------------------------------------------------------------
class GibbsSampleStream:
    """Blocks of samples from the N-particle Gibbs measure exp(−U^N).

    ``exact_gaussian`` transforms standard normals through the spectral
    structure of the Gaussian model. ``mala`` runs one Metropolis-adjusted
    Langevin chain per sample from N(0, I/ρ̂); during burn-in the common step
    size of a block is adapted (Robbins–Monro on its logarithm) toward 0.55
    acceptance, then frozen for ``MALA_CHECK_STEPS`` measured steps.

    Args:
        model: energy model
        n_particles: N
        dim: d
        n_samples: total number of samples
        seed: root seed
        method: sampling method
        block_size: samples per block
        burn_in: MALA steps before the acceptance check
        step_size: initial MALA step size
    """

    def __init__(
        self,
        model: EnergyModel,
        n_particles: int,
        dim: int,
        n_samples: int,
        seed: int,
        method: GibbsMethod = GibbsMethod.EXACT_GAUSSIAN,
        block_size: int = 4096,
        burn_in: int = MALA_DEFAULT_BURN_IN,
        step_size: float = 0.1,
    ):
        """Initialize the stream."""
        if method is GibbsMethod.EXACT_GAUSSIAN and not isinstance(model, GaussianMeanField):
            raise DomainError("exact_gaussian sampling needs a GaussianMeanField model")
        if n_particles < 1 or dim < 1 or n_samples < 0 or block_size < 1:
            raise DomainError("n_particles, dim, block_size >= 1 and n_samples >= 0 are required")
        self.model = model
        self.n_particles = n_particles
        self.dim = dim
        self.n_samples = n_samples
        self.method = method
        self.block_size = block_size
        self.burn_in = burn_in
        self.step_size = step_size
        self.noise = PhiloxNoise(seed, stream=GIBBS_STREAM)
        self.acceptance: list[float] = []
        self.logger = logging.getLogger(__name__)

    def __iter__(self) -> Iterator[np.ndarray]:
        """Yield blocks of shape (B, N, d) until n_samples are produced."""
        for block, start in enumerate(range(0, self.n_samples, self.block_size)):
            size = min(self.block_size, self.n_samples - start)
            if self.method is GibbsMethod.EXACT_GAUSSIAN:
                yield self._exact_block(block, size)
            else:
                yield self._mala_block(block, size)

    def _exact_block(self, block: int, size: int) -> np.ndarray:
        a, lam = self.model.a, self.model.lam
        z = self.noise.normals(block, 0, (size, self.n_particles, self.dim))
        z_bar = z.mean(axis=1, keepdims=True)
        return (z - z_bar) / math.sqrt(a) + z_bar / math.sqrt(a + lam)

    def _mala_block(self, block: int, size: int) -> np.ndarray:
        shape = (size, self.n_particles, self.dim)
        x = self.noise.normals(block, 0, shape) / math.sqrt(self.model.bounds.rho_hat)
        u_x = batch_potential(self.model, x)
        g_x = -batch_drift(self.model, x)
        log_h = math.log(self.step_size)
        accepted = 0.0
        for it in range(self.burn_in + MALA_CHECK_STEPS):
            h = math.exp(log_h)
            gen = self.noise.generator(block, it + 1)
            y = x - h * g_x + math.sqrt(2.0 * h) * gen.standard_normal(shape)
            with np.errstate(invalid="ignore", over="ignore"):
                u_y = batch_potential(self.model, y)
                g_y = -batch_drift(self.model, y)
                forward = np.sum((y - x + h * g_x) ** 2, axis=(1, 2)) / (4.0 * h)
                backward = np.sum((x - y + h * g_y) ** 2, axis=(1, 2)) / (4.0 * h)
                log_ratio = u_x - u_y + forward - backward
            accept = np.log(gen.uniform(size=size)) < np.nan_to_num(log_ratio, nan=-np.inf)
            x = np.where(accept[:, None, None], y, x)
            u_x = np.where(accept, u_y, u_x)
            g_x = np.where(accept[:, None, None], g_y, g_x)
            rate = float(accept.mean())
            if it < self.burn_in:
                log_h += (rate - MALA_TARGET_ACCEPTANCE) / (it + 1) ** 0.6
            else:
                accepted += rate
        acceptance = accepted / MALA_CHECK_STEPS
        self.acceptance.append(acceptance)
        self.logger.debug(f"MALA block {block}: step size {math.exp(log_h):.4g}, acceptance {acceptance:.3f}")
        low, high = MALA_ACCEPTANCE_WINDOW
        if not low <= acceptance <= high:
            raise MalaTuningError(acceptance, math.exp(log_h))
        return x


@abk_common.function_trace
def sample_gibbs(
    model: EnergyModel,
    n_particles: int,
    dim: int,
    n_samples: int,
    seed: int,
    method: GibbsMethod = GibbsMethod.EXACT_GAUSSIAN,
    *,
    block_size: int = 4096,
    burn_in: int = MALA_DEFAULT_BURN_IN,
) -> np.ndarray:
    """Draw samples of the N-particle Gibbs measure, shape (n_samples, N, d)."""
    stream = GibbsSampleStream(model, n_particles, dim, n_samples, seed, method, block_size=block_size, burn_in=burn_in)
    blocks = list(stream)
    if not blocks:
        return np.empty((0, n_particles, dim))
    return np.concatenate(blocks)
