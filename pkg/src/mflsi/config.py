"""Experiment configuration: one flat JSON file, strict keys, CLI overrides.

Precedence is built-in defaults < config file < command-line flags.
Environment variables are never consulted.
"""

# Standard lib imports
import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

# Local imports
from mflsi.errors import ConfigError


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
EXPERIMENTS = (
    "constants",
    "simulate",
    "check-gamma2",
    "check-poincare",
    "check-dlsi",
    "estimate-gap",
    "fit-decay",
    "check-kernel",
    "concentration",
    "full-suite",
)
OUTPUT_FORMATS = ("csv", "csv.gz")
INITIAL_KINDS = ("point", "gaussian", "gibbs")
DICTIONARIES = ("default", "coordinates", "bounded")
CONCENTRATION_MODES = ("particle", "single")

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelSection:
    """Energy model by factory name and constructor parameters."""

    name: str = "gaussian_mean_field"
    params: dict[str, Any] = field(default_factory=lambda: {"a": 1.0, "lam": 0.5})


@dataclass(frozen=True)
class ConstantsSection:
    """Grid of the constants sweep; m_mm and rho default to the model's bounds."""

    dims: list[int] = field(default_factory=lambda: [1, 2])
    n_particles: list[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0, 10000.0])
    epsilons: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    m_mm: float | None = None
    rho: float | None = None


@dataclass(frozen=True)
class SimulationSection:
    """Particle simulation settings.

    ``initial_mean`` places every particle (point) or is the particle mean
    (gaussian); ``initial_var`` is the isotropic particle variance.
    """

    n_particles: int = 64
    dim: int = 1
    dt: float = 0.01
    n_steps: int = 100
    n_replicas: int = 16
    scheme: str = "euler_maruyama"
    snapshot_every: int = 10
    block_size: int = 256
    initial: str = "point"
    initial_mean: float = 0.0
    initial_var: float = 1.0


@dataclass(frozen=True)
class EstimatorsSection:
    """Sample-based checks, gap estimation and entropy fits."""

    n_particles: int = 64
    dim: int = 1
    n_samples: int = 1_000_000
    method: str = "exact_gaussian"
    block_size: int = 4096
    burn_in: int = 500
    dictionary: str = "default"
    n_coordinates: int = 8
    n_quadratic: int = 4
    epsilon: float = 0.5
    rho2: float | None = None
    times: list[float] = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    shift: float = 1.0


@dataclass(frozen=True)
class ConcentrationSection:
    """Concentration envelopes against empirical tails."""

    mode: str = "particle"
    n_particles: int = 128
    dim: int = 1
    t_grid: list[float] = field(default_factory=lambda: [1.0, 2.0, 5.0])
    r_grid: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])
    n_replicas: int = 10_000
    dt: float = 0.01
    observable: str = "coordinate"
    epsilon: float = 0.5
    formula: str = "pipeline"


@dataclass(frozen=True)
class KernelSection:
    """Positive-type certification of an interaction kernel."""

    name: str = "rbf"
    params: dict[str, Any] = field(default_factory=dict)
    n_trials: int = 1000
    atoms_per_trial: int = 6
    dim: int = 1
    spread: float = 2.0
    tolerance: float = 1e-9
    hs: list[float] = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])


@dataclass(frozen=True)
class OutputSection:
    """Report directory and file format."""

    path: str = "results"
    format: str = "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment configuration."""

    experiment: str = "full-suite"
    seed: int = 0
    threads: int = 1
    model: ModelSection = field(default_factory=ModelSection)
    constants: ConstantsSection = field(default_factory=ConstantsSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    estimators: EstimatorsSection = field(default_factory=EstimatorsSection)
    concentration: ConcentrationSection = field(default_factory=ConcentrationSection)
    kernel: KernelSection = field(default_factory=KernelSection)
    output: OutputSection = field(default_factory=OutputSection)

    def __post_init__(self):
        """Validate choices that the sections cannot check on their own."""
        _choice("experiment", self.experiment, EXPERIMENTS)
        _choice("output.format", self.output.format, OUTPUT_FORMATS)
        _choice("simulation.initial", self.simulation.initial, INITIAL_KINDS)
        _choice("estimators.dictionary", self.estimators.dictionary, DICTIONARIES)
        _choice("concentration.mode", self.concentration.mode, CONCENTRATION_MODES)
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    def as_dict(self) -> dict[str, Any]:
        """Plain nested dictionary of every resolved value."""
        return dataclasses.asdict(self)

    def as_json(self) -> str:
        """Canonical JSON: sorted keys, no whitespace."""
        return json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))

    def result_json(self) -> str:
        """Canonical JSON of the keys that determine results.

        ``threads`` and ``output`` only decide how and where a run is written,
        so they are left out and reports stay byte-identical across both.
        """
        data = self.as_dict()
        del data["threads"], data["output"]
        return json.dumps(data, sort_keys=True, separators=(",", ":"))

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Apply command-line overrides; ``None`` values are ignored.

        Recognized keys are experiment, seed, threads, out and format.
        """
        top = {key: overrides[key] for key in ("experiment", "seed", "threads") if overrides.get(key) is not None}
        output = {key: overrides[flag] for key, flag in (("path", "out"), ("format", "format")) if overrides.get(flag) is not None}
        unknown = set(overrides) - {"experiment", "seed", "threads", "out", "format"}
        if unknown:
            raise ConfigError(f"unknown override(s): {', '.join(sorted(unknown))}")
        if output:
            top["output"] = dataclasses.replace(self.output, **output)
        return dataclasses.replace(self, **top)


def _choice(key: str, value: str, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise ConfigError(f"{key} must be one of {', '.join(allowed)}, got {value!r}")


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _coerce(key: str, value: Any, annotation: Any) -> Any:
    """Check JSON scalars against the annotated field type."""
    if annotation is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if annotation in (float, float | None) and _is_number(value):
        return float(value)
    if annotation == float | None and value is None:
        return None
    if annotation is str and isinstance(value, str):
        return value
    if annotation == list[int] and isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return value
    if annotation == list[float] and isinstance(value, list) and all(_is_number(v) for v in value):
        return [float(v) for v in value]
    if annotation == dict[str, Any] and isinstance(value, dict):
        return value
    raise ConfigError(f"{key}: value {value!r} does not match the expected type {annotation}")


def _build(cls: type, data: Any, prefix: str) -> Any:
    """Construct a section dataclass, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {prefix or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        annotation = fields[name].type
        if dataclasses.is_dataclass(annotation):
            kwargs[name] = _build(annotation, value, key)
        else:
            kwargs[name] = _coerce(key, value, annotation)
    return cls(**kwargs)


def parse_config(data: dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig from a decoded JSON object.

    Raises:
        ConfigError: unknown keys, wrong types or invalid choices
    """
    return _build(ExperimentConfig, data, "")


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read the configuration file, or return the defaults when ``path`` is None.

    Raises:
        ConfigError: unreadable file, malformed JSON or invalid contents
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON in {path}: {e}") from e
    logger.info(f"Loaded configuration from {path}")
    return parse_config(data)
