"""Exception hierarchy for the mean field laboratory.

Library code raises these; the CLI maps each one to its exit status.
"""

from enum import IntEnum


class ExitStatus(IntEnum):
    """Process exit status of a CLI run."""

    OK = 0
    FAILED = 1
    CONFIG_ERROR = 2
    REGIME_ERROR = 3
    DIVERGENCE = 4
    INCONCLUSIVE = 5


class MflsiError(Exception):
    """Base class of all errors raised by mflsi."""

    exit_status = ExitStatus.FAILED


class ConfigError(MflsiError):
    """Experiment configuration could not be parsed or validated."""

    exit_status = ExitStatus.CONFIG_ERROR


class DomainError(MflsiError, ValueError):
    """An argument lies outside the domain of the requested formula."""

    exit_status = ExitStatus.CONFIG_ERROR


class RegimeError(MflsiError):
    """A derived constant is nonpositive, so no bound is available.

    Attributes:
        constant: name of the failing constant
        value: its value
    """

    exit_status = ExitStatus.REGIME_ERROR

    def __init__(self, constant: str, value: float, message: str | None = None):
        """Initialize with the failing constant."""
        self.constant = constant
        self.value = value
        super().__init__(message or f"invalid regime: {constant} = {value!r} is not positive")


class EvaluationError(MflsiError):
    """Energy evaluation produced a non-finite value.

    Attributes:
        point: the offending particle configuration (or index)
    """

    def __init__(self, message: str, point=None):
        """Initialize with the offending point."""
        self.point = point
        super().__init__(message)


class HessianAsymmetryError(MflsiError):
    """Assembled Hessian is not symmetric to round-off; the model is inconsistent."""

    def __init__(self, defect: float, tolerance: float):
        """Initialize with the measured relative defect."""
        self.defect = defect
        self.tolerance = tolerance
        super().__init__(f"Hessian asymmetry defect {defect:.3e} exceeds tolerance {tolerance:.1e}")


class SimulationDivergenceError(MflsiError):
    """One or more replicas produced non-finite coordinates.

    Attributes:
        diverged: mapping replica index → time of divergence
        trajectory: partial trajectory recorded before raising, if any
    """

    exit_status = ExitStatus.DIVERGENCE

    def __init__(self, diverged: dict[int, float], trajectory=None):
        """Initialize with the diverged replicas."""
        self.diverged = dict(diverged)
        self.trajectory = trajectory
        first = min(self.diverged, key=self.diverged.get)
        super().__init__(f"{len(self.diverged)} replica(s) diverged, first: replica {first} at t={self.diverged[first]:.6g}")


class MalaTuningError(MflsiError):
    """MALA acceptance rate stayed outside the admissible window after tuning."""

    def __init__(self, acceptance: float, step_size: float):
        """Initialize with the final acceptance and step size."""
        self.acceptance = acceptance
        self.step_size = step_size
        super().__init__(f"MALA acceptance {acceptance:.3f} outside [0.1, 0.9] (step size {step_size:.3e})")


class DictionaryError(MflsiError):
    """Test-function dictionary is unusable (too small or ill-conditioned)."""


class DivergentPrefactorError(MflsiError):
    """The Gaussian-moment prefactor integral of a concentration bound diverges."""

    exit_status = ExitStatus.DIVERGENCE
