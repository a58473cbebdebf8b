"""Mean field Langevin laboratory.

Numerical checks of uniform-in-N log-Sobolev inequalities for the
N-particle Gibbs measures of flat-convex mean field energies, and of the
concentration bounds they imply along the particle dynamics.

Features:
- Constants pipeline: defective LSI, Poincaré and tightened LSI constants
- Energy models with analytic drifts and Hessians (Gaussian, RBF interaction)
- Reproducible particle simulation on counter-based Philox streams
- Monte Carlo checks of Γ₂, Poincaré and defective LSI inequalities
- Positive-type certification of interaction kernels
- Concentration envelopes against empirical tails
- Closed-form Gaussian oracle for every quantity above

Example:
    Basic usage::

        from mflsi import ConstantsInput, report

        r = report(ConstantsInput(dim=1, n_particles=100, epsilon=0.5, m_mm=0.5, rho=1.0))
        print(r.rho_lsi_pipeline)
"""

from mflsi.config import ExperimentConfig, load_config
from mflsi.constants import lsi_constant_pipeline, lsi_constant_theorem, report
from mflsi.energy import EnergyModelFactory, GaussianMeanField, RbfInteraction
from mflsi.errors import ExitStatus, MflsiError
from mflsi.experiment_coordinator import ExperimentCoordinator
from mflsi.models import ConstantsInput, ParticleConfiguration, ValidationResult


__version__ = "0.1.0"


def main() -> None:
    """Main entry point for the CLI interface."""
    from mflsi.cli import main as cli_main

    cli_main()


__all__ = [
    "ConstantsInput",
    "EnergyModelFactory",
    "ExitStatus",
    "ExperimentConfig",
    "ExperimentCoordinator",
    "GaussianMeanField",
    "MflsiError",
    "ParticleConfiguration",
    "RbfInteraction",
    "ValidationResult",
    "__version__",
    "load_config",
    "lsi_constant_pipeline",
    "lsi_constant_theorem",
    "main",
    "report",
]
