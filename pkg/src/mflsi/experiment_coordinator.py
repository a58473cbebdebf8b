"""Experiment coordinator.

Turns a resolved ExperimentConfig into calls of the library modules and
collects one ValidationResult (rows plus exit status) per report file.
"""

# Standard lib imports
import logging
import math
from enum import Enum

# Third party imports
import numpy as np

# Local imports
from mflsi import abk_common, concentration, constants, estimators, positivity
from mflsi.config import ExperimentConfig
from mflsi.dynamics import GibbsSampleStream, InitialLaw, PhiloxNoise, sample_gibbs, simulate
from mflsi.energy import EnergyModel, EnergyModelFactory, GaussianMeanField
from mflsi.errors import ConfigError, DivergentPrefactorError, DomainError, ExitStatus, RegimeError
from mflsi.gaussian_oracle import GaussianMeasure, exact_gap, gibbs_gaussian
from mflsi.models import ConstantsInput, GibbsMethod, LsiFormula, Scheme, SimConfig, ValidationResult, verdict_status, worst_status
from mflsi.observables import PolynomialFunction, RadialFunction, TestFunction, coordinate_dictionary, default_dictionary


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
MOMENT_SAMPLES = 20_000
CONVERGENCE_STEP = 1


def parse_enum(enum_class: type[Enum], value: str, key: str) -> Enum:
    """Look up an enum member by value, raising ConfigError for unknown values."""
    try:
        return enum_class(value)
    except ValueError:
        raise ConfigError(f"{key} must be one of {', '.join(m.value for m in enum_class)}, got {value!r}") from None


class ExperimentCoordinator:
    """Runs the experiments named in the configuration.

    Args:
        config: resolved experiment configuration
    """

    def __init__(self, config: ExperimentConfig):
        """Initialize the coordinator and build the energy model."""
        self.config = config
        self.model: EnergyModel = EnergyModelFactory.create_model(config.model.name, config.model.params)
        self.logger = logging.getLogger(__name__)
        self.handlers = {
            "constants": self.run_constants,
            "simulate": self.run_simulate,
            "check-gamma2": self.run_check_gamma2,
            "check-poincare": self.run_check_poincare,
            "check-dlsi": self.run_check_dlsi,
            "estimate-gap": self.run_estimate_gap,
            "fit-decay": self.run_fit_decay,
            "check-kernel": self.run_check_kernel,
            "concentration": self.run_concentration,
            "full-suite": self.run_full_suite,
        }

    def run(self, experiment: str | None = None) -> list[ValidationResult]:
        """Run one experiment, ``config.experiment`` by default."""
        name = experiment or self.config.experiment
        if name not in self.handlers:
            raise ConfigError(f"unknown experiment {name!r}")
        self.logger.info(f"Running {name} on {self.model.describe()}")
        with abk_common.PerformanceTimer(name, self.logger):
            return self.handlers[name]()

    # -------------------------------------------------------------------------
    # shared pieces
    # -------------------------------------------------------------------------
    def constants_input(self, n_particles: float, dim: int, epsilon: float) -> ConstantsInput:
        """ConstantsInput from the model bounds, with the constants section overriding m_mm and rho."""
        bounds = self.model.bounds
        m_mm = self.config.constants.m_mm if self.config.constants.m_mm is not None else bounds.m_mm
        rho = self.config.constants.rho if self.config.constants.rho is not None else bounds.rho_hat
        return ConstantsInput(dim=dim, n_particles=n_particles, epsilon=epsilon, m_mm=m_mm, rho=rho)

    def gibbs_method(self) -> GibbsMethod:
        """Configured sampling method."""
        return parse_enum(GibbsMethod, self.config.estimators.method, "estimators.method")

    def samples(self) -> GibbsSampleStream:
        """Re-iterable Gibbs samples for the estimator checks."""
        est = self.config.estimators
        return GibbsSampleStream(
            self.model, est.n_particles, est.dim, est.n_samples, self.config.seed, self.gibbs_method(), est.block_size, est.burn_in
        )

    def dictionary(self) -> list[TestFunction]:
        """Configured test function dictionary."""
        est = self.config.estimators
        if est.dictionary == "coordinates":
            return coordinate_dictionary(est.n_particles, est.dim)
        return default_dictionary(est.n_particles, est.dim, est.n_coordinates, est.n_quadratic, bounded=est.dictionary == "bounded")

    def initial_law(self, n_particles: int, dim: int) -> InitialLaw:
        """Configured initial law of the simulation."""
        sim = self.config.simulation
        if sim.initial == "point":
            return InitialLaw.point(np.full((n_particles, dim), sim.initial_mean))
        if sim.initial == "gaussian":
            return InitialLaw.gaussian(np.full(dim, sim.initial_mean), sim.initial_var * np.eye(dim))
        method = GibbsMethod.EXACT_GAUSSIAN if isinstance(self.model, GaussianMeanField) else GibbsMethod.MALA
        return InitialLaw.gibbs(method)

    def _verdicts(self, name: str, verdicts) -> ValidationResult:
        status = verdict_status(verdicts)
        held = sum(v.holds and not v.inconclusive for v in verdicts)
        return ValidationResult(name, status, f"{held} of {len(verdicts)} verdicts hold", [v.as_row() for v in verdicts])

    # -------------------------------------------------------------------------
    # experiments
    # -------------------------------------------------------------------------
    def run_constants(self) -> list[ValidationResult]:
        """Constants sweep over the configured grid."""
        section = self.config.constants
        grid = [
            self.constants_input(n, dim, eps) for n in section.n_particles for eps in section.epsilons for dim in section.dims
        ]
        reports = [constants.report(inputs) for inputs in grid]
        valid = sum(r.valid for r in reports)
        status = ExitStatus.OK if valid else ExitStatus.REGIME_ERROR
        return [ValidationResult("constants", status, f"{valid} of {len(reports)} grid points valid", [r.as_row() for r in reports])]

    def run_simulate(self) -> list[ValidationResult]:
        """Simulate the particle system and record snapshot observables."""
        sim = self.config.simulation
        cfg = SimConfig(
            dt=sim.dt,
            n_steps=sim.n_steps,
            seed=self.config.seed,
            n_replicas=sim.n_replicas,
            scheme=parse_enum(Scheme, sim.scheme, "simulation.scheme"),
            snapshot_every=sim.snapshot_every,
            block_size=sim.block_size,
            threads=self.config.threads,
        )
        trajectory = simulate(self.model, self.initial_law(sim.n_particles, sim.dim), cfg, n_particles=sim.n_particles, dim=sim.dim)
        rows = [
            {"time": time, "replica": replica, "observable": name, "value": value}
            for time, replica, name, value in trajectory.records(self.model)
        ]
        return [ValidationResult("simulate", ExitStatus.OK, f"{sim.n_replicas} replicas to t={cfg.final_time:g}", rows)]

    def run_check_gamma2(self) -> list[ValidationResult]:
        """∫(L^N f)² = ∫Γ₂(f) for every dictionary function."""
        samples = self.samples()
        verdicts = [estimators.gamma2_identity_check(self.model, samples, f, threads=self.config.threads) for f in self.dictionary()]
        return [self._verdicts("check-gamma2", verdicts)]

    def poincare_rho(self) -> float:
        """Configured ρ₂, or ρ − M_mm/N from the model bounds."""
        est = self.config.estimators
        if est.rho2 is not None:
            return est.rho2
        inputs = self.constants_input(est.n_particles, est.dim, est.epsilon)
        return constants.poincare_constant(inputs.rho, inputs.m_mm, inputs.n_particles)

    def run_check_poincare(self) -> list[ValidationResult]:
        """Second-order and first-order Poincaré inequalities with ρ₂."""
        rho2 = self.poincare_rho()
        if rho2 <= 0:
            raise RegimeError("rho_poincare", rho2)
        samples, threads = self.samples(), self.config.threads
        verdicts = []
        for f in self.dictionary():
            verdicts.append(estimators.second_order_poincare_check(self.model, samples, f, rho2, threads=threads))
            verdicts.append(estimators.poincare_check(self.model, samples, f, rho2, threads=threads))
        return [self._verdicts("check-poincare", verdicts)]

    def run_check_dlsi(self) -> list[ValidationResult]:
        """Defective LSI with (ρ′, δ) from the constants pipeline."""
        est = self.config.estimators
        rho_prime, delta = constants.defective_constants(self.constants_input(est.n_particles, est.dim, est.epsilon))
        if rho_prime <= 0:
            raise RegimeError("rho_prime", rho_prime)
        samples = self.samples()
        verdicts = [
            estimators.defective_lsi_check(self.model, samples, f, rho_prime, delta, threads=self.config.threads) for f in self.dictionary()
        ]
        return [self._verdicts("check-dlsi", verdicts)]

    def run_estimate_gap(self) -> list[ValidationResult]:
        """Rayleigh-quotient gap estimate against the proven Poincaré constant."""
        estimate = estimators.rayleigh_gap(self.samples(), self.dictionary(), threads=self.config.threads)
        lower = self.poincare_rho()
        row = estimate.as_row() | {"poincare_constant": lower}
        if isinstance(self.model, GaussianMeanField):
            est = self.config.estimators
            row["exact_gap"] = exact_gap(self.model.a, self.model.lam, est.n_particles, est.dim)
        consistent = estimate.value >= lower - estimators.SIGMA_LEVEL * estimate.stderr
        status = ExitStatus.OK if consistent else ExitStatus.FAILED
        return [ValidationResult("estimate-gap", status, f"gap {estimate.value:.6g} ± {estimate.stderr:.2g}, proven {lower:.6g}", [row])]

    def decay_initial(self, n_particles: int, dim: int) -> GaussianMeasure:
        """Gibbs law of the Gaussian model displaced along its slowest mode."""
        if not isinstance(self.model, GaussianMeanField):
            raise DomainError("entropy decay fits need the gaussian_mean_field model")
        target = gibbs_gaussian(self.model.a, self.model.lam, n_particles, dim)
        direction = np.zeros(n_particles * dim)
        if n_particles == 1:
            direction[0] = 1.0
        else:
            direction[0], direction[dim] = 1.0, -1.0
        direction /= np.linalg.norm(direction)
        return GaussianMeasure(target.mean + self.config.estimators.shift * direction, target.cov)

    def run_fit_decay(self) -> list[ValidationResult]:
        """Exact entropy curve of the Gaussian model and its fitted decay rate."""
        est = self.config.estimators
        m0 = self.decay_initial(est.n_particles, est.dim)
        curve = estimators.entropy_curve(self.model, m0, est.times, est.n_particles, est.dim)
        rate = estimators.entropy_decay_rate(self.model, m0, est.times, est.n_particles, est.dim)
        report = constants.report(self.constants_input(est.n_particles, est.dim, est.epsilon))
        proven = 2.0 * report.rho_lsi_pipeline if report.valid else math.nan
        rows = [
            {"time": t, "entropy": float(h), "fitted_rate": rate, "lsi_rate": proven} for t, h in zip(est.times, curve, strict=True)
        ]
        status = ExitStatus.FAILED if report.valid and rate < proven * (1.0 - 1e-9) else ExitStatus.OK
        return [ValidationResult("fit-decay", status, f"fitted rate {rate:.6g}, proven 2ρ^N = {proven:.6g}", rows)]

    def run_check_kernel(self) -> list[ValidationResult]:
        """Positive type of the configured kernel and convergence of the atomic approximation."""
        section = self.config.kernel
        kernel = positivity.create_kernel(section.name, section.params, model=self.model)
        report = positivity.positive_type_check(
            kernel,
            section.n_trials,
            section.atoms_per_trial,
            self.config.seed,
            dim=section.dim,
            spread=section.spread,
            tolerance=section.tolerance,
        )
        gen = PhiloxNoise(self.config.seed, stream=positivity.KERNEL_STREAM).generator(section.n_trials, CONVERGENCE_STEP)
        xs = section.spread * gen.standard_normal((section.n_trials, section.atoms_per_trial, section.dim))
        vs = gen.standard_normal((section.n_trials, section.atoms_per_trial, section.dim))
        min_form = float(np.min(positivity.quadratic_form(kernel, xs, vs)))
        errors, orders = positivity.convergence_order(kernel, xs[0], vs[0], section.hs)
        positive = report.positive and min_form >= -section.tolerance
        status = ExitStatus.OK if positive else ExitStatus.FAILED
        summary = report.as_row() | {"min_quadratic_form": min_form}
        order_rows = [
            {"h": h, "error": float(e), "order": float(o)} for h, e, o in zip(section.hs, errors, [math.nan, *orders], strict=True)
        ]
        message = f"kernel {kernel.name}: min energy {report.min_value:.3g}, min form {min_form:.3g}"
        return [
            ValidationResult("check-kernel", status, message, [summary]),
            ValidationResult("check-kernel-order", ExitStatus.OK, f"orders {np.round(orders, 2).tolist()}", order_rows),
        ]

    def observable(self) -> TestFunction:
        """Configured 1-Lipschitz observable on R^d."""
        if self.config.concentration.observable == "coordinate":
            return PolynomialFunction.coordinate(0)
        if self.config.concentration.observable == "radial":
            return RadialFunction()
        raise ConfigError(f"concentration.observable must be coordinate or radial, got {self.config.concentration.observable!r}")

    def stationary_moments(self, n_particles: int, dim: int) -> GaussianMeasure:
        """Mean and covariance of the N-particle Gibbs measure."""
        if isinstance(self.model, GaussianMeanField):
            return gibbs_gaussian(self.model.a, self.model.lam, n_particles, dim)
        samples = sample_gibbs(self.model, n_particles, dim, MOMENT_SAMPLES, self.config.seed, GibbsMethod.MALA)
        flat = samples.reshape(len(samples), -1)
        return GaussianMeasure(flat.mean(axis=0), np.atleast_2d(np.cov(flat, rowvar=False)))

    def prefactor_law(self, m0: InitialLaw, n_particles: int, dim: int) -> GaussianMeasure | np.ndarray:
        """m₀ as a GaussianMeasure, or samples when it is a non-Gaussian Gibbs measure."""
        if m0.kind == "gibbs" and not isinstance(self.model, GaussianMeanField):
            samples = sample_gibbs(self.model, n_particles, dim, MOMENT_SAMPLES, self.config.seed, m0.method)
            return samples.reshape(len(samples), -1)
        return m0.as_gaussian(self.model, n_particles, dim)

    def run_concentration(self) -> list[ValidationResult]:
        """Concentration envelopes against empirical tails on the (t, r) grid."""
        section = self.config.concentration
        n, d = section.n_particles, section.dim
        f = self.observable()
        m0 = self.initial_law(n, d)
        initial = self.prefactor_law(m0, n, d)
        if section.mode == "single":
            if not isinstance(self.model, GaussianMeanField) or n != 1:
                raise ConfigError("single-particle concentration needs the gaussian_mean_field model with n_particles = 1")
            m_star = gibbs_gaussian(self.model.a, self.model.lam, 1, d)
            report, formula = None, LsiFormula.PIPELINE
            rho = m_hess = self.model.a + self.model.lam
        else:
            formula = parse_enum(LsiFormula, section.formula, "concentration.formula")
            report = constants.report(self.constants_input(n, d, section.epsilon))
            if not report.valid:
                raise RegimeError("rho_lsi", report.rho_lsi(formula), report.reason)
            m_star = self.stationary_moments(n, d)
            rho = report.rho_lsi(formula)
            m_hess = self.model.bounds.m_mm + self.model.bounds.m_mx

        rows, statuses = [], []
        for t in section.t_grid:
            estimates = concentration.empirical_tail(
                self.model,
                m0,
                f,
                t,
                section.r_grid,
                section.n_replicas,
                self.config.seed,
                n_particles=n,
                dim=d,
                dt=section.dt,
                threads=self.config.threads,
            )
            for estimate in estimates:
                query = concentration.ConcentrationQuery(t=t, r=estimate.r, m_hess=m_hess, rho=rho, initial=initial, observable=f)
                try:
                    if section.mode == "single":
                        bound = concentration.bound_single(query, m_star)
                    else:
                        bound = concentration.bound_particle(query, report, self.model.bounds, n, m_star, formula)
                except DivergentPrefactorError as e:
                    self.logger.warning(f"t={t}, r={estimate.r}: {e}; reporting an infinite bound")
                    bound = math.inf
                comparison = concentration.compare_tail(estimate, bound)
                rows.append({"mode": section.mode} | comparison.as_row())
                statuses.append(ExitStatus.OK if comparison.dominated else ExitStatus.FAILED)
        dominated = sum(status is ExitStatus.OK for status in statuses)
        return [ValidationResult("concentration", worst_status(statuses), f"{dominated} of {len(rows)} tails dominated", rows)]

    def run_full_suite(self) -> list[ValidationResult]:
        """Every acceptance check, one report each."""
        from mflsi.validation import SuiteValidator

        return SuiteValidator(self.config).run_all()
