"""Full validation suite.

Each ``validate_*`` method runs one acceptance check at the scale given by
the configuration and returns a ValidationResult with its report rows.
Checks that have an experiment counterpart reuse the ExperimentCoordinator.
"""

# Standard lib imports
import dataclasses
import logging
import math

# Third party imports
import numpy as np
from scipy import stats

# Local imports
from mflsi import abk_common, concentration, constants, estimators, positivity
from mflsi.config import ExperimentConfig, ModelSection
from mflsi.energy import GaussianMeanField, RbfInteraction, batch_drift, batch_potential, hessian_un
from mflsi.errors import ExitStatus, RegimeError
from mflsi.experiment_coordinator import ExperimentCoordinator
from mflsi.gaussian_oracle import GaussianMeasure, euler_maruyama_moments, exact_gap, gibbs_gaussian, gibbs_precision, kl_gaussian, ou_flow
from mflsi.models import ConstantsInput, ParticleConfiguration, ValidationResult, worst_status
from mflsi.observables import coordinate_dictionary


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
SOUNDNESS_LAMBDAS = (0.0, 0.25, 0.5, 1.0)
SOUNDNESS_DIMS = (1, 2)
SOUNDNESS_PARTICLES = (10.0, 1e2, 1e3, 1e4)
SOUNDNESS_EPSILONS = 50
LIMIT_TUPLES = 100
LARGE_N = 1e9
LIMIT_TOLERANCE = 1e-12
LARGE_N_TOLERANCE = 1e-6
TIGHTENING_TRIALS = 1000
CONSISTENCY_CONFIGS = 100
GRADIENT_STEP = 1e-5
HESSIAN_STEP = 1e-4
GRADIENT_TOLERANCE = 1e-5
HESSIAN_TOLERANCE = 1e-4
EXACT_HESSIAN_TOLERANCE = 1e-12
GAP_WINDOW = (0.97, 1.03)
GAP_PARTICLES = 8
DECAY_TOLERANCE = 0.01
RANDOM_INITIALS = 20
EM_STEPS = (0.02, 0.01, 0.005)
EM_RATIO_WINDOW = (1.5, 3.0)
ENTROPY_TIMES = tuple(float(t) for t in range(1, 11))
TAIL_SIGMAS = 5.0


class SuiteValidator:
    """Runs every acceptance check of the laboratory.

    Args:
        config: resolved configuration; its sections set the sample sizes
    """

    def __init__(self, config: ExperimentConfig):
        """Initialize the validator."""
        self.config = config
        self.coordinator = ExperimentCoordinator(config)
        self.logger = logging.getLogger(__name__)

    def generator(self, salt: int) -> np.random.Generator:
        """Generator for the random grids of one check."""
        return np.random.default_rng([self.config.seed, salt])

    # -------------------------------------------------------------------------
    # constants
    # -------------------------------------------------------------------------
    def validate_constants_soundness(self) -> ValidationResult:
        """Pipeline and closed-form ρ^N never exceed the exact constant of the Gaussian model."""
        rows, violations = [], 0
        epsilons = np.linspace(0.01, 0.99, SOUNDNESS_EPSILONS)
        for lam in SOUNDNESS_LAMBDAS:
            model = GaussianMeanField(1.0, lam)
            bounds = model.bounds
            for dim in SOUNDNESS_DIMS:
                for n in SOUNDNESS_PARTICLES:
                    exact = exact_gap(model.a, lam, int(n), dim)
                    reports = [constants.report(ConstantsInput(dim, n, float(eps), bounds.m_mm, bounds.rho_hat)) for eps in epsilons]
                    valid = [r for r in reports if r.valid]
                    pipeline = max((r.rho_lsi_pipeline for r in valid), default=math.nan)
                    theorem = max((r.rho_lsi_theorem for r in valid if math.isfinite(r.rho_lsi_theorem)), default=math.nan)
                    bad = sum(r.rho_lsi_pipeline > exact for r in valid) + sum(r.rho_lsi_theorem > exact for r in valid)
                    violations += bad
                    rows.append(
                        {"lam": lam, "dim": dim, "n_particles": n, "valid": len(valid), "max_pipeline": pipeline,
                         "max_theorem": theorem, "exact": exact, "violations": bad}
                    )
        status = ExitStatus.FAILED if violations else ExitStatus.OK
        return ValidationResult("constants-soundness", status, f"{violations} violations", rows)

    def _random_inputs(self, gen: np.random.Generator) -> ConstantsInput:
        while True:
            rho = float(gen.uniform(0.1, 5.0))
            inputs = ConstantsInput(
                dim=int(gen.integers(1, 6)),
                n_particles=LARGE_N,
                epsilon=float(gen.uniform(0.05, 0.95)),
                m_mm=float(gen.uniform(0.0, 0.5)) * rho,
                rho=rho,
            )
            if constants.report(inputs).valid:
                return inputs

    def validate_limits(self) -> ValidationResult:
        """Large-N constants against their mean-field limits."""
        gen = self.generator(2)
        rows, failures = [], 0
        for _ in range(LIMIT_TUPLES):
            inputs = self._random_inputs(gen)
            infinite = dataclasses.replace(inputs, n_particles=math.inf)
            remark = constants.lsi_limit_remark(inputs.dim, inputs.rho, inputs.alpha, inputs.epsilon)
            _, delta = constants.defective_constants(infinite)
            symbolic = (1.0 - inputs.epsilon) * inputs.rho / (1.0 + delta / (4.0 * inputs.rho))
            theorem_large = constants.lsi_constant_theorem(inputs)
            theorem_inf = constants.lsi_constant_theorem(infinite)
            pipeline_large = constants.lsi_constant_pipeline(inputs)
            pipeline_inf = constants.lsi_constant_pipeline(infinite)
            ok = (
                math.isclose(theorem_inf, remark, rel_tol=LIMIT_TOLERANCE)
                and math.isclose(pipeline_inf, symbolic, rel_tol=LIMIT_TOLERANCE)
                and math.isclose(theorem_large, remark, rel_tol=LARGE_N_TOLERANCE)
                and math.isclose(pipeline_large, symbolic, rel_tol=LARGE_N_TOLERANCE)
            )
            failures += not ok
            rows.append(
                {"dim": inputs.dim, "epsilon": inputs.epsilon, "m_mm": inputs.m_mm, "rho": inputs.rho, "theorem_large_n": theorem_large,
                 "remark_limit": remark, "pipeline_large_n": pipeline_large, "pipeline_limit": symbolic, "ok": ok}
            )
        status = ExitStatus.FAILED if failures else ExitStatus.OK
        return ValidationResult("limit-consistency", status, f"{failures} of {LIMIT_TUPLES} tuples off their limits", rows)

    def validate_tightening(self) -> ValidationResult:
        """The tightening used by the pipeline strictly improves on the standard one."""
        gen = self.generator(3)
        rho1, rho2 = gen.uniform(0.01, 5.0, (2, TIGHTENING_TRIALS))
        delta = gen.uniform(1e-3, 10.0, TIGHTENING_TRIALS)
        ours = np.array([constants.tighten(*args) for args in zip(rho1, rho2, delta, strict=True)])
        standard = np.array([constants.standard_tightening(*args) for args in zip(rho1, rho2, delta, strict=True)])
        failures = int(np.count_nonzero(ours <= standard))
        row = {"trials": TIGHTENING_TRIALS, "failures": failures, "min_ratio": float(np.min(ours / standard))}
        status = ExitStatus.FAILED if failures else ExitStatus.OK
        return ValidationResult("tightening", status, f"min improvement ratio {row['min_ratio']:.6g}", [row])

    # -------------------------------------------------------------------------
    # energy
    # -------------------------------------------------------------------------
    @staticmethod
    def finite_difference_gradient(model, points: np.ndarray, h: float = GRADIENT_STEP) -> np.ndarray:
        """Central differences of U^N at one configuration of shape (N, d)."""
        n, d = points.shape
        shifts = h * np.eye(n * d).reshape(n * d, n, d)
        return ((batch_potential(model, points + shifts) - batch_potential(model, points - shifts)) / (2 * h)).reshape(n, d)

    @staticmethod
    def finite_difference_hessian(model, points: np.ndarray, h: float = HESSIAN_STEP) -> np.ndarray:
        """Second-order central differences of U^N, shape (Nd, Nd)."""
        n, d = points.shape
        k = n * d
        unit = h * np.eye(k).reshape(k, n, d)
        plus_p, plus_q = unit[:, None], unit[None, :]
        corners = [points + sp * plus_p + sq * plus_q for sp, sq in ((1, 1), (1, -1), (-1, 1), (-1, -1))]
        values = [batch_potential(model, c.reshape(-1, n, d)).reshape(k, k) for c in corners]
        return (values[0] - values[1] - values[2] + values[3]) / (4 * h * h)

    def validate_drift_hessian(self) -> ValidationResult:
        """Drift and Hessian of both built-in models against finite differences of U^N."""
        gen = self.generator(4)
        models = [GaussianMeanField(1.0, 0.5), RbfInteraction(a=1.0, kappa=0.5, sigma=1.0, rho_hat=0.5)]
        rows, failures = [], 0
        for model in models:
            worst_grad = worst_hess = worst_exact = 0.0
            for _ in range(CONSISTENCY_CONFIGS):
                n, d = int(gen.integers(1, 9)), int(gen.integers(1, 4))
                config = ParticleConfiguration(gen.normal(size=(n, d)))
                numeric = self.finite_difference_gradient(model, config.points)
                analytic = -batch_drift(model, config.points[None])[0]
                worst_grad = max(worst_grad, float(np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1.0)))
                hessian = hessian_un(model, config).matrix
                numeric_h = self.finite_difference_hessian(model, config.points)
                worst_hess = max(worst_hess, float(np.linalg.norm(hessian - numeric_h) / max(np.linalg.norm(numeric_h), 1.0)))
                if isinstance(model, GaussianMeanField):
                    exact = gibbs_precision(model.a, model.lam, n, d)
                    worst_exact = max(worst_exact, float(np.max(np.abs(hessian - exact))))
            ok = worst_grad < GRADIENT_TOLERANCE and worst_hess < HESSIAN_TOLERANCE and worst_exact < EXACT_HESSIAN_TOLERANCE
            failures += not ok
            rows.append(
                {"model": model.name, "gradient_error": worst_grad, "hessian_error": worst_hess, "exact_error": worst_exact, "ok": ok}
            )
        status = ExitStatus.FAILED if failures else ExitStatus.OK
        return ValidationResult("drift-hessian", status, f"{failures} model(s) inconsistent", rows)

    # -------------------------------------------------------------------------
    # estimators
    # -------------------------------------------------------------------------
    def validate_gamma2(self) -> ValidationResult:
        """∫(L^N f)² = ∫Γ₂(f) on the configured dictionary."""
        return dataclasses.replace(self.coordinator.run_check_gamma2()[0], check_name="gamma2-identity")

    def validate_inequalities(self) -> list[ValidationResult]:
        """Second-order Poincaré and defective LSI on the same samples."""
        poincare = dataclasses.replace(self.coordinator.run_check_poincare()[0], check_name="inequality-poincare")
        dlsi = dataclasses.replace(self.coordinator.run_check_dlsi()[0], check_name="inequality-dlsi")
        return [poincare, dlsi]

    def validate_gap(self) -> ValidationResult:
        """Rayleigh gap on the coordinate dictionary of at most eight particles against the exact and proven constants."""
        est = dataclasses.replace(self.config.estimators, n_particles=min(self.config.estimators.n_particles, GAP_PARTICLES))
        coordinator = ExperimentCoordinator(dataclasses.replace(self.config, estimators=est))
        dictionary = coordinate_dictionary(est.n_particles, est.dim)
        estimate = estimators.rayleigh_gap(coordinator.samples(), dictionary, threads=self.config.threads)
        lower = coordinator.poincare_rho()
        ok = estimate.value >= lower - estimators.SIGMA_LEVEL * estimate.stderr
        row = estimate.as_row() | {"poincare_constant": lower, "exact_gap": math.nan}
        model = coordinator.model
        if isinstance(model, GaussianMeanField):
            exact = exact_gap(model.a, model.lam, est.n_particles, est.dim)
            row["exact_gap"] = exact
            ok = ok and GAP_WINDOW[0] * exact <= estimate.value <= GAP_WINDOW[1] * exact
        status = ExitStatus.OK if ok else ExitStatus.FAILED
        return ValidationResult("spectral-gap", status, f"gap {estimate.value:.6g} ± {estimate.stderr:.2g}", [row])

    def validate_entropy_decay(self) -> ValidationResult:
        """Exact entropy decay rates and the weak order of Euler–Maruyama.

        The halving ratios are taken on the exact law of the Euler–Maruyama chain
        for linear drift. The particle simulator samples that same law, and its
        own tests compare it with this recursion.
        """
        model = self.coordinator.model
        if not isinstance(model, GaussianMeanField):
            return ValidationResult("entropy-decay", ExitStatus.OK, "skipped: needs the gaussian_mean_field model")
        est = self.config.estimators
        n, d = est.n_particles, est.dim
        rows, statuses = [], []
        slow = estimators.entropy_decay_rate(model, self.coordinator.decay_initial(n, d), est.times, n, d)
        expected = 2.0 * exact_gap(model.a, model.lam, n, d)
        ok = abs(slow - expected) <= DECAY_TOLERANCE * expected
        rows.append({"case": "slowest_mode", "value": slow, "reference": expected, "ok": ok})
        statuses.append(ExitStatus.OK if ok else ExitStatus.FAILED)

        report = constants.report(self.coordinator.constants_input(n, d, est.epsilon))
        if not report.valid:
            raise RegimeError("rho_lsi", report.rho_lsi_pipeline, report.reason)
        proven = 2.0 * report.rho_lsi_pipeline
        gen = self.generator(8)
        target = gibbs_gaussian(model.a, model.lam, n, d)
        for k in range(RANDOM_INITIALS):
            root = gen.normal(size=(n * d, n * d)) / math.sqrt(n * d)
            m0 = GaussianMeasure(target.mean + gen.normal(size=n * d), root @ root.T + 0.1 * np.eye(n * d))
            rate = estimators.entropy_decay_rate(model, m0, est.times, n, d)
            ok = rate >= proven
            rows.append({"case": f"random_{k}", "value": rate, "reference": proven, "ok": ok})
            statuses.append(ExitStatus.OK if ok else ExitStatus.FAILED)

        small = min(n, 4)
        precision = gibbs_precision(model.a, model.lam, small, d)
        start = GaussianMeasure(np.ones(small * d), 0.5 * np.eye(small * d))
        exact = ou_flow(start, precision, 1.0)
        errors = []
        for dt in EM_STEPS:
            approx = euler_maruyama_moments(start, precision, dt, round(1.0 / dt))
            errors.append(float(np.linalg.norm(approx.mean - exact.mean) + np.linalg.norm(approx.cov - exact.cov)))
        for dt, ratio in zip(EM_STEPS[1:], np.array(errors[:-1]) / np.array(errors[1:]), strict=True):
            ok = EM_RATIO_WINDOW[0] <= ratio <= EM_RATIO_WINDOW[1]
            rows.append({"case": f"em_halving_dt_{dt:g}", "value": float(ratio), "reference": 2.0, "ok": ok})
            statuses.append(ExitStatus.OK if ok else ExitStatus.FAILED)
        status = worst_status(statuses)
        return ValidationResult("entropy-decay", status, f"slowest-mode rate {slow:.6g} vs {expected:.6g}", rows)

    # -------------------------------------------------------------------------
    # positivity
    # -------------------------------------------------------------------------
    def validate_positivity(self) -> ValidationResult:
        """Nonnegative quadratic forms for rbf and cosine kernels, detection of the negated rbf kernel."""
        section = self.config.kernel
        gen = self.generator(9)
        xs = section.spread * gen.standard_normal((section.n_trials, section.atoms_per_trial, section.dim))
        vs = gen.standard_normal((section.n_trials, section.atoms_per_trial, section.dim))
        rows, statuses = [], []
        for kernel in (positivity.RbfKernel(), positivity.CosineKernel(np.ones(section.dim))):
            min_form = float(np.min(positivity.quadratic_form(kernel, xs, vs)))
            _, orders = positivity.convergence_order(kernel, xs[0], vs[0], section.hs)
            ok = min_form >= -section.tolerance
            rows.append(
                {"kernel": kernel.name, "min_quadratic_form": min_form, "last_order": float(orders[-1]), "expected": "positive", "ok": ok}
            )
            statuses.append(ExitStatus.OK if ok else ExitStatus.FAILED)
        negated = positivity.positive_type_check(
            positivity.NegatedKernel(positivity.RbfKernel()), section.n_trials, section.atoms_per_trial, self.config.seed, dim=section.dim
        )
        ok = not negated.positive
        rows.append(
            {"kernel": negated.kernel, "min_quadratic_form": negated.min_value, "last_order": math.nan, "expected": "negative", "ok": ok}
        )
        statuses.append(ExitStatus.OK if ok else ExitStatus.FAILED)
        classified = sum(row["ok"] for row in rows)
        return ValidationResult("positivity", worst_status(statuses), f"{classified} of {len(rows)} kernels classified", rows)

    # -------------------------------------------------------------------------
    # concentration
    # -------------------------------------------------------------------------
    def validate_concentration_single(self) -> ValidationResult:
        """Single-particle envelope for the 1d Ornstein–Uhlenbeck process from δ₀, with the exact law."""
        config = dataclasses.replace(
            self.config,
            model=ModelSection(name="gaussian_mean_field", params={"a": 1.0, "lam": 0.0}),
            simulation=dataclasses.replace(self.config.simulation, initial="point", initial_mean=0.0),
            concentration=dataclasses.replace(self.config.concentration, mode="single", n_particles=1, dim=1, observable="coordinate"),
        )
        result = ExperimentCoordinator(config).run_concentration()[0]
        n, statuses = config.concentration.n_replicas, [result.status]
        for row in result.rows:
            exact = float(stats.norm.sf(row["r"] / math.sqrt(1.0 - math.exp(-2.0 * row["t"]))))
            row["exact"] = exact
            slack = TAIL_SIGMAS * math.sqrt(exact * (1.0 - exact) / n) + 1.0 / n
            statuses.append(ExitStatus.OK if abs(row["empirical"] - exact) <= slack and exact <= row["bound"] else ExitStatus.FAILED)
        return dataclasses.replace(result, check_name="concentration-single", status=worst_status(statuses))

    def validate_concentration_particle(self) -> ValidationResult:
        """Particle envelope with the configured ρ^N formula."""
        config = dataclasses.replace(
            self.config,
            simulation=dataclasses.replace(self.config.simulation, initial="point", initial_mean=0.0),
            concentration=dataclasses.replace(self.config.concentration, mode="particle"),
        )
        return dataclasses.replace(ExperimentCoordinator(config).run_concentration()[0], check_name="concentration-particle")

    def validate_entropy_bound(self) -> ValidationResult:
        """The entropy decay bound dominates the exact relative entropy of Gaussian flows."""
        target = GaussianMeasure(np.zeros(1), np.eye(1))
        rows, failures = [], 0
        for mean in (0.5, 2.0):
            for var in (0.5, 1.0, 2.0):
                mu0 = GaussianMeasure(np.array([mean]), var * np.eye(1))
                for t in ENTROPY_TIMES:
                    exact = kl_gaussian(ou_flow(mu0, np.eye(1), t), target)
                    bound = concentration.entropy_decay_bound(mu0, target, t, 1.0, 1.0)
                    failures += exact > bound
                    rows.append({"mean": mean, "var": var, "t": t, "entropy": exact, "bound": bound, "dominated": exact <= bound})
        status = ExitStatus.FAILED if failures else ExitStatus.OK
        return ValidationResult("entropy-bound", status, f"{failures} of {len(rows)} grid points violated", rows)

    # -------------------------------------------------------------------------
    # suite
    # -------------------------------------------------------------------------
    @abk_common.function_trace
    def run_all(self) -> list[ValidationResult]:
        """Run every check in a fixed order."""
        results = [
            self.validate_constants_soundness(),
            self.validate_limits(),
            self.validate_tightening(),
            self.validate_drift_hessian(),
            self.validate_gamma2(),
            *self.validate_inequalities(),
            self.validate_gap(),
            self.validate_entropy_decay(),
            self.validate_positivity(),
            self.validate_concentration_single(),
            self.validate_concentration_particle(),
            self.validate_entropy_bound(),
        ]
        for result in results:
            self.logger.info(f"{result.check_name}: {result.status.name} ({result.message})")
        return results
