"""Command-line interface of the mean field laboratory.

One subcommand per experiment. Each run resolves the configuration
(defaults < config file < flags), executes the experiment, writes one CSV
report per result and exits with the worst status among the outcomes.
"""

import argparse
import logging
import sys

from colorama import Fore, Style, just_fix_windows_console

from mflsi import abk_common
from mflsi.config import EXPERIMENTS, OUTPUT_FORMATS, ExperimentConfig, load_config
from mflsi.errors import ExitStatus, MflsiError
from mflsi.experiment_coordinator import ExperimentCoordinator
from mflsi.models import ValidationResult, worst_status
from mflsi.reporting import format_value, write_report


# -----------------------------------------------------------------------------
# Local Constants
# -----------------------------------------------------------------------------
EXPERIMENT_HELP = {
    "constants": "Evaluate the log-Sobolev constant pipeline over a grid",
    "simulate": "Simulate the particle system and record observables",
    "check-gamma2": "Check the Gamma_2 integration identity on Gibbs samples",
    "check-poincare": "Check first- and second-order Poincare inequalities",
    "check-dlsi": "Check the defective log-Sobolev inequality",
    "estimate-gap": "Estimate the spectral gap by a Rayleigh quotient",
    "fit-decay": "Fit the entropy decay rate of the Gaussian model",
    "check-kernel": "Certify that an interaction kernel is of positive type",
    "concentration": "Compare concentration envelopes with empirical tails",
    "full-suite": "Run every acceptance check",
}
STATUS_COLORS = {
    ExitStatus.OK: Fore.GREEN,
    ExitStatus.INCONCLUSIVE: Fore.YELLOW,
}
CONSTANTS_COLUMNS = ("dim", "n_particles", "epsilon", "rho_prime", "delta", "rho_poincare", "rho_lsi_pipeline", "rho_lsi_theorem", "valid")


class MflsiCLI:
    """Main CLI class of the laboratory."""

    def __init__(self, out=None):
        """Initialize the CLI.

        Args:
            out: console stream, defaults to stdout
        """
        just_fix_windows_console()
        self.out = out or sys.stdout
        self.logger = logging.getLogger(__name__)

    def echo(self, message: str, color: str = "") -> None:
        """Print one console line, coloured when a colour is given."""
        if color:
            message = f"{color}{message}{Style.RESET_ALL}"
        print(message, file=self.out)

    def resolve_config(self, args) -> ExperimentConfig:
        """Defaults, then the config file, then command-line flags."""
        config = load_config(args.config)
        return config.with_overrides(experiment=args.command, seed=args.seed, threads=args.threads, out=args.out, format=args.format)

    def print_constants_table(self, rows: list[dict[str, object]]) -> None:
        """Aligned text view of a constants sweep."""
        table = [CONSTANTS_COLUMNS] + [tuple(format_value(row[c]) for c in CONSTANTS_COLUMNS) for row in rows]
        widths = [max(len(line[k]) for line in table) for k in range(len(CONSTANTS_COLUMNS))]
        for line in table:
            self.echo("  ".join(cell.rjust(width) for cell, width in zip(line, widths, strict=True)))

    def print_result(self, result: ValidationResult, path) -> None:
        """One coloured verdict line per result."""
        vacuous = any(row.get("vacuous") is True for row in result.rows)
        color = STATUS_COLORS.get(result.status, Fore.RED)
        if result.success and vacuous:
            color = Fore.YELLOW
        self.echo(f"[{result.status.name}] {result.check_name}: {result.message} -> {path}", color)

    def experiment_command(self, args) -> ExitStatus:
        """Run the experiment named by the subcommand and write its reports."""
        from mflsi import __version__

        config = self.resolve_config(args)
        results = ExperimentCoordinator(config).run()
        for result in results:
            path = write_report(result.check_name, result.rows, config, __version__)
            if result.check_name == "constants":
                self.print_constants_table(result.rows)
            self.print_result(result, path)
        return worst_status([result.status for result in results]) if results else ExitStatus.OK

    def build_parser(self) -> argparse.ArgumentParser:
        """Argument parser with one subcommand per experiment."""
        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--config", help="JSON configuration file")
        common.add_argument("--seed", type=int, help="root seed (overrides the config file)")
        common.add_argument("--out", help="report directory (overrides output.path)")
        common.add_argument("--threads", type=int, help="worker threads (overrides the config file)")
        common.add_argument("--format", choices=OUTPUT_FORMATS, help="report format (overrides output.format)")
        common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")

        parser = argparse.ArgumentParser(prog="mflsi", description="Mean field Langevin laboratory")
        subparsers = parser.add_subparsers(dest="command", help="Available experiments")
        for name in EXPERIMENTS:
            sub = subparsers.add_parser(name, parents=[common], help=EXPERIMENT_HELP[name])
            sub.set_defaults(func=self.experiment_command)
        return parser

    def execute(self, argv: list[str] | None = None) -> ExitStatus:
        """Parse arguments, run the command and map errors to exit statuses."""
        parser = self.build_parser()
        args = parser.parse_args(argv)

        if not args.command:
            parser.print_help(self.out)
            return ExitStatus.OK

        abk_common.setup_logging(args.verbose)
        try:
            return args.func(args)
        except KeyboardInterrupt:
            self.echo("Operation cancelled by user", Fore.YELLOW)
            return ExitStatus.FAILED
        except MflsiError as e:
            self.logger.debug("command failed", exc_info=True)
            self.echo(f"[{e.exit_status.name}] {type(e).__name__}: {e}", Fore.RED)
            return e.exit_status
        except Exception as e:
            self.logger.debug("unexpected failure", exc_info=True)
            self.echo(f"Unexpected error: {e}", Fore.RED)
            return ExitStatus.FAILED

    def run(self, argv: list[str] | None = None) -> None:
        """Main CLI entry point; exits the process with the run's status."""
        sys.exit(int(self.execute(argv)))


def main():
    """Main entry point for the CLI."""
    cli = MflsiCLI()
    cli.run()


if __name__ == "__main__":
    main()
