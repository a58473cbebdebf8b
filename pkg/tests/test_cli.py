"""Unit tests for cli module."""

import io
import json

import pytest
from colorama import Fore

from mflsi.cli import MflsiCLI
from mflsi.errors import ExitStatus, SimulationDivergenceError
from mflsi.models import ValidationResult


SMALL_SWEEP = {"constants": {"dims": [1], "n_particles": [10, 100], "epsilons": [0.5]}}


@pytest.fixture
def cli():
    """CLI writing its console output to a buffer."""
    return MflsiCLI(out=io.StringIO())


@pytest.fixture
def config_file(tmp_path):
    """Write a config file and return its path."""

    def write(data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write


class TestCommands:
    """Test experiment subcommands end to end."""

    def test_no_command_prints_help(self, cli):
        """Test running without a subcommand shows usage and succeeds."""
        assert cli.execute([]) is ExitStatus.OK
        assert "usage: mflsi" in cli.out.getvalue()

    def test_constants(self, cli, config_file, tmp_path):
        """Test the constants sweep writes its report and prints a table."""
        out = tmp_path / "results"
        status = cli.execute(["constants", "--config", config_file(SMALL_SWEEP), "--out", str(out), "--seed", "5"])

        assert status is ExitStatus.OK
        text = (out / "constants.csv").read_text(encoding="utf-8")
        assert text.startswith("# mflsi 0.1.0\n# report: constants\n")
        assert '"seed":5' in text
        assert len([line for line in text.splitlines() if not line.startswith("#")]) == 3
        console = cli.out.getvalue()
        assert "rho_lsi_pipeline" in console
        assert f"{Fore.GREEN}[OK] constants" in console

    def test_reports_are_reproducible(self, config_file, tmp_path):
        """Test two identical runs write identical bytes."""
        args = ["constants", "--config", config_file(SMALL_SWEEP), "--out", str(tmp_path), "--format", "csv.gz"]
        MflsiCLI(out=io.StringIO()).execute(args)
        first = (tmp_path / "constants.csv.gz").read_bytes()
        MflsiCLI(out=io.StringIO()).execute(args)
        assert (tmp_path / "constants.csv.gz").read_bytes() == first

    def test_threads_do_not_change_reports(self, config_file, tmp_path):
        """Test the worker count and report directory leave the bytes unchanged."""
        path = config_file(SMALL_SWEEP)
        MflsiCLI(out=io.StringIO()).execute(["constants", "--config", path, "--out", str(tmp_path / "a"), "--threads", "1"])
        MflsiCLI(out=io.StringIO()).execute(["constants", "--config", path, "--out", str(tmp_path / "b"), "--threads", "4"])
        assert (tmp_path / "a" / "constants.csv").read_bytes() == (tmp_path / "b" / "constants.csv").read_bytes()

    def test_invalid_regime(self, cli, config_file, tmp_path):
        """Test a sweep without any valid grid point exits with the regime status."""
        data = {"constants": {"dims": [1], "n_particles": [10], "epsilons": [0.5], "m_mm": 100.0, "rho": 1.0}}
        status = cli.execute(["constants", "--config", config_file(data), "--out", str(tmp_path)])
        assert status is ExitStatus.REGIME_ERROR
        assert Fore.RED in cli.out.getvalue()


class TestExitStatuses:
    """Test mapping of outcomes and errors to exit statuses."""

    def test_config_error(self, cli, tmp_path):
        """Test a missing config file."""
        status = cli.execute(["constants", "--config", str(tmp_path / "missing.json")])
        assert status is ExitStatus.CONFIG_ERROR
        assert "ConfigError" in cli.out.getvalue()

    def test_unknown_key(self, cli, config_file):
        """Test unknown keys in the file are configuration errors."""
        assert cli.execute(["constants", "--config", config_file({"sedd": 1})]) is ExitStatus.CONFIG_ERROR

    def test_divergence(self, cli, mocker, tmp_path):
        """Test a diverged simulation exits with the divergence status."""
        mocker.patch("mflsi.cli.ExperimentCoordinator.run", side_effect=SimulationDivergenceError({3: 0.25}))
        status = cli.execute(["simulate", "--out", str(tmp_path)])
        assert status is ExitStatus.DIVERGENCE
        assert "replica 3" in cli.out.getvalue()

    def test_worst_result_wins(self, cli, mocker, tmp_path):
        """Test the exit status is the worst outcome and every result gets a report."""
        mocker.patch(
            "mflsi.cli.ExperimentCoordinator.run",
            return_value=[
                ValidationResult("first", ExitStatus.OK, "fine", [{"a": 1}]),
                ValidationResult("second", ExitStatus.INCONCLUSIVE, "noisy", [{"a": 2}]),
                ValidationResult("third", ExitStatus.FAILED, "broken", [{"a": 3}]),
            ],
        )
        status = cli.execute(["full-suite", "--out", str(tmp_path)])
        assert status is ExitStatus.FAILED
        assert sorted(p.name for p in tmp_path.iterdir()) == ["first.csv", "second.csv", "third.csv"]
        console = cli.out.getvalue()
        assert f"{Fore.YELLOW}[INCONCLUSIVE] second" in console
        assert f"{Fore.RED}[FAILED] third" in console

    def test_vacuous_pass_is_yellow(self, cli, mocker, tmp_path):
        """Test passing results with vacuous bounds are highlighted."""
        mocker.patch(
            "mflsi.cli.ExperimentCoordinator.run",
            return_value=[ValidationResult("concentration", ExitStatus.OK, "1 of 1", [{"vacuous": True}])],
        )
        assert cli.execute(["concentration", "--out", str(tmp_path)]) is ExitStatus.OK
        assert f"{Fore.YELLOW}[OK] concentration" in cli.out.getvalue()

    def test_unexpected_error(self, cli, mocker):
        """Test errors outside the hierarchy map to a plain failure."""
        mocker.patch("mflsi.cli.ExperimentCoordinator.run", side_effect=RuntimeError("boom"))
        assert cli.execute(["simulate"]) is ExitStatus.FAILED
        assert "Unexpected error: boom" in cli.out.getvalue()

    def test_run_exits_with_status(self, cli, mocker):
        """Test run passes the status to sys.exit."""
        mocker.patch.object(MflsiCLI, "execute", return_value=ExitStatus.INCONCLUSIVE)
        with pytest.raises(SystemExit) as excinfo:
            cli.run(["fit-decay"])
        assert excinfo.value.code == 5

    def test_rejects_unknown_format(self, cli):
        """Test argparse rejects an unsupported format."""
        with pytest.raises(SystemExit):
            cli.execute(["constants", "--format", "xlsx"])
