"""Unit tests for config module."""

import json
import math

import pytest
from parameterized import parameterized

from mflsi.config import EXPERIMENTS, ExperimentConfig, load_config, parse_config
from mflsi.errors import ConfigError


class TestDefaults:
    """Test built-in defaults."""

    def test_default_config(self):
        """Test the defaults describe a valid full-suite run."""
        config = ExperimentConfig()
        assert config.experiment == "full-suite"
        assert config.seed == 0
        assert config.threads == 1
        assert config.model.name == "gaussian_mean_field"
        assert config.output.format == "csv"
        assert "full-suite" in EXPERIMENTS

    def test_load_none_returns_defaults(self):
        """Test no config file means defaults."""
        assert load_config(None) == ExperimentConfig()

    def test_canonical_json(self):
        """Test as_json sorts keys and omits whitespace."""
        text = ExperimentConfig().as_json()
        assert " " not in text
        decoded = json.loads(text)
        assert list(decoded) == sorted(decoded)
        assert decoded["simulation"]["dt"] == 0.01

    def test_result_json_omits_run_settings(self):
        """Test the result JSON leaves out threads and output."""
        decoded = json.loads(ExperimentConfig(threads=4).result_json())
        assert "threads" not in decoded
        assert "output" not in decoded
        assert decoded["seed"] == 0


class TestParseConfig:
    """Test strict parsing of decoded JSON."""

    def test_sections_override_defaults(self):
        """Test file values replace defaults key by key."""
        config = parse_config({"seed": 7, "simulation": {"n_steps": 5}, "model": {"name": "rbf_interaction", "params": {"a": 2}}})
        assert config.seed == 7
        assert config.simulation.n_steps == 5
        assert config.simulation.dt == 0.01
        assert config.model.params == {"a": 2}

    def test_ints_accepted_for_floats(self):
        """Test JSON integers are promoted where floats are expected."""
        config = parse_config({"simulation": {"dt": 1}, "constants": {"n_particles": [10, 100], "rho": 2}})
        assert isinstance(config.simulation.dt, float)
        assert config.constants.n_particles == [10.0, 100.0]
        assert config.constants.rho == 2.0

    def test_optional_floats_accept_null(self):
        """Test null keeps an optional constant at its model-derived default."""
        assert parse_config({"constants": {"m_mm": None}}).constants.m_mm is None

    def test_infinite_particles(self):
        """Test Infinity is accepted in the constants grid."""
        config = parse_config(json.loads('{"constants": {"n_particles": [Infinity]}}'))
        assert config.constants.n_particles == [math.inf]

    @parameterized.expand(
        [
            ("unknown_top_level", {"seeds": 1}),
            ("unknown_nested", {"simulation": {"steps": 5}}),
            ("section_not_object", {"simulation": 5}),
            ("bool_for_int", {"seed": True}),
            ("string_for_float", {"simulation": {"dt": "0.1"}}),
            ("float_for_int", {"simulation": {"n_steps": 1.5}}),
            ("bad_list", {"constants": {"dims": [1, "2"]}}),
            ("bad_choice", {"experiment": "everything"}),
            ("bad_format", {"output": {"format": "parquet"}}),
            ("bad_initial", {"simulation": {"initial": "uniform"}}),
            ("negative_seed", {"seed": -1}),
            ("zero_threads", {"threads": 0}),
        ]
    )
    def test_rejects(self, _, data):
        """Test unknown keys, wrong types and invalid choices."""
        with pytest.raises(ConfigError):
            parse_config(data)

    def test_error_names_the_key(self):
        """Test messages point at the offending key."""
        with pytest.raises(ConfigError, match="simulation.dt"):
            parse_config({"simulation": {"dt": "fast"}})
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config({"estimators": {"samples": 1}})


class TestOverrides:
    """Test command-line precedence."""

    def test_flags_win_over_file(self):
        """Test flags replace file values and None leaves them untouched."""
        config = parse_config({"seed": 3, "output": {"path": "from_file"}})
        resolved = config.with_overrides(seed=9, out=None, format="csv.gz", threads=None)
        assert resolved.seed == 9
        assert resolved.output.path == "from_file"
        assert resolved.output.format == "csv.gz"
        assert resolved.threads == 1

    def test_experiment_override(self):
        """Test the subcommand selects the experiment."""
        assert ExperimentConfig().with_overrides(experiment="constants").experiment == "constants"

    def test_overrides_are_validated(self):
        """Test an override goes through the same checks as the file."""
        with pytest.raises(ConfigError):
            ExperimentConfig().with_overrides(format="xlsx")

    def test_unknown_override(self):
        """Test unknown override names."""
        with pytest.raises(ConfigError, match="unknown override"):
            ExperimentConfig().with_overrides(colour=True)


class TestLoadConfig:
    """Test reading configuration files."""

    def test_load(self, tmp_path):
        """Test a file on disk is parsed."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"experiment": "constants", "seed": 11}), encoding="utf-8")
        config = load_config(path)
        assert config.experiment == "constants"
        assert config.seed == 11

    def test_missing_file(self, tmp_path):
        """Test an unreadable path."""
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "missing.json")

    def test_malformed_json(self, tmp_path):
        """Test a syntax error in the file."""
        path = tmp_path / "broken.json"
        path.write_text("{seed: 1", encoding="utf-8")
        with pytest.raises(ConfigError, match="malformed JSON"):
            load_config(path)
