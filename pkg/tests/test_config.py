from pathlib import Path

import pytest
import yaml

from wrsearch.config import OUTPUT_DIR_ENV, ExperimentConfig, load_config
from wrsearch.engine import MinSamplesPolicy
from wrsearch.exceptions import ConfigError
from wrsearch.objectives import BuiltinObjective, ExternalObjective


class TestFromDict:
    """Test cases for ExperimentConfig.from_dict."""

    def test_defaults(self, campaign_dict):
        """Test a minimal campaign resolves its automatic fields."""
        config = ExperimentConfig.from_dict(campaign_dict, environ={})
        assert config.space.d == 6
        assert config.n_phase1 is None
        assert config.phase1 == 22
        assert config.schedule is None
        assert config.optimizers == ("RS", "WRS")
        assert config.min_samples_policy is MinSamplesPolicy.PHASE1
        assert config.importance.n_trees == 8
        assert isinstance(config.make_objective(), BuiltinObjective)

    def test_missing_required(self, campaign_dict):
        """Test the space, objective and budget are required."""
        del campaign_dict["n_total"]
        with pytest.raises(ConfigError, match="n_total"):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_unknown_key(self, campaign_dict):
        """Test misspelled top-level keys."""
        campaign_dict["n_totl"] = 10
        with pytest.raises(ConfigError, match="n_totl"):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_unknown_importance_key(self, campaign_dict):
        """Test ensemble settings reject unknown keys."""
        campaign_dict["importance"] = {"n_estimators": 10}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    @pytest.mark.parametrize(
        "key,value",
        [("n_total", 1), ("n_total", "many"), ("n_runs", 0), ("n_phase1", 60),
         ("parallelism", 0), ("optimizers", ["RS", "BO"]), ("optimizers", ["RS", "RS"]),
         ("min_samples_policy", "sometimes"), ("base_seed", -1)],
    )
    def test_invalid_values(self, campaign_dict, key, value):
        """Test out-of-range and mistyped values."""
        campaign_dict[key] = value
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_bad_space(self, campaign_dict):
        """Test space errors surface as configuration errors."""
        campaign_dict["space"][0]["low"] = 1000
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_arity_mismatch(self, campaign_dict):
        """Test G6* on a three-dimensional space."""
        campaign_dict["space"] = campaign_dict["space"][:3]
        with pytest.raises(ConfigError, match="6 dimensions"):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_explicit_phase_split(self, campaign_dict):
        """Test an explicit N0."""
        campaign_dict["n_phase1"] = 10
        assert ExperimentConfig.from_dict(campaign_dict, environ={}).phase1 == 10

    def test_optimizer_names_normalized(self, campaign_dict):
        """Test lower-case optimizer names."""
        campaign_dict["optimizers"] = ["wrs"]
        assert ExperimentConfig.from_dict(campaign_dict, environ={}).optimizers == ("WRS",)

    def test_auto_parallelism(self, campaign_dict):
        """Test 'auto' resolves to a positive worker count."""
        campaign_dict["parallelism"] = "auto"
        assert ExperimentConfig.from_dict(campaign_dict, environ={}).parallelism >= 1

    def test_external_objective(self, campaign_dict):
        """Test a command objective."""
        campaign_dict["objective"] = {"command": "python objective.py", "persistent": True}
        config = ExperimentConfig.from_dict(campaign_dict, environ={})
        objective = config.make_objective()
        assert isinstance(objective, ExternalObjective)
        assert objective.command == ["python", "objective.py"]


class TestSchedule:
    """Test cases for a fixed schedule in the config."""

    def test_schedule_override(self, campaign_dict):
        """Test probabilities with default minimum samples."""
        campaign_dict["schedule"] = {"probs": [1, 0.5, 0.5, 0.2, 0.2, 0.1]}
        config = ExperimentConfig.from_dict(campaign_dict, environ={})
        assert config.schedule.probs == (1, 0.5, 0.5, 0.2, 0.2, 0.1)
        assert config.schedule.min_samples == (22,) * 6

    def test_schedule_with_min_samples(self, campaign_dict):
        """Test explicit k_i."""
        campaign_dict["schedule"] = {"probs": [1.0] * 6, "min_samples": [0] * 6}
        config = ExperimentConfig.from_dict(campaign_dict, environ={})
        assert config.schedule.is_random_search

    def test_schedule_needs_a_one(self, campaign_dict):
        """Test a schedule without any probability of one."""
        campaign_dict["schedule"] = {"probs": [0.5] * 6}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_schedule_length(self, campaign_dict):
        """Test a schedule must cover every dimension."""
        campaign_dict["schedule"] = {"probs": [1.0, 0.5]}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(campaign_dict, environ={})

    def test_schedule_shape(self, campaign_dict):
        """Test a bare list is not a schedule."""
        campaign_dict["schedule"] = [1.0] * 6
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(campaign_dict, environ={})


class TestOutputDirectory:
    """Test cases for the output directory override."""

    def test_environment_wins(self, campaign_dict, tmp_path):
        """Test WRSEARCH_OUTPUT_DIR replaces the configured directory."""
        target = tmp_path / "elsewhere"
        config = ExperimentConfig.from_dict(campaign_dict, environ={OUTPUT_DIR_ENV: str(target)})
        assert config.output_dir == target

    def test_reads_process_environment(self, campaign_dict, monkeypatch, tmp_path):
        """Test os.environ is consulted by default."""
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "env"))
        assert ExperimentConfig.from_dict(campaign_dict).output_dir == tmp_path / "env"

    def test_config_value_used_without_environment(self, campaign_dict):
        """Test the configured directory when no override is set."""
        config = ExperimentConfig.from_dict(campaign_dict, environ={})
        assert config.output_dir == Path(campaign_dict["output_dir"])


class TestLoadConfig:
    """Test cases for reading YAML files."""

    def test_round_trip(self, campaign_dict, tmp_path):
        """Test a dumped config loads back to the same object."""
        original = ExperimentConfig.from_dict(campaign_dict, environ={})
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(original.to_dict()), encoding="utf-8")
        assert load_config(path, environ={}) == original

    def test_missing_file(self, tmp_path):
        """Test an unreadable path."""
        with pytest.raises(ConfigError, match="Cannot read"):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        """Test a syntax error."""
        path = tmp_path / "broken.yaml"
        path.write_text("space: [\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="Invalid YAML"):
            load_config(path)

    def test_not_a_mapping(self, tmp_path):
        """Test a YAML list at the top level."""
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)
