"""Tests for run configuration loading and hashing."""

import pytest
from pydantic import ValidationError

from virl.config import (
    RunConfig,
    build_config,
    describe_keys,
    environment_values,
    load_run_config,
    parse_config_text,
)
from virl.errors import ConfigError


class TestDefaults:
    def test_published_defaults(self):
        config = RunConfig()
        assert config.metric_w_d == -5.0
        assert config.rl_gamma == 0.95
        assert config.rl_hidden == (512, 256)
        assert config.env_control_rate == 30.0
        assert config.metric_embed_dim == 64

    def test_config_is_frozen(self):
        with pytest.raises(ValidationError):
            RunConfig().seed = 3

    def test_derived_settings(self, tiny_config):
        assert tiny_config.env_config().frame_size == 16
        assert tiny_config.architecture().embed_dim == 8
        assert tiny_config.loss_weights().w_d == -5.0


class TestParsing:
    def test_comments_and_blank_lines(self):
        text = "# run settings\n\nseed = 3  # inline\nclip=run\n"
        assert parse_config_text(text) == {"seed": "3", "clip": "run"}

    def test_line_without_equals(self):
        with pytest.raises(ConfigError, match="expected key=value"):
            parse_config_text("seed 3\n", source="run.txt")

    def test_string_values_are_coerced(self):
        config = build_config({"env_rsi": "false", "rl_hidden": "64, 32", "metric_lr": "3e-4"})
        assert config.env_rsi is False
        assert config.rl_hidden == (64, 32)
        assert config.metric_lr == pytest.approx(3e-4)

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as exc_info:
            build_config({"seeed": 1})
        assert exc_info.value.details["unknown"] == ["seeed"]
        assert "--help-config" in exc_info.value.suggestion

    def test_out_of_range_value(self):
        with pytest.raises(ConfigError) as exc_info:
            build_config({"rl_gamma": "1.0"})
        assert exc_info.value.details["errors"][0]["key"] == "rl_gamma"

    def test_frame_size_multiple_of_four(self):
        with pytest.raises(ConfigError):
            build_config({"env_frame_size": 30})


class TestSources:
    def test_priority_order(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("seed=4\nclip=jump\n")
        environ = {"VIRL_SEED": "3", "VIRL_ROUNDS": "7"}
        config = load_run_config(path, overrides={"seed": 5, "clip": None}, environ=environ)
        assert config.seed == 5
        assert config.clip == "jump"
        assert config.rounds == 7

    def test_file_beats_environment(self, tmp_path):
        path = tmp_path / "run.txt"
        path.write_text("seed=4\n")
        assert load_run_config(path, environ={"VIRL_SEED": "3"}).seed == 4

    def test_environment_values_only_known_keys(self):
        assert environment_values({"VIRL_SEED": "9", "VIRL_BOGUS": "1", "HOME": "/root"}) == {"seed": "9"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_run_config(tmp_path / "missing.txt", environ={})


class TestDumpAndHash:
    def test_dump_round_trip(self, tiny_config):
        again = build_config(parse_config_text(tiny_config.dump()))
        assert again == tiny_config
        assert again.config_hash() == tiny_config.config_hash()

    def test_save_and_load(self, tiny_config, tmp_path):
        path = tiny_config.save(tmp_path / "config.txt")
        assert load_run_config(path, environ={}) == tiny_config

    def test_dump_format(self, tiny_config):
        lines = tiny_config.dump().splitlines()
        assert "rl_hidden=8,8" in lines
        assert "env_rsi=true" in lines
        assert lines[0] == "seed=1"

    def test_hash_tracks_values(self, tiny_config):
        assert tiny_config.with_overrides(seed=2).config_hash() != tiny_config.config_hash()
        assert len(tiny_config.config_hash()) == 16

    def test_describe_keys(self):
        text = describe_keys()
        assert "metric_w_d" in text
        assert len(text.splitlines()) == len(RunConfig.model_fields)
