"""Tests for the command-line interface.

Covers argument parsing, the run-config flags, transport resolution for
``serve`` (CLI > env var > default) and the exit status of each command.
"""

import json
import logging
import os
from unittest import mock

import pytest

from virl.__main__ import (
    DEFAULT_HOST,
    DEFAULT_PORT,
    DEFAULT_TRANSPORT,
    VALID_TRANSPORTS,
    config_overrides,
    get_config_value,
    get_port_value,
    main,
    parse_args,
    resolve_config,
)
from virl.errors import VirlError
from virl.mcp_instance import mcp
from virl.models import GradCheckResult
from virl.training import Networks


@pytest.fixture(autouse=True)
def restore_root_logging():
    """main() points the root handler at the current (captured) stderr."""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def config_file(tiny_config, tmp_path):
    """The tiny run config written as a key=value file."""
    return tiny_config.save(tmp_path / "run.cfg")


class TestParseArgs:
    """Tests for parse_args."""

    def test_command_is_required(self):
        """No command is a usage error (exit status 2)."""
        with pytest.raises(SystemExit) as exc_info:
            parse_args([])
        assert exc_info.value.code == 2

    def test_main_without_args_exits_2(self):
        with pytest.raises(SystemExit) as exc_info:
            main([])
        assert exc_info.value.code == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit):
            parse_args(["fly"])

    def test_run_flags(self):
        args = parse_args(["train", "--seed", "3", "--rsi", "off", "--warp", "on", "--mode", "spatial"])
        assert config_overrides(args) == {"seed": 3, "env_rsi": False, "env_warp": True, "mode": "spatial"}

    def test_unset_flags_are_dropped(self):
        assert config_overrides(parse_args(["train"])) == {}

    def test_invalid_mode_exits(self):
        with pytest.raises(SystemExit):
            parse_args(["train", "--mode", "fuzzy"])

    def test_serve_flags(self):
        args = parse_args(["serve", "-t", "sse", "-H", "0.0.0.0", "-p", "9000"])
        assert (args.transport, args.host, args.port) == ("sse", "0.0.0.0", 9000)

    def test_serve_defaults_are_none(self):
        """Unset serve flags stay None so env vars can fill them."""
        args = parse_args(["serve"])
        assert args.transport is None and args.host is None and args.port is None

    def test_invalid_transport_exits(self):
        with pytest.raises(SystemExit):
            parse_args(["serve", "--transport", "carrier-pigeon"])


class TestConfigValues:
    """Tests for get_config_value and get_port_value."""

    def test_cli_value_takes_precedence(self):
        with mock.patch.dict(os.environ, {"VIRL_HOST": "env-host"}):
            assert get_config_value("cli-host", "VIRL_HOST", "default") == "cli-host"

    def test_env_var_used_when_no_cli(self):
        with mock.patch.dict(os.environ, {"VIRL_HOST": "env-host"}):
            assert get_config_value(None, "VIRL_HOST", "default") == "env-host"

    def test_default_port(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            assert get_port_value(None, "VIRL_PORT", 8000) == 8000

    def test_invalid_port_env_falls_back(self, capsys):
        with mock.patch.dict(os.environ, {"VIRL_PORT": "not-a-number"}):
            assert get_port_value(None, "VIRL_PORT", 8000) == 8000
        assert "Invalid VIRL_PORT" in capsys.readouterr().err


class TestResolveConfig:
    """Transport resolution for serve."""

    def test_all_defaults(self):
        with mock.patch.dict(os.environ, {}, clear=True):
            settings = resolve_config(parse_args(["serve"]))
        assert settings == {"transport": DEFAULT_TRANSPORT, "host": DEFAULT_HOST, "port": DEFAULT_PORT}

    def test_env_vars_used_when_no_cli(self):
        env = {"VIRL_TRANSPORT": "streamable-http", "VIRL_HOST": "0.0.0.0", "VIRL_PORT": "9100"}
        with mock.patch.dict(os.environ, env, clear=True):
            settings = resolve_config(parse_args(["serve"]))
        assert settings == {"transport": "streamable-http", "host": "0.0.0.0", "port": 9100}

    def test_cli_beats_env(self):
        with mock.patch.dict(os.environ, {"VIRL_TRANSPORT": "sse"}, clear=True):
            settings = resolve_config(parse_args(["serve", "-t", "stdio"]))
        assert settings["transport"] == "stdio"

    def test_invalid_transport_from_env(self):
        with mock.patch.dict(os.environ, {"VIRL_TRANSPORT": "bogus"}, clear=True):
            with pytest.raises(VirlError, match="Invalid transport"):
                resolve_config(parse_args(["serve"]))

    def test_valid_transports(self):
        assert VALID_TRANSPORTS == ("stdio", "streamable-http", "sse")


class TestServe:
    def test_invalid_env_transport_returns_1(self, capsys):
        with mock.patch.dict(os.environ, {"VIRL_TRANSPORT": "bogus"}, clear=True):
            assert main(["serve"]) == 1
        assert "Invalid transport" in capsys.readouterr().err

    def test_streamable_http_runs_http(self):
        with mock.patch.dict(os.environ, {}, clear=True), mock.patch.object(mcp, "run") as run:
            assert main(["serve", "-t", "streamable-http", "-p", "9001"]) == 0
        run.assert_called_once_with(transport="http", host=DEFAULT_HOST, port=9001)

    def test_stdio_is_default(self):
        with mock.patch.dict(os.environ, {}, clear=True), mock.patch.object(mcp, "run") as run:
            assert main(["serve"]) == 0
        run.assert_called_once_with()


class TestCommands:
    """Exit status and JSON output of the run commands."""

    def test_help_config(self, capsys):
        assert main(["train", "--help-config"]) == 0
        out = capsys.readouterr().out
        assert "metric_w_d" in out and "rl_samples_per_round" in out

    def test_train_then_eval(self, config_file, capsys):
        assert main(["train", "--config", str(config_file), "--rounds", "0"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["rounds"] == 0

        assert main(["eval", "--config", str(config_file), "--episodes", "1", "--baseline"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["policy"]["episodes"] == 1
        assert report["random_baseline"]["episodes"] == 1

    def test_eval_with_mismatched_checkpoint(self, tiny_config, config_file, tmp_path, capsys):
        checkpoint = Networks.initialise(tiny_config.with_overrides(rl_hidden=(16, 16))).save(
            tmp_path / "other.ckpt", tiny_config
        )
        status = main(["eval", "--config", str(config_file), "--checkpoint", str(checkpoint)])
        assert status == 1
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error_type"] == "checkpoint_error"

    def test_unknown_config_key(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("seed=1\nlearning_rate=3\n")
        assert main(["train", "--config", str(path)]) == 1
        error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert error["error_type"] == "config_error"

    def test_render_demo(self, config_file, capsys):
        assert main(["render-demo", "--config", str(config_file), "--frames", "2"]) == 0
        assert json.loads(capsys.readouterr().out)["frames"] == 2

    def test_gradcheck_failure_exits_1(self, monkeypatch, capsys):
        failing = GradCheckResult(name="broken", max_rel_error=0.5, coords_checked=3, tolerance=1e-4, passed=False)
        monkeypatch.setattr("virl.diagnostics.run_gradcheck_suite", lambda seed, coords: [failing])
        assert main(["gradcheck"]) == 1
        assert json.loads(capsys.readouterr().out)["passed"] is False
