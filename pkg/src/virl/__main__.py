"""
Command-line entry point for virl.

This module is executed when running:
    python -m virl <command>

or when using the installed console script:
    virl <command>

Commands:
    train              Run the imitation loop (rollouts, metric updates, policy updates)
    pretrain-metric    Train the distance network on demonstration clips only
    eval               Report the oracle return of a checkpointed policy
    export-embeddings  Write final temporal encodings as CSV for external projection
    gradcheck          Run the finite-difference gradient suite
    render-demo        Dump demonstration frames as PGM images
    serve              Run the MCP server (stdio, streamable-http or sse)

Examples:
    virl train --config run.cfg --seed 3 --out runs/walk
    virl train --help-config
    virl eval --checkpoint runs/walk/checkpoint.ckpt --episodes 10
    virl serve --transport streamable-http --port 8080

Environment Variables (CLI args take precedence, then the config file):
    VIRL_<KEY>       Any run config key, e.g. VIRL_RL_WORKERS=4
    VIRL_LOG_LEVEL   Log level (default: INFO)
    VIRL_TRANSPORT   Transport for `serve` (stdio, streamable-http, sse)
    VIRL_HOST        Host for HTTP transports (default: 127.0.0.1)
    VIRL_PORT        Port for HTTP transports (default: 8000)
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Optional

from .errors import VirlError

VALID_TRANSPORTS = ("stdio", "streamable-http", "sse")

DEFAULT_TRANSPORT = "stdio"
DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8000

logger = logging.getLogger("virl.cli")


def get_config_value(cli_value: Optional[str], env_var: str, default: str) -> str:
    """Get configuration value with priority: CLI > env var > default."""
    if cli_value is not None:
        return cli_value
    env_value = os.environ.get(env_var)
    if env_value is not None:
        return env_value
    return default


def get_port_value(cli_value: Optional[int], env_var: str, default: int) -> int:
    """Get port configuration with priority: CLI > env var > default."""
    if cli_value is not None:
        return cli_value
    env_value = os.environ.get(env_var)
    if env_value is not None:
        try:
            return int(env_value)
        except ValueError:
            print(
                f"Warning: Invalid {env_var} value '{env_value}', using default {default}",
                file=sys.stderr,
            )
            return default
    return default


def _on_off(value: str) -> bool:
    return value == "on"


def _run_options() -> argparse.ArgumentParser:
    """Flags shared by every command that resolves a RunConfig."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", type=Path, default=None, help="key=value run config file")
    parent.add_argument("--seed", type=int, default=None, help="Master seed")
    parent.add_argument("--out", default=None, help="Output directory")
    parent.add_argument("--rounds", type=int, default=None, help="Training rounds")
    parent.add_argument("--clip", default=None, help="Demonstration clip (walk, run, jump, zombie, ...)")
    parent.add_argument("--mode", choices=("spatial", "temporal", "combined"), default=None)
    parent.add_argument("--reward", choices=("normalized", "negdist"), default=None)
    parent.add_argument("--rsi", choices=("on", "off"), default=None, help="Reference state initialisation")
    parent.add_argument("--warp", choices=("on", "off"), default=None, help="Random demonstration speeds")
    parent.add_argument("--help-config", action="store_true", help="List every config key and exit")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="virl",
        description="Visual imitation with a learned recurrent distance as the reward",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Priority: CLI arguments > config file > VIRL_<KEY> environment variables > defaults

Examples:
  %(prog)s train --config run.cfg --seed 3
  %(prog)s pretrain-metric --out runs/pretrain
  %(prog)s eval --checkpoint runs/virl/checkpoint.ckpt --episodes 10
  %(prog)s serve --transport streamable-http --port 8080
""",
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    run = _run_options()

    commands.add_parser("train", parents=[run], help="Run the imitation training loop")

    pretrain = commands.add_parser("pretrain-metric", parents=[run], help="Pretrain the distance network")
    pretrain.add_argument("--steps", type=int, default=None, help="Metric steps (default: pretrain_steps)")

    evaluate = commands.add_parser("eval", parents=[run], help="Evaluate a checkpointed policy")
    evaluate.add_argument("--checkpoint", type=Path, default=None)
    evaluate.add_argument("--episodes", type=int, default=None)
    evaluate.add_argument("--baseline", action="store_true", help="Also evaluate the untrained policy")

    export = commands.add_parser("export-embeddings", parents=[run], help="Export h_T encodings as CSV")
    export.add_argument("--checkpoint", type=Path, default=None)
    export.add_argument("--output", type=Path, default=None, help="CSV path (default: <out>/embeddings.csv)")

    gradcheck = commands.add_parser("gradcheck", help="Run the gradient-check suite")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--coords", type=int, default=6, help="Coordinates sampled per parameter")

    render = commands.add_parser("render-demo", parents=[run], help="Write demonstration frames as PGM")
    render.add_argument("--frames", type=int, default=None, help="Frames to render (default: episode_steps)")
    render.add_argument("--checkpoint", type=Path, default=None, help="Also render the policy's episode")

    serve = commands.add_parser("serve", help="Run the MCP server")
    serve.add_argument(
        "--transport",
        "-t",
        choices=VALID_TRANSPORTS,
        default=None,
        help="Transport protocol to use (default: stdio, or VIRL_TRANSPORT env var)",
    )
    serve.add_argument("--host", "-H", default=None, help="Host for HTTP transports (default: 127.0.0.1)")
    serve.add_argument("--port", "-p", type=int, default=None, help="Port for HTTP transports (default: 8000)")
    return parser


def parse_args(args: Optional[list[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(args)


def config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """CLI flags as RunConfig keys; flags that were not given are left out."""
    overrides: dict[str, Any] = {
        "seed": args.seed,
        "out": args.out,
        "rounds": args.rounds,
        "clip": args.clip,
        "mode": args.mode,
        "reward": args.reward,
        "env_rsi": None if args.rsi is None else _on_off(args.rsi),
        "env_warp": None if args.warp is None else _on_off(args.warp),
    }
    return {k: v for k, v in overrides.items() if v is not None}


def resolve_config(args: argparse.Namespace) -> dict:
    """Transport, host and port for ``serve``."""
    transport = get_config_value(args.transport, "VIRL_TRANSPORT", DEFAULT_TRANSPORT)
    if transport not in VALID_TRANSPORTS:
        raise VirlError(
            f"Invalid transport '{transport}'. Must be one of: {', '.join(VALID_TRANSPORTS)}",
            {"transport": transport},
        )
    return {
        "transport": transport,
        "host": get_config_value(args.host, "VIRL_HOST", DEFAULT_HOST),
        "port": get_port_value(args.port, "VIRL_PORT", DEFAULT_PORT),
    }


def _emit(payload: dict[str, Any]) -> None:
    print(json.dumps(payload, default=str))


def _checkpoint_path(args: argparse.Namespace, out: str) -> Path:
    return args.checkpoint or Path(out) / "checkpoint.ckpt"


def _run(args: argparse.Namespace) -> int:
    # Heavy imports stay here so `virl --help` and `virl serve` start quickly
    from . import training
    from .config import describe_keys, load_run_config

    if getattr(args, "help_config", False):
        print(describe_keys())
        return 0

    if args.command == "gradcheck":
        from .diagnostics import run_gradcheck_suite

        results = run_gradcheck_suite(args.seed, args.coords)
        _emit({"passed": all(r.passed for r in results), "checks": [r.model_dump() for r in results]})
        return 0 if all(r.passed for r in results) else 1

    config = load_run_config(args.config, config_overrides(args))

    if args.command == "train":
        _emit(training.run_training(config).model_dump())
    elif args.command == "pretrain-metric":
        _emit(training.pretrain_metric(config, args.steps).model_dump())
    elif args.command == "eval":
        report = training.evaluate_checkpoint(_checkpoint_path(args, config.out), config, args.episodes)
        payload: dict[str, Any] = {"policy": report.model_dump()}
        if args.baseline:
            payload["random_baseline"] = training.random_baseline(config, args.episodes).model_dump()
        _emit(payload)
    elif args.command == "export-embeddings":
        output = args.output or Path(config.out) / "embeddings.csv"
        rows = training.export_embeddings(_checkpoint_path(args, config.out), config, output)
        _emit({"rows": rows, "path": str(output)})
    elif args.command == "render-demo":
        _emit(training.render_demo(config, args.frames, args.checkpoint))
    return 0


def main(args: Optional[list[str]] = None) -> int:
    """Main entry point. Returns the process exit status."""
    parsed = parse_args(args)

    if parsed.command == "serve":
        try:
            settings = resolve_config(parsed)
        except VirlError as e:
            print(f"Error: {e.message}", file=sys.stderr)
            return 1

        # Import the server here so logging is configured before tools register
        from .server import mcp

        transport = settings["transport"]
        if transport == "stdio":
            mcp.run()
        elif transport == "streamable-http":
            # FastMCP names streamable HTTP "http"
            mcp.run(transport="http", host=settings["host"], port=settings["port"])
        elif transport == "sse":
            mcp.run(transport="sse", host=settings["host"], port=settings["port"])
        return 0

    from .log_config import setup_json_logging

    setup_json_logging()
    try:
        return _run(parsed)
    except VirlError as e:
        logger.error(e.message, extra={"error_type": e.error_type})
        print(e.to_detail().model_dump_json(), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
