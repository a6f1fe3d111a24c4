"""Command-line entry point.

    tensevo evolve --config experiment.json [--workers N]
    tensevo replay --genome champion.json --config experiment.json --out traj.csv
    tensevo dump-module [--out module.json] [--strut-length L]
    tensevo serve [--host H] [--port P]

Exit codes: 0 success, 1 usage or config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import ConfigError, load_champion, load_config, replay, run_experiment
from .geometry import DEFAULT_STRUT_LENGTH, build_canonical_module, template_as_dict

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


def _cmd_evolve(args) -> int:
    config = load_config(args.config)
    rows = run_experiment(config, workers=args.workers)
    out_dir = Path(config.output_directory)
    print(f"completed {len(rows)} runs -> {out_dir}")
    print((out_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


def _cmd_replay(args) -> int:
    config = load_config(args.config)
    champion = load_champion(args.genome)
    out_path = Path(args.out) if args.out else None
    fitness, gait, warnings = replay(champion, config, out_path)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    stored = champion.get("fitness")
    print(f"fitness: {fitness!r}")
    print(f"gait: {gait.label if gait else 'diverged'}")
    if stored is not None:
        match = "matches" if stored == fitness else f"differs from stored {stored!r}"
        print(f"stored fitness {match}")
    if out_path is not None:
        print(f"trajectory -> {out_path}")
    return EXIT_OK


def _cmd_dump_module(args) -> int:
    template = build_canonical_module(args.strut_length)
    text = json.dumps(template_as_dict(template), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"module template -> {args.out}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensevo",
        description="Evolve morphology and control of modular tensegrity robots.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run an evolution batch from a JSON config")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--workers", type=int, default=None, help="parallel runs (default: config)")
    p.set_defaults(func=_cmd_evolve)

    p = sub.add_parser("replay", help="re-simulate a stored champion genome")
    p.add_argument("--genome", required=True, help="champion JSON artifact")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default=None, help="trajectory CSV output path")
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("dump-module", help="write the canonical module template as JSON")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--strut-length", type=float, default=DEFAULT_STRUT_LENGTH)
    p.set_defaults(func=_cmd_dump_module)

    p = sub.add_parser("serve", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
