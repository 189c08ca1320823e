"""Command line interface: ingest, serve, query, eval, snapshot."""

from __future__ import annotations

import argparse
import sys

from .engine import Engine, load_config
from .errors import FreqSketchError
from .evalrun import StreamSpec, run_eval
from .server import format_count, serve


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def _build_config(args: argparse.Namespace):
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise FreqSketchError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides=overrides)


def _cmd_ingest(args: argparse.Namespace) -> int:
    config = _build_config(args)
    engine = Engine(config)
    summary = engine.ingest_file(args.file)
    t, mass = engine.stats()
    print(f"{summary.as_text()} t={t} mass={mass}")
    if args.snapshot_out:
        engine.save_snapshot(args.snapshot_out)
        print(f"snapshot written to {args.snapshot_out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    config = _build_config(args)
    engine = None
    if args.snapshot:
        engine = Engine.load_snapshot(args.snapshot, config)
    serve(config, engine)
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    config = _build_config(args) if args.config or args.overrides else None
    engine = Engine.load_snapshot(args.snapshot, config)
    report = engine.query(args.token.encode(), args.epoch)
    print(f"{format_count(report.value)} {report.method}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _build_config(args)
    spec = None
    if args.input is None:
        spec = StreamSpec(
            keys=args.keys,
            epochs=args.epochs,
            tokens_per_epoch=args.tokens,
            exponent=args.exponent,
            drift=args.drift,
            seed=args.seed,
        )
    result = run_eval(
        config,
        spec=spec,
        input_path=args.input,
        csv_path=args.out,
        figures_dir=args.figures,
        key_sample=args.key_sample,
    )
    for estimator in ("time", "item", "interp", "interp-raw"):
        absolute, relative = result.totals(estimator)
        print(f"{estimator}: absolute={absolute:.2f} relative={relative:.2f}")
    print(f"rows={len(result.rows)} epochs={result.t} keys={result.keys}")
    if result.csv_path:
        print(f"csv written to {result.csv_path}")
    for path in result.figure_paths:
        print(f"figure written to {path}")
    return 0


def _cmd_snapshot(args: argparse.Namespace) -> int:
    if args.action == "save":
        engine = Engine.load_snapshot(args.path)
        engine.save_snapshot(args.out)
        print(f"snapshot re-written to {args.out}")
    else:
        engine = Engine.load_snapshot(args.path)
        t, mass = engine.stats()
        print(f"t={t} mass={mass} levels={engine.config.max_level} "
              f"depth={engine.config.sketch.depth} log_width={engine.config.sketch.log_width}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqsketch",
        description="Streaming frequency sketches with temporal aggregation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="replay a file into a fresh engine")
    p.add_argument("file")
    p.add_argument("--snapshot-out", help="write the resulting engine snapshot")
    _add_config_options(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("serve", help="run the line protocol server")
    p.add_argument("--snapshot", help="preload engine state from a snapshot")
    _add_config_options(p)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("query", help="one-shot query against a snapshot")
    p.add_argument("token")
    p.add_argument("epoch", type=int)
    p.add_argument("--snapshot", required=True)
    _add_config_options(p)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("eval", help="score estimators against exact counts")
    p.add_argument("--input", help="replay file instead of the synthetic stream")
    p.add_argument("--out", help="CSV output path")
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--keys", type=int, default=300)
    p.add_argument("--epochs", type=int, default=64)
    p.add_argument("--tokens", type=int, default=2000)
    p.add_argument("--exponent", type=float, default=1.1)
    p.add_argument("--drift", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--key-sample", type=int, default=None)
    _add_config_options(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("snapshot", help="validate or inspect a snapshot")
    p.add_argument("action", choices=["save", "load"])
    p.add_argument("path")
    p.add_argument("out", nargs="?", help="output path (save)")
    p.set_defaults(func=_cmd_snapshot)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "snapshot" and args.action == "save" and not args.out:
        print("snapshot save needs an output path", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (FreqSketchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
