"""Command-line entry point: ``asymq {solve,train,compare,analyze}``.

Each command writes ``results.csv`` and ``summary.json`` into ``--out-dir``;
``solve`` and ``train`` also write ``tables.json``. Exit codes: 0 success,
1 usage error, 2 invalid input, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import specfile
from .errors import ShapeError, ValidationError
from .experiments import (
    COMPARE_MODES,
    DEFAULTS,
    TRAIN_MODES,
    ExperimentConfig,
    run_analyze,
    run_compare,
    run_solve,
    run_train,
)

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="asymq", description="Information-asymmetric Q-learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--spec", required=True, help="game spec JSON file")
        p.add_argument("--out-dir", required=True, help="directory for results.csv and summary.json")
        p.add_argument("--tol", type=float, default=1e-10, help="exact-solver tolerance")

    def campaign(p, modes, default_mode):
        p.add_argument("--mode", choices=modes, default=default_mode)
        p.add_argument("--steps", type=int, help="training steps (default depends on the spec kind)")
        p.add_argument("--tau", type=float, help="Boltzmann temperature (default depends on the spec kind)")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--samples", type=int, default=1000, help="evaluation rollouts")
        p.add_argument("--horizon", type=int, help="evaluation rollout length")
        p.add_argument("--repeats", type=int, default=1,
                       help="repeats; generator specs advance their seed per repeat")

    common(sub.add_parser("solve", help="exact oracle tables and greedy profiles"))
    campaign_train = sub.add_parser("train", help="train one mode and evaluate its policies")
    common(campaign_train)
    campaign(campaign_train, TRAIN_MODES, "as")
    compare = sub.add_parser("compare", help="AS/NC/JC or GAQL/EIGAQL under matched seeds")
    common(compare)
    campaign(compare, COMPARE_MODES, "strategies")
    analyze = sub.add_parser("analyze", help="exploitability, bound constants and RBE residuals")
    common(analyze)
    analyze.add_argument("--tables", required=True, help="tables.json written by solve or train")
    analyze.add_argument("--run", help="run id inside the tables file (needed if it holds several)")
    analyze.add_argument("--tau", type=float, required=True, help="temperature the GA table was trained with")
    return parser


def _config(args, spec) -> ExperimentConfig:
    steps, tau, horizon = DEFAULTS[spec.kind]
    return ExperimentConfig(
        mode=args.mode,
        steps=steps if args.steps is None else args.steps,
        tau=tau if args.tau is None else args.tau,
        seed=args.seed,
        samples=args.samples,
        horizon=horizon if args.horizon is None else args.horizon,
        repeats=args.repeats,
        tol=args.tol,
    )


def _load_tables(path, run):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    runs = doc.get("runs") if isinstance(doc, dict) else None
    if not isinstance(runs, dict) or not runs:
        raise ValidationError(f"{path}: expected an object with a non-empty 'runs' field")
    if run is None:
        if len(runs) != 1:
            raise ValidationError(f"{path}: holds {len(runs)} runs; choose one with --run")
        run = next(iter(runs))
    if run not in runs:
        raise ValidationError(f"{path}: no run {run!r}")
    return runs[run]


def _write(out_dir: Path, results, summary, tables=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "results.csv").write_text(results.csv_text(), encoding="utf-8")
    (out_dir / "summary.json").write_text(specfile.dumps(summary), encoding="utf-8")
    if tables is not None:
        doc = {"schema_version": specfile.SCHEMA_VERSION, "runs": tables}
        (out_dir / "tables.json").write_text(specfile.dumps(doc), encoding="utf-8")


def run(args) -> None:
    try:
        spec = specfile.load(args.spec)
    except OSError as exc:
        raise ValidationError(f"cannot read spec: {exc}") from None
    out_dir = Path(args.out_dir)
    if args.command == "solve":
        results, summary, tables = run_solve(spec, args.tol)
        _write(out_dir, results, summary, tables)
    elif args.command == "train":
        results, summary, tables = run_train(spec, _config(args, spec))
        _write(out_dir, results, summary, tables)
    elif args.command == "compare":
        results, summary = run_compare(spec, _config(args, spec))
        _write(out_dir, results, summary)
    else:
        try:
            tables = _load_tables(args.tables, args.run)
        except OSError as exc:
            raise ValidationError(f"cannot read tables: {exc}") from None
        results, summary = run_analyze(spec, tables, args.tau, args.tol)
        _write(out_dir, results, summary)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        run(args)
    except (ValidationError, ShapeError) as exc:
        print(f"asymq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        print(f"asymq: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
