"""Command line interface.

Subcommands: discover (learn rules from a CSV), simulate (generate synthetic
benchmark data), benchmark (run a settings x effect-size grid), evaluate
(score a saved report against ground truth). Every run echoes its resolved
configuration to config_echo.json in the output directory. Exit codes: 0 on
success, 1 on validation problems (bad flags, files, schemas), 2 on runtime
failures; failures also leave a machine-readable error.json.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .data import load_csv, schema_from_json
from .errors import DiffsubError, MissingTruth, SchemaMismatch
from .evaluation import BenchmarkGrid, benchmark, effect_metrics, recovery, summarize
from .synthgen import SynthConfig, generate, write_outputs
from .trainer import TrainConfig, discover_multiple, train_restarts

log = logging.getLogger("diffsub")


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _threads() -> int:
    """Worker cap from DIFFSUB_THREADS (default 1)."""
    raw = os.environ.get("DIFFSUB_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise SchemaMismatch(f"DIFFSUB_THREADS must be an integer, got {raw!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffsub",
        description="Discover interpretable box rules where two groups "
        "diverge (or agree) exceptionally in a target variable.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    pd = sub.add_parser("discover", help="learn rules from a CSV dataset")
    pd.add_argument("--data", required=True, help="input CSV path")
    pd.add_argument("--schema", required=True, help="schema JSON path")
    pd.add_argument("--config", help="training config JSON (flags override it)")
    pd.add_argument("--out", required=True, help="output directory")
    pd.add_argument("--seed", type=int)
    pd.add_argument("--lambda", dest="lam", type=float,
                    help="covariate-dependence penalty weight")
    pd.add_argument("--gamma", type=float, help="generality exponent")
    pd.add_argument("--epochs", type=int)
    pd.add_argument("--lr", type=float)
    pd.add_argument("--refit-every", type=int)
    pd.add_argument("--restarts", type=int)
    pd.add_argument("--min-divergence", action="store_true",
                    help="search for agreement instead of divergence")
    pd.add_argument("--subgroups", type=int, default=1,
                    help="discover this many subgroups iteratively")
    pd.add_argument("--no-scale", action="store_true",
                    help="skip min-max feature scaling")

    ps = sub.add_parser("simulate", help="generate synthetic benchmark data")
    ps.add_argument("--setting", required=True,
                    help="observational | randomized | demographic | "
                    "full-mediation-control | null-effect-control")
    ps.add_argument("--tau", type=float, default=2.0,
                    help="group contrast inside the planted subgroup")
    ps.add_argument("--eta", type=float, default=1.0,
                    help="group contrast outside the planted subgroup")
    ps.add_argument("--n", type=int, default=2000)
    ps.add_argument("--d", type=int, default=5)
    ps.add_argument("--sigma2", type=float, default=0.5, help="noise variance")
    ps.add_argument("--n-relevant", type=int, default=None,
                    help="features carrying signal; the rest are pure noise "
                         "(default: all)")
    ps.add_argument("--coverage", type=float, default=0.3,
                    help="target subgroup coverage")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True, help="output directory")

    pb = sub.add_parser("benchmark", help="run a settings x tau x replicate grid")
    pb.add_argument("--grid", required=True, help="grid definition JSON")
    pb.add_argument("--out", required=True, help="output directory")
    pb.add_argument("--seed", type=int, help="override the grid's base seed")

    pe = sub.add_parser("evaluate", help="score a report against ground truth")
    pe.add_argument("--report", required=True, help="report JSON from discover")
    pe.add_argument("--truth", required=True, help="CSV with truth columns")
    pe.add_argument("--schema", help="schema JSON for the truth CSV "
                    "(defaults to schema.json next to it)")
    pe.add_argument("--out", required=True, help="output directory")
    return parser


def _load_json_file(path, what):
    if not os.path.exists(path):
        raise SchemaMismatch(f"{what} file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{what} file {path} is not valid JSON: {exc}")


def _resolve_train_config(args) -> TrainConfig:
    base = {}
    if args.config:
        base = _load_json_file(args.config, "config")
        if not isinstance(base, dict):
            raise SchemaMismatch("config JSON must be an object")
    overrides = {
        "seed": args.seed,
        "lambda": args.lam,
        "gamma": args.gamma,
        "epochs": args.epochs,
        "lr": args.lr,
        "refit_every": args.refit_every,
        "restarts": args.restarts,
    }
    for key, val in overrides.items():
        if val is not None:
            base[key] = val
    if args.min_divergence:
        base["direction"] = "minimize"
    try:
        return TrainConfig.from_dict(base)
    except (ValueError, TypeError) as exc:
        raise SchemaMismatch(f"bad training config: {exc}")


def _cmd_discover(args) -> int:
    cfg = _resolve_train_config(args)
    schema = schema_from_json(_load_json_file(args.schema, "schema"))
    if not os.path.exists(args.data):
        raise SchemaMismatch(f"data file not found: {args.data}")
    ds = load_csv(args.data, schema, scale=not args.no_scale)

    os.makedirs(args.out, exist_ok=True)
    echo = cfg.to_json()
    echo.update({
        "command": "discover",
        "data": os.path.abspath(args.data),
        "schema": os.path.abspath(args.schema),
        "subgroups": args.subgroups,
        "scale": not args.no_scale,
        "version": __version__,
    })
    _dump_json(echo, os.path.join(args.out, "config_echo.json"))

    if args.subgroups <= 1:
        report = train_restarts(ds, cfg)
        reports = [report]
        _dump_json(report.to_json(), os.path.join(args.out, "report.json"))
    else:
        reports = discover_multiple(ds, cfg, args.subgroups)
        _dump_json(
            {"subgroups": [r.to_json() for r in reports]},
            os.path.join(args.out, "report.json"),
        )
    with open(os.path.join(args.out, "trace.jsonl"), "w") as fh:
        for k, rep in enumerate(reports):
            for row in rep.trace:
                if len(reports) > 1:
                    row = {"subgroup": k, **row}
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    for rep in reports:
        print(rep.rule_json.get("text", "(whole population)"))
    return 0


def _cmd_simulate(args) -> int:
    cfg = SynthConfig(
        setting=args.setting,
        n=args.n,
        d=args.d,
        tau=args.tau,
        eta=args.eta,
        sigma2=args.sigma2,
        target_coverage=args.coverage,
        seed=args.seed,
        n_relevant=args.n_relevant,
    )
    ds, truth = generate(cfg)
    paths = write_outputs(ds, truth, args.out)
    echo = cfg.to_json()
    echo.update({"command": "simulate", "version": __version__})
    _dump_json(echo, os.path.join(args.out, "config_echo.json"))
    print(paths["data"])
    return 0


def _cmd_benchmark(args) -> int:
    grid = BenchmarkGrid.from_json(_load_json_file(args.grid, "benchmark grid"))
    if args.seed is not None:
        from dataclasses import replace
        grid = replace(grid, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    echo = grid.to_json()
    echo.update({
        "command": "benchmark",
        "workers": _threads(),
        "version": __version__,
    })
    _dump_json(echo, os.path.join(args.out, "config_echo.json"))
    out_csv = os.path.join(args.out, "results.csv")
    rows, failures = benchmark(grid, out_csv, workers=_threads())
    _dump_json(summarize(rows), os.path.join(args.out, "summary.json"))
    print(out_csv)
    if failures:
        print(f"{len(failures)} cell(s) failed; see results.csv.failures.json",
              file=sys.stderr)
    return 0


def _rule_membership_from_report(report: dict, ds) -> np.ndarray:
    """Apply a report's rule (original units) to a dataset's raw features."""
    rule = report.get("rule", report)
    conditions = rule.get("conditions")
    if conditions is None:
        raise SchemaMismatch("report JSON has no rule.conditions")
    name_to_col = {name: j for j, name in enumerate(ds.feature_names)}
    member = np.ones(ds.n, dtype=bool)
    for cond in conditions:
        name = cond.get("feature")
        if name not in name_to_col:
            raise SchemaMismatch(
                f"rule condition references unknown feature {name!r}"
            )
        col = ds.features_raw[:, name_to_col[name]]
        member &= (col > float(cond["lo"])) & (col < float(cond["hi"]))
    return member.astype(np.int8)


def _cmd_evaluate(args) -> int:
    report = _load_json_file(args.report, "report")
    if "subgroups" in report:  # multi-subgroup report: score the first rule
        if not report["subgroups"]:
            raise SchemaMismatch("report contains no subgroups")
        report = report["subgroups"][0]
    schema_path = args.schema or os.path.join(
        os.path.dirname(os.path.abspath(args.truth)), "schema.json"
    )
    schema = schema_from_json(_load_json_file(schema_path, "schema"))
    ds = load_csv(args.truth, schema)
    if ds.truth_membership is None:
        raise MissingTruth("truth CSV has no truth-membership column")
    pred = _rule_membership_from_report(report, ds)
    rec = recovery(pred, ds.truth_membership)
    metrics = {"recovery": rec.to_json(), "effect": None}
    if ds.truth_effect is not None:
        try:
            metrics["effect"] = effect_metrics(ds, pred).to_json()
        except DiffsubError as exc:
            metrics["effect_error"] = {"kind": exc.kind, "message": str(exc)}
    os.makedirs(args.out, exist_ok=True)
    echo = {
        "command": "evaluate",
        "report": os.path.abspath(args.report),
        "truth": os.path.abspath(args.truth),
        "schema": os.path.abspath(schema_path),
        "version": __version__,
    }
    _dump_json(echo, os.path.join(args.out, "config_echo.json"))
    _dump_json(metrics, os.path.join(args.out, "metrics.json"))
    print(json.dumps(rec.to_json(), sort_keys=True))
    return 0


def run(argv=None) -> int:
    """Parse arguments and run one command; returns the process exit code."""
    logging.basicConfig(
        level=os.environ.get("DIFFSUB_LOGLEVEL", "WARNING"),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that is a validation failure here
        return 0 if not exc.code else 1
    out_dir = getattr(args, "out", None)

    def write_error(kind, message, code):
        print(f"error: {message}", file=sys.stderr)
        if out_dir:
            try:
                os.makedirs(out_dir, exist_ok=True)
                _dump_json(
                    {"kind": kind, "message": str(message)},
                    os.path.join(out_dir, "error.json"),
                )
            except OSError:
                pass
        return code

    try:
        if args.command == "discover":
            return _cmd_discover(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "benchmark":
            return _cmd_benchmark(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        return 1
    except DiffsubError as exc:
        return write_error(exc.kind, exc, exc.exit_code)
    except (ValueError, TypeError, OSError) as exc:
        return write_error(type(exc).__name__, exc, 1)
    except Exception as exc:  # unexpected: runtime failure
        return write_error(type(exc).__name__, exc, 2)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
