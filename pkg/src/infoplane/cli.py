"""Command-line front end.

Subcommands: run (experiment configs), mi (standalone MI estimate),
synergy (objective reports over a CSV), datagen (dataset emission),
version. Exit codes: 0 success, 1 validation error, 2 runtime failure.
All numeric stdout uses fixed 6-decimal formatting.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, datagen, runner
from .estimators import (
    BinningSpec,
    DiscreteView,
    EstimationError,
    SampleMatrix,
    bin_equal_width,
    joint_view,
)
from .objectives import feature_synergy, gib_terms, svw_terms

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


def _read_csv(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows, dtype=np.float64)


def _columns(header, names, path):
    idx = []
    for name in names:
        if name not in header:
            raise EstimationError(f"column {name!r} not found in {path}")
        idx.append(header.index(name))
    return idx


def _binned_matrix(values, n_bins):
    mat = SampleMatrix(values, [f"c{j}" for j in range(values.shape[1])])
    binned, _ = bin_equal_width(mat, BinningSpec(n_bins))
    return binned


def cmd_run(args) -> int:
    try:
        config = runner.ExperimentConfig.from_json(args.config)
        if args.seeds:
            config.seeds = [int(s) for s in args.seeds.split(",")]
        if args.out:
            config.output_dir = args.out
        config.validate()
    except (runner.ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        trajectories, manifest = runner.run_experiment(
            config, progress=lambda seed, status: print(f"seed {seed}: {status}"))
        runner.emit(trajectories, manifest, config.output_dir)
    except (runner.ConfigError, datagen.DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for t in trajectories:
        if t.points:
            score = runner.compression_score(t) if len(t.points) >= 2 else 0.0
            print(f"{t.kind} seed={t.seed} compression_score={score:.6f}")
        else:
            print(f"{t.kind} seed={t.seed} status={t.status}")
    if any(s != "ok" for s in manifest["statuses"].values()):
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_mi(args) -> int:
    try:
        header, data = _read_csv(args.input)
        x_names = args.x.split(",")
        x_idx = _columns(header, x_names, args.input)
        y_idx = _columns(header, [args.y], args.input)
        binned = _binned_matrix(data, args.bins)
        a = joint_view(binned, x_idx)
        b = joint_view(binned, y_idx)
        if args.weights:
            w_idx = _columns(header, [args.weights], args.input)[0]
            w = data[:, w_idx]
            w = w / w.sum()
            a, b = a.with_weights(w), b.with_weights(w)
        from .estimators import mutual_information
        print(f"{mutual_information(a, b):.6f}")
        return EXIT_OK
    except (EstimationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def cmd_synergy(args) -> int:
    try:
        header, data = _read_csv(args.input)
        x_idx = _columns(header, args.x.split(","), args.input)
        z_idx = _columns(header, [args.z], args.input)
        y_idx = _columns(header, [args.y], args.input)
        if args.kind == "gib" and len(x_idx) < 2:
            print("error: --kind gib needs at least 2 x-columns", file=sys.stderr)
            return EXIT_VALIDATION
        binned = _binned_matrix(data, args.bins)
        x_cols = binned[:, x_idx]
        z_view = joint_view(binned, z_idx)
        y_view = joint_view(binned, y_idx)
        beta = float("inf") if args.beta == "inf" else float(args.beta)
        if args.kind == "syn":
            syn, terms = feature_synergy(x_cols, y_view)
            print(f"synergy      {syn:.6f}")
            report = None
        else:
            fn = gib_terms if args.kind == "gib" else svw_terms
            report = fn(x_cols, z_view, y_view, beta)
            terms = report.per_feature_terms
            print(f"prediction   {report.prediction_term:.6f}")
            print(f"complexity   {report.complexity_term:.6f}")
            print(f"objective    {report.objective_value:.6f}")
        print("feature      leave_one_out  single")
        for i, (loo, single) in enumerate(terms):
            print(f"{i:<12d} {loo:<14.6f} {single:.6f}")
        return EXIT_OK
    except (EstimationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def cmd_datagen(args) -> int:
    params = {}
    for item in args.params or []:
        key, _, value = item.partition("=")
        params[key] = value
    out = Path(args.out)
    try:
        if args.gen == "force_to_one":
            n = int(params.get("n", 3))
            p_flip = float(params.get("p_flip", 1.0 / 3.0))
            n_samples = int(params.get("n_samples", 10_000))
            xc, xn, eps = datagen.gen_force_to_one(
                datagen.NoiseSpec(p_flip, n), n_samples, args.seed)
            header = ([f"x{i + 1}" for i in range(n)]
                      + [f"x{i + 1}'" for i in range(n)] + ["eps"])
            with open(out, "w", newline="") as f:
                w = csv.writer(f, lineterminator="\n")
                w.writerow(header)
                for row in np.column_stack([xc, xn, eps]):
                    w.writerow([int(v) for v in row])
            meta = {"generator": "force_to_one", "n": n, "p_flip": p_flip,
                    "n_samples": n_samples, "seed": args.seed}
        elif args.gen == "simple_function":
            which = params.get("which", "add")
            n_samples = int(params.get("n_samples", 1500))
            ds = datagen.gen_simple_function(which, n_samples, seed=args.seed)
            ds.to_csv(out)
            meta = ds.meta
        elif args.gen == "binary_classification":
            ds = datagen.gen_binary_classification(args.seed)
            ds.to_csv(out, target_name="label")
            meta = ds.meta
        else:
            valid = "force_to_one, simple_function, binary_classification"
            print(f"error: unknown generator {args.gen!r} (valid: {valid})",
                  file=sys.stderr)
            return EXIT_VALIDATION
        out.with_suffix(out.suffix + ".meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return EXIT_OK
    except (datagen.DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infoplane",
        description="Information-plane experiments over small dense networks")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seeds", default=None, help="comma-separated override")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="worker bound; seeds currently run sequentially")
    p_run.set_defaults(fn=cmd_run)

    p_mi = sub.add_parser("mi", help="mutual information from a CSV")
    p_mi.add_argument("--input", required=True)
    p_mi.add_argument("--x", required=True, help="comma-separated column names")
    p_mi.add_argument("--y", required=True)
    p_mi.add_argument("--bins", type=int, default=30)
    p_mi.add_argument("--weights", default=None)
    p_mi.set_defaults(fn=cmd_mi)

    p_syn = sub.add_parser("synergy", help="objective report from a CSV")
    p_syn.add_argument("--input", required=True)
    p_syn.add_argument("--x", required=True)
    p_syn.add_argument("--z", required=True)
    p_syn.add_argument("--y", required=True)
    p_syn.add_argument("--bins", type=int, default=30)
    p_syn.add_argument("--kind", choices=["gib", "svw", "syn"], required=True)
    p_syn.add_argument("--beta", default="1")
    p_syn.set_defaults(fn=cmd_synergy)

    p_gen = sub.add_parser("datagen", help="emit a dataset CSV")
    p_gen.add_argument("--gen", required=True)
    p_gen.add_argument("--params", nargs="*", default=[], metavar="KEY=VALUE")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(fn=cmd_datagen)

    p_ver = sub.add_parser("version", help="print the package version")
    p_ver.set_defaults(fn=lambda args: (print(__version__), EXIT_OK)[1])

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
