"""
Command-line interface.

    vspyct-gp train --data d.csv [--target y] [--out model.json] [tree flags]
    vspyct-gp predict --model model.json --data x.csv [--out preds.csv] [--baseline]
    vspyct-gp benchmark --data d.csv [--k 10] [--out-dir results]
    vspyct-gp experiment {extrapolation,tau-sweep} [--out-dir results]

``--data`` also accepts ``bundled:<name>`` for the packaged datasets.
Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
"""
import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import __version__
from .datasets import BUNDLED, load_bundled, read_csv
from .evaluation import (TAU_GRID, cross_validate, run_extrapolation_experiment, run_tau_sweep,
                         write_json, write_rows_csv)
from .exceptions import InvalidInput, NumericalError
from .gp import KERNEL_FAMILIES
from .persistence import load_model, save_model
from .predictor import predict_batch
from .tree import TreeConfig, fit_tree

logger = logging.getLogger("vspyct_gp")

PRED_COLUMNS = ("mean", "variance", "std", "functional_component", "routing_component",
                "mean_gate_weight")


def _tau(text):
    if text == "auto":
        return text
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("tau must be 'auto' or a positive number") from None
    if not (np.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("tau must be 'auto' or a positive number")
    return v


def _seeds(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers") from None


def _floats(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated numbers") from None


def _add_tree_flags(p):
    d = TreeConfig()
    g = p.add_argument_group("tree configuration")
    g.add_argument("--max-depth", type=int, default=d.max_depth)
    g.add_argument("--min-samples-split", type=int, default=d.min_samples_split)
    g.add_argument("--vi-epochs", type=int, default=d.vi_epochs)
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--mc-samples", type=int, default=d.mc_samples)
    g.add_argument("--tau", type=_tau, default=d.tau, help="'auto' or a positive number")
    g.add_argument("--temperature", type=float, default=d.temperature)
    g.add_argument("--noise-floor", type=float, default=d.noise_floor,
                   help="gate variance floor; default 1e-4 * var(y)")
    g.add_argument("--kernel", dest="kernel_family", choices=KERNEL_FAMILIES, default=d.kernel_family)
    g.add_argument("--gp-iters", type=int, default=d.gp_iters)
    g.add_argument("--gp-learning-rate", type=float, default=d.gp_learning_rate)
    g.add_argument("--min-leaf-gp", type=int, default=d.min_leaf_gp)
    g.add_argument("--cov-reg", type=float, default=d.cov_reg)
    g.add_argument("--seed", type=int, default=d.seed)
    g.add_argument("--threads", type=int, default=None, help="worker cap; default all cores")


def _config(args):
    names = {f.name for f in fields(TreeConfig)}
    kw = {k: v for k, v in vars(args).items() if k in names}
    return TreeConfig(**kw)


def _load_data(source, target=None):
    if source.startswith("bundled:"):
        name = source.split(":", 1)[1]
        if name not in BUNDLED:
            raise InvalidInput(f"unknown bundled dataset {name!r}; choose from {BUNDLED}")
        return load_bundled(name)
    if not os.path.isfile(source):
        raise InvalidInput(f"data file not found: {source}")
    return read_csv(source, target)


def _read_features(path, n_features, names):
    """Feature matrix for prediction: model columns by name if present, else all columns."""
    if not os.path.isfile(path):
        raise InvalidInput(f"data file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise InvalidInput(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    cols = list(range(len(header)))
    if names and all(n in header for n in names):
        cols = [header.index(n) for n in names]
    if len(cols) != n_features:
        raise InvalidInput(f"{path}: model expects {n_features} features, file has {len(cols)} columns")
    try:
        X = np.array([[float(r[j]) for j in cols] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise InvalidInput(f"{path}: unparseable row ({exc})") from exc
    X = X.reshape(-1, n_features)
    if not np.all(np.isfinite(X)):
        raise InvalidInput(f"{path}: non-finite values in data")
    return X


def cmd_train(args):
    ds = _load_data(args.data, args.target)
    config = _config(args)
    t0 = time.perf_counter()
    tree = fit_tree(ds, config)
    wall = time.perf_counter() - t0
    save_model(tree, args.out, ds.feature_names, ds.target_name)
    n_gp = sum(leaf.gp is not None for leaf in tree.leaves)
    print(f"depth={tree.depth()} leaves={len(tree.leaves)} gp_leaves={n_gp} "
          f"tau={tree.tau:.6g} wall_time={wall:.2f}s -> {args.out}")
    return 0


def cmd_predict(args):
    tree, names, _ = load_model(args.model)
    X = _read_features(args.data, tree.n_features, names)
    M = args.mc_samples or tree.config.mc_samples
    preds = predict_batch(tree, X, M, args.seed, args.baseline, args.threads or 1)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(PRED_COLUMNS)
        for p in preds:
            w.writerow([repr(float(getattr(p, c))) for c in PRED_COLUMNS])
    finally:
        if args.out:
            out.close()
    return 0


def _outputs(out_dir, stem, report):
    os.makedirs(out_dir, exist_ok=True)
    jpath = os.path.join(out_dir, f"{stem}.json")
    cpath = os.path.join(out_dir, f"{stem}.csv")
    write_json(report, jpath)
    write_rows_csv(report, cpath)
    print(f"wrote {jpath} and {cpath}")


def cmd_benchmark(args):
    ds = _load_data(args.data, args.target)
    report = cross_validate(ds, _config(args), k=args.k, seed=args.seed)
    s = report.summary
    print(f"{ds.name}: k={args.k} NRMSE gp={s['selected']['nrmse']['mean']:.4f} "
          f"baseline={s['baseline']['nrmse']['mean']:.4f}")
    _outputs(args.out_dir, f"{ds.name}_cv", report)
    return 0


def cmd_experiment(args):
    config = _config(args)
    if args.name == "extrapolation":
        report = run_extrapolation_experiment(config, args.n_train, args.n_test, args.seeds)
        for arm in ("gp", "baseline"):
            r = report.summary[arm]
            print(arm, " ".join(f"{k}: rmse={v['rmse']['mean']:.4f} var={v['mean_variance']['mean']:.4g}"
                                for k, v in r.items()))
        _outputs(args.out_dir, "extrapolation", report)
    else:
        ds = _load_data(args.data or "bundled:linear3", args.target)
        report = run_tau_sweep(ds, config, args.tau_grid, args.k, args.seeds)
        for e in report.summary:
            print(f"tau={e['tau_label']:>8} rmse={e['rmse']:.4f} mean_variance={e['mean_variance']:.4g}")
        print(f"mean uncertainty non-increasing in tau: {report.uncertainty_nonincreasing}")
        _outputs(args.out_dir, f"tau_sweep_{ds.name}", report)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="vspyct-gp", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fit a tree and write a model file")
    t.add_argument("--data", required=True)
    t.add_argument("--target")
    t.add_argument("--out", default="model.json")
    _add_tree_flags(t)
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("predict", help="predictive distribution for every row of a CSV")
    q.add_argument("--model", required=True)
    q.add_argument("--data", required=True)
    q.add_argument("--out", help="CSV path; default stdout")
    q.add_argument("--baseline", action="store_true", help="constant-prototype leaves only")
    q.add_argument("--mc-samples", type=int, default=None)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--threads", type=int, default=None)
    q.set_defaults(func=cmd_predict)

    b = sub.add_parser("benchmark", help="k-fold cross-validation, GP and baseline arms")
    b.add_argument("--data", required=True)
    b.add_argument("--target")
    b.add_argument("--k", type=int, default=10)
    b.add_argument("--out-dir", "--out", dest="out_dir", default="results")
    _add_tree_flags(b)
    b.set_defaults(func=cmd_benchmark)

    e = sub.add_parser("experiment", help="extrapolation study or tau sweep")
    e.add_argument("name", choices=("extrapolation", "tau-sweep"))
    e.add_argument("--data", help="tau-sweep dataset; default bundled:linear3")
    e.add_argument("--target")
    e.add_argument("--seeds", type=_seeds, default=None)
    e.add_argument("--n-train", type=int, default=1000)
    e.add_argument("--n-test", type=int, default=500)
    e.add_argument("--tau-grid", type=_floats, default=list(TAU_GRID))
    e.add_argument("--k", type=int, default=5)
    e.add_argument("--out-dir", "--out", dest="out_dir", default="results")
    _add_tree_flags(e)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "name", None) is not None and args.seeds is None:
        args.seeds = [0, 1, 2, 3, 4] if args.name == "extrapolation" else [0]
    try:
        return args.func(args)
    except InvalidInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
