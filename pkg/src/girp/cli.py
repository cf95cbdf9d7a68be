"""Command-line front end: ``girp fit | predict | evaluate | experiment``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from girp import dataset as ds_mod
from girp import engine
from girp.cut import cut_network, derivatives_at_weight
from girp.dataset import DataError
from girp.experiments import EXPERIMENTS, ExperimentConfig, ExperimentError, run_experiment
from girp.flow import FlowError
from girp.losses import LossError, parse_loss
from girp.model import (METRICS, IsotonicModel, ModelError, default_metric, evaluate,
                        read_model, select_stopping, validation_curve, write_model)


def _fmt(v) -> str:
    return "" if v is None else f"{v:.10g}"


def _split(n: int, frac: float, seed: int):
    if frac <= 0:
        return np.arange(n), np.arange(0)
    if frac >= 1:
        raise DataError("--valid-frac must be below 1")
    n_valid = int(round(frac * n))
    if n_valid < 1 or n_valid >= n:
        raise DataError(f"--valid-frac {frac} leaves an empty split for {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_valid:]), np.sort(perm[:n_valid])


def _dump_dimacs(path, data, loss, target):
    root = path.groups[0]
    z = derivatives_at_weight(loss, data, root.members, root.weight.value)
    net = cut_network(z, data.order.src, data.order.dst)
    with open(target, "w", encoding="utf-8") as fh:
        fh.write(net.to_dimacs())


def cmd_fit(args) -> int:
    X, y = ds_mod.read_csv(args.data)
    loss = parse_loss(args.loss, responses=y)
    loss.check_responses(y)
    sub, valid = _split(X.shape[0], args.valid_frac, args.seed)
    data = ds_mod.from_arrays(X[sub], y[sub], reduce=not args.no_reduce)

    progress = None
    if args.verbose:
        def progress(k, groups, best):
            print(f"  iteration {k}: {groups} groups, best pending cut {_fmt(best)}",
                  file=sys.stderr)

    path = engine.fit(data, loss, max_iterations=args.max_iter,
                      time_budget=args.time_budget, progress=progress)
    if args.dump_dimacs:
        _dump_dimacs(path, data, loss, args.dump_dimacs)

    metric = args.metric or default_metric(loss)
    curve = None
    if valid.size:
        curve = validation_curve(path, X[valid], y[valid], metric,
                                 delta=getattr(loss, "delta", None))
        selected = select_stopping(curve)
    else:
        selected = path.n_iterations

    print(f"loss={loss.descriptor()} rows={data.n_rows} points={data.n} edges={data.order.m} "
          f"valid_rows={valid.size} metric={metric if curve is not None else '-'}")
    print(f"{'k':>5}  {'cut_value':>14}  {'groups':>6}  {'train_loss':>14}  {'valid_metric':>14}")
    totals = path.loss_totals
    for k in range(len(path)):
        cut = None if k == 0 else path.splits[k - 1].value
        vm = None if curve is None else curve[k]
        print(f"{k:>5}  {_fmt(cut):>14}  {k + 1:>6}  {_fmt(totals[k] / data.n_rows):>14}  "
              f"{_fmt(vm):>14}")
    print(f"stop_reason={path.stop_reason} optimal={str(path.optimal).lower()} "
          f"iterations={path.n_iterations} selected_k={selected}")
    final = path.fits()
    if data.n <= 50:
        print("final_fit=" + " ".join(_fmt(v) for v in final))

    if args.out:
        meta = {"valid_frac": args.valid_frac, "metric": metric,
                "valid_curve": None if curve is None else curve.tolist()}
        write_model(args.out, path, selected_k=selected, seed=args.seed, meta=meta)
        print(f"model written to {args.out}")
    return 0


def _model_for(args):
    mf = read_model(args.model)
    k = args.k
    if k is not None and not 0 <= k <= mf.path.n_iterations:
        raise ModelError(f"unknown k {k}; the path has records 0..{mf.path.n_iterations}")
    return mf, mf.model(k)


def cmd_predict(args) -> int:
    _, model = _model_for(args)
    X, _ = ds_mod.read_csv(args.data, require_response=False)
    pred = model.predict_response(X)
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        out.write(",".join([f"x{j + 1}" for j in range(X.shape[1])] + ["prediction"]) + "\n")
        for row, p in zip(X.tolist(), pred.tolist()):
            out.write(",".join(repr(v) for v in row + [p]) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_evaluate(args) -> int:
    mf, model = _model_for(args)
    X, y = ds_mod.read_csv(args.data)
    metric = args.metric or default_metric(mf.path.loss)
    if args.all:
        curve = validation_curve(mf.path, X, y, metric,
                                 delta=getattr(mf.path.loss, "delta", None))
        print(f"{'k':>5}  {metric:>14}")
        for k, v in enumerate(curve):
            print(f"{k:>5}  {_fmt(v):>14}")
        print(f"best_k={select_stopping(curve)}")
        return 0
    value = evaluate(model, X, y, metric)
    print(f"k={model.k} metric={metric} value={_fmt(value)} rows={X.shape[0]}")
    return 0


def cmd_experiment(args) -> int:
    x_range = tuple(args.x_range) if args.x_range else None
    cfg = ExperimentConfig(name=args.name, d=args.d, n_train=args.n_train, n_test=args.n_test,
                           seeds=args.seeds, seed=args.seed, valid_frac=args.valid_frac,
                           x_range=x_range, n=args.n, loss=args.loss)
    report = run_experiment(cfg)
    print(report.format())
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="girp", description="Generalized isotonic regression "
                                "by recursive partitioning.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a path of isotonic models from a CSV")
    f.add_argument("--data", required=True, help="CSV with header x1,...,xd,y")
    f.add_argument("--loss", default="l2",
                   help="l2 | huber[:delta=D] | poisson | bernoulli | pnorm:p=P | poisson-log")
    f.add_argument("--valid-frac", type=float, default=0.0,
                   help="share of rows held out to select the stopping point")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--metric", choices=METRICS)
    f.add_argument("--out", help="model file to write")
    f.add_argument("--no-reduce", action="store_true",
                   help="keep every dominance edge instead of the transitive reduction")
    f.add_argument("--max-iter", type=int)
    f.add_argument("--time-budget", type=float, help="seconds")
    f.add_argument("--dump-dimacs", metavar="PATH",
                   help="write the root cut network in DIMACS max-flow format")
    f.add_argument("-v", "--verbose", action="store_true")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict from a model file")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True, help="CSV with header x1,...,xd[,y]")
    pr.add_argument("--k", type=int, help="path record to use (default: selected)")
    pr.add_argument("--out", help="output CSV (default: stdout)")
    pr.set_defaults(func=cmd_predict)

    ev = sub.add_parser("evaluate", help="score a model file on labelled data")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--k", type=int)
    ev.add_argument("--metric", choices=METRICS)
    ev.add_argument("--all", action="store_true", help="print the metric for every k")
    ev.set_defaults(func=cmd_evaluate)

    ex = sub.add_parser("experiment", help="run a synthetic experiment")
    ex.add_argument("name", choices=EXPERIMENTS)
    ex.add_argument("--d", type=int, default=2)
    ex.add_argument("--n-train", type=int, default=1200)
    ex.add_argument("--n-test", type=int, default=300)
    ex.add_argument("--seeds", type=int, default=5)
    ex.add_argument("--seed", type=int, default=0)
    ex.add_argument("--valid-frac", type=float, default=0.2)
    ex.add_argument("--x-range", type=float, nargs=2, metavar=("LO", "HI"))
    ex.add_argument("--n", type=int, default=1000, help="points for the timing experiment")
    ex.add_argument("--loss", help="override the experiment's loss")
    ex.add_argument("--json", help="also write the report as JSON")
    ex.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DataError, LossError, ModelError, ExperimentError, FlowError, OSError) as exc:
        print(f"girp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
