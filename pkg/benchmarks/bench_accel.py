"""Compare the numba kernels with their fallbacks.

Per-kernel timings run in this process (compiled kernel vs. the numpy
variant or, for max-flow, the same source as plain Python).  The end-to-end
fit runs twice in subprocesses, once with ``GIRP_DISABLE_NUMBA=1``.

    python3 benchmarks/bench_accel.py [--n 1000] [--d 4] [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from girp import _kernels
from girp._accel import NUMBA_ENABLED, pure
from girp.cut import cut_network, derivatives_at_weight
from girp.dataset import from_arrays
from girp.losses import Huber
from girp.flow import tolerance


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def simulate(n, d, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 2, size=(n, d))
    y = X.prod(axis=1) + rng.normal(0, d, size=n)
    y[rng.choice(n, max(1, n // 200), replace=False)] *= 20
    return X, y


def kernel_table(n, d, repeat):
    X, y = simulate(n, d)
    data = from_arrays(X, y)
    Xs = np.ascontiguousarray(data.X)
    Q = np.ascontiguousarray(simulate(n // 4, d, seed=1)[0])
    loss = Huber(float(np.std(y, ddof=1)))
    w = loss.group_weight(y).value
    z = derivatives_at_weight(loss, data, np.arange(data.n), w)
    net = cut_network(z, data.order.src, data.order.dst)
    caps, eps = net.finite_caps(), tolerance(net.caps)
    flow_args = (net.node_count, net.source, net.sink, net.tails, net.heads, caps, eps)
    env = _kernels.envelope_index_numpy(Xs, Q)
    fits = np.sort(y)[: data.n].astype(np.float64)

    rows = [
        ("dominance_edges", lambda: _kernels.dominance_edges_loop(Xs, True),
         lambda: _kernels.dominance_edges_numpy(Xs, True)),
        ("envelope_index", lambda: _kernels.envelope_index_loop(Xs, Q),
         lambda: _kernels.envelope_index_numpy(Xs, Q)),
        ("envelope_predict", lambda: _kernels.envelope_predict_loop(fits, *env, fits.min(), fits.max()),
         lambda: _kernels.envelope_predict_numpy(fits, *env, fits.min(), fits.max())),
        ("dinic (root cut)", lambda: _kernels.dinic(*flow_args),
         lambda: pure(_kernels.dinic)(*flow_args)),
    ]
    out = []
    for name, fast, slow in rows:
        fast()  # compile outside the timing
        out.append((name, best_of(fast, repeat), best_of(slow, max(1, repeat // 3))))
    return data, out


FIT_SNIPPET = """
import json, time, numpy as np
from girp import engine, from_arrays, Huber
rng = np.random.default_rng(0)
n, d = {n}, {d}
X = rng.uniform(0, 2, size=(n, d)); y = X.prod(axis=1) + rng.normal(0, d, size=n)
y[rng.choice(n, max(1, n // 200), replace=False)] *= 20
loss = Huber(float(np.std(y, ddof=1)))
engine.fit(from_arrays(X[:50], y[:50]), loss)  # warm-up / compile
t0 = time.perf_counter(); p = engine.fit(from_arrays(X, y), loss)
print(json.dumps({{"seconds": time.perf_counter() - t0, "iterations": p.n_iterations,
                   "loss": p.loss_totals[-1]}}))
"""


def end_to_end(n, d, disable):
    env = dict(os.environ)
    env["GIRP_DISABLE_NUMBA"] = "1" if disable else "0"
    out = subprocess.run([sys.executable, "-c", FIT_SNIPPET.format(n=n, d=d)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--d", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not NUMBA_ENABLED:
        sys.exit("run the benchmark with numba enabled (unset GIRP_DISABLE_NUMBA)")

    data, rows = kernel_table(args.n, args.d, args.repeat)
    print(f"n={args.n} d={args.d} points={data.n} edges={data.order.m}")
    print(f"{'kernel':<20} {'numba s':>10} {'fallback s':>11} {'speedup':>8}")
    for name, fast, slow in rows:
        print(f"{name:<20} {fast:>10.4f} {slow:>11.4f} {slow / fast:>8.1f}")

    jit = end_to_end(args.n, args.d, disable=False)
    py = end_to_end(args.n, args.d, disable=True)
    same = abs(jit["loss"] - py["loss"]) <= 1e-9 * (1 + abs(jit["loss"])) \
        and jit["iterations"] == py["iterations"]
    print(f"{'full fit':<20} {jit['seconds']:>10.3f} {py['seconds']:>11.3f} "
          f"{py['seconds'] / jit['seconds']:>8.1f}")
    print(f"iterations {jit['iterations']} / {py['iterations']}, "
          f"final loss agrees: {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
