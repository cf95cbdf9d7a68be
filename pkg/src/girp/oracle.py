"""Reference solvers used to verify the partitioning engine.

Nothing here shares code with the engine's cut or weight machinery except
the pointwise ``value``/``derivative`` of a loss.
"""

from __future__ import annotations

import math

import numpy as np

from girp.dataset import Dataset
from girp.losses import EPS, Loss

MAX_BRUTE_FORCE = 8


def pava(y) -> np.ndarray:
    """Least-squares nondecreasing fit of a sequence (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("pava needs at least one value")
    sums, counts = [], []
    for v in y.tolist():
        sums.append(v)
        counts.append(1)
        while len(sums) > 1 and sums[-2] * counts[-1] > sums[-1] * counts[-2]:
            s, c = sums.pop(), counts.pop()
            sums[-1] += s
            counts[-1] += c
    return np.repeat([s / c for s, c in zip(sums, counts)], counts)


def _argmin_interval(loss: Loss, y: np.ndarray) -> tuple[float, float]:
    """[left, right] where the summed derivative changes sign, by bisection."""
    lo_dom, hi_dom = loss.domain
    a = min(max(float(y.min()), lo_dom + EPS), hi_dom - EPS)
    b = min(max(float(y.max()), lo_dom + EPS), hi_dom - EPS)

    def S(w):
        return math.fsum(np.asarray(loss.derivative(w, y), dtype=float).tolist())

    # widen until the bracket holds a sign change (log-scale losses need this)
    width = max(b - a, 1.0)
    for _ in range(64):
        if S(a) <= 0 or a <= lo_dom + EPS:
            break
        a = max(a - width, lo_dom + EPS)
        width *= 2.0
    width = max(b - a, 1.0)
    for _ in range(64):
        if S(b) >= 0 or b >= hi_dom - EPS:
            break
        b = min(b + width, hi_dom - EPS)
        width *= 2.0
    if S(a) > 0:
        return a, a
    if S(b) < 0:
        return b, b

    def boundary(pred):
        # smallest w in [a, b] with pred(w) true; pred is monotone
        lo, hi = a, b
        if pred(lo):
            return lo
        for _ in range(2000):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if pred(mid):
                hi = mid
            else:
                lo = mid
        return hi

    left = boundary(lambda w: S(w) >= 0)
    right = boundary(lambda w: S(w) > 0)
    return left, max(left, right)


def _closure(dataset: Dataset) -> np.ndarray:
    X = dataset.X
    R = np.all(X[:, None, :] <= X[None, :, :], axis=2)
    np.fill_diagonal(R, False)
    return R


def brute_force(dataset: Dataset, loss: Loss) -> tuple[np.ndarray, float]:
    """Exact optimum by enumerating block structures.

    Every set partition of the points into order-convex groups is tried.
    Each group may take any value in the argmin interval of its summed
    loss; a partition is feasible when such values can be chosen
    nondecreasing along the order.  Returns ``(fits, objective)``.
    """
    n = dataset.n
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force supports at most {MAX_BRUTE_FORCE} points, got {n}")
    loss.check_responses(dataset.responses)
    R = _closure(dataset)
    raw = dataset.raw_responses
    pairs = [(i, j) for i in range(n) for j in range(n) if R[i, j]]

    convex_cache: dict[int, bool] = {}
    info_cache: dict[int, tuple[float, float, float]] = {}

    def convex(mask):
        if mask not in convex_cache:
            inside = [i for i in range(n) if mask >> i & 1]
            ok = True
            for i in inside:
                for j in inside:
                    if R[i, j]:
                        between = R[i] & R[:, j]
                        if any(between[k] and not mask >> k & 1 for k in range(n)):
                            ok = False
                            break
                if not ok:
                    break
            convex_cache[mask] = ok
        return convex_cache[mask]

    def info(mask):
        if mask not in info_cache:
            y = np.concatenate([raw[i] for i in range(n) if mask >> i & 1])
            left, right = _argmin_interval(loss, y)
            mid = 0.5 * (left + right)
            info_cache[mask] = (left, right, math.fsum(np.asarray(loss.value(mid, y)).tolist()))
        return info_cache[mask]

    best_obj = math.inf
    best_fit = None
    assign = [0] * n

    def evaluate(n_groups):
        nonlocal best_obj, best_fit
        masks = [0] * n_groups
        for i, g in enumerate(assign):
            masks[g] |= 1 << i
        if not all(convex(m) for m in masks):
            return
        infos = [info(m) for m in masks]
        obj = math.fsum(inf[2] for inf in infos)
        if obj >= best_obj:
            return
        c = [inf[0] for inf in infos]
        for _ in range(n_groups + 1):
            changed = False
            for i, j in pairs:
                gi, gj = assign[i], assign[j]
                if gi != gj and c[gj] < c[gi]:
                    c[gj] = c[gi]
                    changed = True
            if not changed:
                break
        for g, inf in enumerate(infos):
            if c[g] > inf[1] + 1e-9 * (1.0 + abs(inf[1])):
                return
        best_obj = obj
        best_fit = np.array([c[assign[i]] for i in range(n)])

    def recurse(i, n_groups):
        if i == n:
            evaluate(n_groups)
            return
        for g in range(n_groups + 1):
            assign[i] = g
            recurse(i + 1, max(n_groups, g + 1))

    recurse(0, 0)
    return best_fit, best_obj


def objective(dataset: Dataset, loss: Loss, fits) -> float:
    """Summed loss of per-point fits over all raw responses."""
    fits = np.asarray(fits, dtype=float)
    return float(np.sum(loss.value(fits[dataset.owner], dataset.responses)))


def barlow_brunk_transform(l2_fit, phi_inverse) -> np.ndarray:
    """Map a least-squares isotonic fit through ``phi_inverse`` elementwise."""
    with np.errstate(all="ignore"):
        out = np.asarray(phi_inverse(np.asarray(l2_fit, dtype=float)), dtype=float)
    if not np.all(np.isfinite(out)):
        raise ValueError("fit value outside the range of phi")
    return out
