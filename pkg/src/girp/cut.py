"""Optimal isotonic two-way split of a group.

Given derivatives ``z`` at the group weight, find the sign vector
``x in {-1, +1}`` that is nondecreasing along every order edge and minimizes
``z @ x``.  Writing ``x = 2u - 1`` this is a minimum-weight upper set
(closure) problem, solved as an s-t minimum cut::

    s -> i   capacity -z_i   for z_i < 0
    i -> t   capacity  z_i   for z_i > 0
    i -> j   infinite        for each order edge (i, j)

The canonical min cut's source side is the upper part of the split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from girp.flow import INF, FlowNetwork, max_flow


@dataclass(frozen=True)
class CutProblem:
    """``src``/``dst`` index into ``members`` (local positions)."""

    members: np.ndarray
    z: np.ndarray
    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        if self.members.shape[0] == 0:
            raise ValueError("cut problem needs at least one member")
        if self.z.shape != self.members.shape:
            raise ValueError("one derivative per member is required")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("derivatives must be finite")
        g = self.members.shape[0]
        if self.src.size and (min(self.src.min(), self.dst.min()) < 0 or
                              max(self.src.max(), self.dst.max()) >= g):
            raise ValueError("edges must join members of the group")


@dataclass(frozen=True)
class CutResult:
    """A split of a group into ``lower`` (x = -1) and ``upper`` (x = +1).

    ``value`` is ``sum z[upper] - sum z[lower]`` for the returned sides;
    ``optimum`` is the LP optimum found by the min cut, which differs from
    ``value`` only for trivial results (group declared a block).
    """

    value: float
    optimum: float
    lower: np.ndarray
    upper: np.ndarray
    trivial: bool
    tol: float = field(repr=False, default=0.0)


def cut_tolerance(z: np.ndarray) -> float:
    return 1e-9 * (1.0 + float(np.sum(np.abs(z))))


def cut_network(z: np.ndarray, src: np.ndarray, dst: np.ndarray) -> FlowNetwork:
    g = z.shape[0]
    s, t = g, g + 1
    nodes = np.arange(g, dtype=np.int64)
    neg = z < 0
    pos = z > 0
    tails = np.concatenate((np.full(neg.sum(), s, np.int64), nodes[pos], src))
    heads = np.concatenate((nodes[neg], np.full(pos.sum(), t, np.int64), dst))
    caps = np.concatenate((-z[neg], z[pos], np.full(src.shape[0], INF)))
    return FlowNetwork(g + 2, s, t, tails.astype(np.int64), heads.astype(np.int64), caps)


def upper_set(z: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Boolean mask of the minimal minimum-weight upper set."""
    g = z.shape[0]
    if not np.any(z < 0):
        return np.zeros(g, dtype=bool)
    cut = max_flow(cut_network(z, src, dst))
    mask = np.zeros(g, dtype=bool)
    mask[cut.source_side] = True
    return mask


def solve_cut(problem: CutProblem) -> CutResult:
    z = np.asarray(problem.z, dtype=float)
    members = problem.members
    tol = cut_tolerance(z)
    total = float(np.sum(z))
    up = upper_set(z, problem.src, problem.dst)
    optimum = 2.0 * float(np.sum(z[up])) - total
    n_up = int(up.sum())
    if optimum >= -tol or n_up == 0 or n_up == z.shape[0]:
        return CutResult(value=total, optimum=optimum, lower=members[:0],
                         upper=members, trivial=True, tol=tol)
    return CutResult(value=optimum, optimum=optimum, lower=members[~up],
                     upper=members[up], trivial=False, tol=tol)


def derivatives_at_weight(loss, dataset, members: np.ndarray, w: float) -> np.ndarray:
    """Per-member derivative at ``w``, summed over each point's raw responses."""
    loss.check_fit(w)
    y, owner = dataset.gather(members)
    deriv = np.asarray(loss.derivative(w, y), dtype=float)
    if dataset.simple:
        return deriv
    return np.bincount(owner, weights=deriv, minlength=members.shape[0])
