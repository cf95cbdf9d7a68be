"""s-t maximum flow / minimum cut.

Infinite capacities are given as ``math.inf`` and replaced internally by a
finite sentinel larger than every finite cut.  The returned cut is the
canonical one: its source side is everything reachable from the source in
the final residual graph, i.e. the unique minimal source side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from girp import _kernels

INF = math.inf
ABS_TOL = 1e-12


class FlowError(ValueError):
    pass


@dataclass(frozen=True)
class FlowNetwork:
    node_count: int
    source: int
    sink: int
    tails: np.ndarray
    heads: np.ndarray
    caps: np.ndarray

    @classmethod
    def from_arcs(cls, node_count, source, sink, arcs) -> "FlowNetwork":
        arcs = list(arcs)
        tails = np.array([a[0] for a in arcs], dtype=np.int64)
        heads = np.array([a[1] for a in arcs], dtype=np.int64)
        caps = np.array([a[2] for a in arcs], dtype=np.float64)
        return cls(node_count, source, sink, tails, heads, caps)

    def __post_init__(self):
        n, s, t = self.node_count, self.source, self.sink
        if s == t:
            raise FlowError("source and sink must differ")
        for v in (s, t):
            if not 0 <= v < n:
                raise FlowError(f"terminal {v} outside 0..{n - 1}")
        if not (self.tails.shape == self.heads.shape == self.caps.shape):
            raise FlowError("arc arrays must have equal length")
        if self.tails.size:
            if self.tails.min() < 0 or self.heads.min() < 0 or \
                    self.tails.max() >= n or self.heads.max() >= n:
                raise FlowError("arc endpoint outside the node range")
            if np.any(self.tails == self.heads):
                raise FlowError("self-loops are not allowed")
        if np.any(np.isnan(self.caps)) or np.any(self.caps < 0):
            raise FlowError("capacities must be nonnegative")
        inf = np.isinf(self.caps)
        if np.any(inf & ((self.tails == s) | (self.tails == t) |
                         (self.heads == s) | (self.heads == t))):
            raise FlowError("infinite arcs may not touch the source or sink")

    @property
    def interior(self) -> np.ndarray:
        nodes = np.arange(self.node_count)
        return nodes[(nodes != self.source) & (nodes != self.sink)]

    def finite_caps(self) -> np.ndarray:
        """Capacities with infinities replaced by the sentinel."""
        caps = self.caps
        inf = np.isinf(caps)
        if not inf.any():
            return caps.astype(np.float64, copy=True)
        out = caps.copy()
        out[inf] = 2.0 * (float(caps[~inf].sum()) + 1.0)
        return out

    def to_dimacs(self) -> str:
        """DIMACS max-flow text (1-based nodes); infinite arcs use the sentinel."""
        caps = self.finite_caps()
        lines = [f"c girp cut network",
                 f"p max {self.node_count} {self.tails.size}",
                 f"n {self.source + 1} s",
                 f"n {self.sink + 1} t"]
        lines += [f"a {u + 1} {v + 1} {c!r}"
                  for u, v, c in zip(self.tails.tolist(), self.heads.tolist(), caps.tolist())]
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MinCut:
    flow_value: float
    source_side: np.ndarray
    arc_flow: np.ndarray = field(repr=False)

    def capacity(self, net: FlowNetwork) -> float:
        side = np.zeros(net.node_count, dtype=bool)
        side[self.source_side] = True
        side[net.source] = True
        crossing = side[net.tails] & ~side[net.heads]
        return float(net.finite_caps()[crossing].sum())


def tolerance(caps: np.ndarray) -> float:
    """Residual threshold: 1e-12 absolute, scaled up for large capacities."""
    finite = caps[np.isfinite(caps)]
    scale = float(finite.max()) if finite.size else 0.0
    return ABS_TOL * max(1.0, scale)


def max_flow(net: FlowNetwork) -> MinCut:
    caps = net.finite_caps()
    eps = tolerance(net.caps)
    value, forward, reach = _kernels.dinic(
        net.node_count, net.source, net.sink, net.tails, net.heads, caps, eps)
    reach[net.source] = False
    reach[net.sink] = False
    return MinCut(flow_value=float(value), source_side=np.nonzero(reach)[0],
                  arc_flow=caps - forward)
