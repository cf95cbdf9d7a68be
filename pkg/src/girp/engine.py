"""Recursive partitioning driver.

``fit`` starts from one group holding every point and repeatedly performs
the most improving isotonic split among the pending candidates, until no
group admits an improving split.  Every intermediate partition (fitted at
its group weights) is an isotonic model; the last one is the global
optimum.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator

import numpy as np

from girp.cut import CutProblem, CutResult, derivatives_at_weight, solve_cut
from girp.dataset import Dataset
from girp.losses import EPS, GroupWeight, Loss


@dataclass
class Group:
    id: int
    members: np.ndarray
    weight: GroupWeight
    loss: float
    parent: int | None
    created: int
    split_at: int | None = None
    status: str = "active"
    cut: CutResult | None = field(default=None, repr=False)


@dataclass(frozen=True)
class Split:
    k: int
    group: int
    lower: int
    upper: int
    value: float
    loss_total: float


@dataclass(frozen=True)
class PathRecord:
    k: int
    partition: list[tuple[np.ndarray, float]]
    cut_performed: tuple[int, float] | None
    loss_total: float
    group_ids: list[int] = field(default_factory=list, repr=False)


class Path:
    """Sequence of isotonic models, one per iteration.

    Stored as the group tree plus the list of splits; records are rebuilt
    on demand so memory stays linear in the total group size.
    """

    def __init__(self, dataset: Dataset, loss: Loss, groups: list[Group],
                 splits: list[Split], root_loss: float, optimal: bool,
                 stop_reason: str):
        self.dataset = dataset
        self.loss = loss
        self.groups = groups
        self.splits = splits
        self.root_loss = root_loss
        self.optimal = optimal
        self.stop_reason = stop_reason

    def __len__(self) -> int:
        return len(self.splits) + 1

    def __getitem__(self, k: int) -> PathRecord:
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(f"iteration {k} outside 0..{len(self) - 1}")
        return self.record(k)

    def __iter__(self) -> Iterator[PathRecord]:
        return (self.record(k) for k in range(len(self)))

    @property
    def n_iterations(self) -> int:
        return len(self.splits)

    @property
    def loss_totals(self) -> np.ndarray:
        return np.array([self.root_loss] + [s.loss_total for s in self.splits])

    def alive(self, k: int) -> list[Group]:
        return [g for g in self.groups
                if g.created <= k and (g.split_at is None or g.split_at > k)]

    def record(self, k: int) -> PathRecord:
        live = self.alive(k)
        cut = None if k == 0 else (self.splits[k - 1].group, self.splits[k - 1].value)
        return PathRecord(k=k, partition=[(g.members, g.weight.value) for g in live],
                          cut_performed=cut,
                          loss_total=float(self.loss_totals[k]),
                          group_ids=[g.id for g in live])

    def labels(self, k: int | None = None) -> np.ndarray:
        k = self.n_iterations if k is None else k
        lab = np.empty(self.dataset.n, dtype=np.int64)
        for g in self.alive(k):
            lab[g.members] = g.id
        return lab

    def fits(self, k: int | None = None) -> np.ndarray:
        k = self.n_iterations if k is None else k
        out = np.empty(self.dataset.n)
        for g in self.alive(k):
            out[g.members] = g.weight.value
        return out

    def iter_fits(self) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(k, fits)`` for every k; the array is updated in place."""
        fits = np.full(self.dataset.n, self.groups[0].weight.value)
        yield 0, fits
        for s in self.splits:
            for gid in (s.lower, s.upper):
                g = self.groups[gid]
                fits[g.members] = g.weight.value
            yield s.k, fits

    @property
    def root_weight(self) -> float:
        return self.groups[0].weight.value


def _child_edges(side, src, dst, which):
    keep = (side[src] == which) & (side[dst] == which)
    return src[keep], dst[keep]


def fit(dataset: Dataset, loss: Loss, max_iterations: int | None = None,
        time_budget: float | None = None,
        progress: Callable[[int, int, float | None], None] | None = None) -> Path:
    """Run the partitioning to optimality or until a limit is hit.

    Parameters
    ----------
    max_iterations : stop after this many splits.
    time_budget : seconds; checked between iterations only.
    progress : called as ``progress(k, n_groups, best_candidate_value)``
        after every iteration.

    Returns
    -------
    Path whose ``optimal`` flag is False when a limit stopped the run.
    """
    loss.check_responses(dataset.responses)
    t0 = time.perf_counter()
    n = dataset.n
    pos = np.empty(n, dtype=np.int64)
    side = np.zeros(n, dtype=np.int8)
    groups: list[Group] = []
    edges: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    heap: list[tuple[float, int]] = []

    def make_group(members, src, dst, parent, k):
        y, _ = dataset.gather(members)
        weight = loss.group_weight(y)
        if weight.flat_interval is not None:
            # flat minimizer: the cut sends zero-derivative points to the lower
            # side, which is the tie-break of a vanishing upward tilt of the
            # loss; the matching representative is the left end of the interval
            weight = replace(weight, value=weight.flat_interval[0])
        g = Group(id=len(groups), members=members, weight=weight,
                  loss=loss.total(weight.value, y), parent=parent, created=k)
        groups.append(g)
        z = derivatives_at_weight(loss, dataset, members, weight.value)
        pos[members] = np.arange(members.shape[0])
        cut = solve_cut(CutProblem(members, z, pos[src], pos[dst]))
        if cut.trivial:
            g.status = "block"
        else:
            g.cut = cut
            edges[g.id] = (src, dst)
            heapq.heappush(heap, (cut.value, g.id))
        return g

    root = make_group(np.arange(n, dtype=np.int64), dataset.order.src,
                      dataset.order.dst, None, 0)
    total = root.loss
    splits: list[Split] = []
    stop = "optimal"
    if progress:
        progress(0, 1, heap[0][0] if heap else None)

    while heap:
        if max_iterations is not None and len(splits) >= max_iterations:
            stop = "max_iterations"
            break
        if time_budget is not None and time.perf_counter() - t0 > time_budget:
            stop = "time_budget"
            break
        value, gid = heapq.heappop(heap)
        g = groups[gid]
        cut = g.cut
        src, dst = edges.pop(gid)
        k = len(splits) + 1
        side[cut.lower] = 0
        side[cut.upper] = 1
        lo = make_group(cut.lower, *_child_edges(side, src, dst, 0), gid, k)
        hi = make_group(cut.upper, *_child_edges(side, src, dst, 1), gid, k)
        g.split_at = k
        g.status = "split"
        g.cut = None
        total = total - g.loss + lo.loss + hi.loss
        splits.append(Split(k=k, group=gid, lower=lo.id, upper=hi.id,
                            value=value, loss_total=total))
        if progress:
            progress(k, len(groups) - k, heap[0][0] if heap else None)

    return Path(dataset, loss, groups, splits, root.loss, optimal=stop == "optimal",
                stop_reason=stop)


# ---------------------------------------------------------------------------
# Certification
# ---------------------------------------------------------------------------


@dataclass
class CertificateReport:
    stationarity: list[tuple[int, float]] = field(default_factory=list)
    isotonicity: list[tuple[int, int, float, float]] = field(default_factory=list)
    improving_cuts: list[tuple[int, float]] = field(default_factory=list)
    max_residual: float = 0.0
    n_blocks: int = 0

    @property
    def stationary(self) -> bool:
        return not self.stationarity

    @property
    def isotonic(self) -> bool:
        return not self.isotonicity

    @property
    def no_improving_cut(self) -> bool:
        return not self.improving_cuts

    @property
    def passed(self) -> bool:
        return self.stationary and self.isotonic and self.no_improving_cut

    def summary(self) -> str:
        def mark(ok):
            return "ok" if ok else "FAIL"
        return (f"blocks={self.n_blocks} stationarity={mark(self.stationary)} "
                f"(max residual {self.max_residual:.3g}) "
                f"isotonicity={mark(self.isotonic)} "
                f"no-improving-cut={mark(self.no_improving_cut)}")


def _edges_by_block(labels, src, dst):
    same = labels[src] == labels[dst]
    src, dst = src[same], dst[same]
    order = np.argsort(labels[src], kind="stable")
    src, dst = src[order], dst[order]
    keys = labels[src]
    out = {}
    if keys.size:
        cuts = np.flatnonzero(np.diff(keys)) + 1
        for a, b in zip(np.concatenate(([0], cuts)), np.concatenate((cuts, [keys.size]))):
            out[int(keys[a])] = (src[a:b], dst[a:b])
    return out


def _bracketed(loss, dataset, members, w, tol):
    """Summed derivative changes sign within one ulp of ``w``.

    A derivative that is infinitely steep at a response (p-norm with p near
    1) can leave a large residual at the float nearest the true root.
    """
    below = float(np.sum(derivatives_at_weight(loss, dataset, members, np.nextafter(w, -np.inf))))
    above = float(np.sum(derivatives_at_weight(loss, dataset, members, np.nextafter(w, np.inf))))
    return below <= tol and above >= -tol


def certify(dataset: Dataset, loss: Loss, record: PathRecord,
            stationarity_tol: float = 1e-6, isotonic_tol: float = 1e-9) -> CertificateReport:
    """Check the optimality conditions of a final partition.

    (i) the summed derivative of every block vanishes at its weight (or
    points outward at a clamped domain boundary); (ii) fits are isotonic
    along every order edge; (iii) no block admits an improving split.
    """
    report = CertificateReport(n_blocks=len(record.partition))
    n = dataset.n
    labels = np.full(n, -1, dtype=np.int64)
    fits = np.empty(n)
    for b, (members, w) in enumerate(record.partition):
        labels[members] = b
        fits[members] = w
    if np.any(labels < 0):
        raise ValueError("partition does not cover every point")

    lo, hi = loss.domain
    src, dst = dataset.order.src, dataset.order.dst
    by_block = _edges_by_block(labels, src, dst)
    pos = np.empty(n, dtype=np.int64)
    for b, (members, w) in enumerate(record.partition):
        z = derivatives_at_weight(loss, dataset, members, w)
        residual = float(np.sum(z))
        at_lo = np.isfinite(lo) and w <= lo + EPS * (1 + 1e-6)
        at_hi = np.isfinite(hi) and w >= hi - EPS * (1 + 1e-6)
        if at_lo:
            bad = residual < -stationarity_tol
        elif at_hi:
            bad = residual > stationarity_tol
        else:
            bad = abs(residual) > stationarity_tol and not _bracketed(
                loss, dataset, members, w, stationarity_tol)
            report.max_residual = max(report.max_residual, abs(residual))
        if bad:
            report.stationarity.append((b, residual))
        bsrc, bdst = by_block.get(b, (src[:0], dst[:0]))
        pos[members] = np.arange(members.shape[0])
        cut = solve_cut(CutProblem(np.asarray(members), z, pos[bsrc], pos[bdst]))
        if not cut.trivial:
            report.improving_cuts.append((b, cut.value))

    viol = fits[src] > fits[dst] + isotonic_tol
    for i, j in zip(src[viol].tolist(), dst[viol].tolist()):
        report.isotonicity.append((i, j, float(fits[i]), float(fits[j])))
    return report


# ---------------------------------------------------------------------------
# Path invariants
# ---------------------------------------------------------------------------


@dataclass
class PathCheck:
    isotonic_violations: int = 0
    refinement_violations: int = 0
    loss_increases: int = 0
    too_many_records: bool = False

    @property
    def ok(self) -> bool:
        return not (self.isotonic_violations or self.refinement_violations
                    or self.loss_increases or self.too_many_records)


def check_path(path: Path, isotonic_tol: float = 1e-9, loss_tol: float = 1e-9) -> PathCheck:
    """Isotonicity of every record, no-regret refinement, monotone loss."""
    out = PathCheck()
    src, dst = path.dataset.order.src, path.dataset.order.dst
    for _, fits in path.iter_fits():
        out.isotonic_violations += int(np.count_nonzero(fits[src] > fits[dst] + isotonic_tol))
    final = path.labels()
    final_sizes = np.bincount(final, minlength=len(path.groups))
    for g in path.groups:
        inside = np.bincount(final[g.members], minlength=len(path.groups))
        touched = inside > 0
        out.refinement_violations += int(np.count_nonzero(inside[touched] != final_sizes[touched]))
    totals = path.loss_totals
    scale = 1.0 + np.abs(totals[:-1])
    out.loss_increases = int(np.count_nonzero(np.diff(totals) > loss_tol * scale))
    out.too_many_records = len(path) > path.dataset.n
    return out
