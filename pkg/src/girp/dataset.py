"""Observations, duplicate merging and the coordinate-wise partial order."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from girp import _kernels


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class PartialOrder:
    """Directed edges ``(i, j)`` meaning point i precedes point j.

    ``src`` and ``dst`` are parallel int64 arrays sorted by ``(src, dst)``.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    reduced: bool = True

    @property
    def m(self) -> int:
        return int(self.src.shape[0])

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.src.tolist(), self.dst.tolist()))

    def reachability(self) -> np.ndarray:
        """Dense transitive closure (strict), for small n."""
        R = np.zeros((self.n, self.n), dtype=bool)
        R[self.src, self.dst] = True
        # points are a linear extension of the order, so one sweep suffices
        for j in range(self.n):
            preds = np.nonzero(R[:, j])[0]
            if preds.size:
                R[:, j] |= R[:, preds].any(axis=1)
        return R


@dataclass(frozen=True)
class Observation:
    x: tuple[float, ...]
    y: float
    weight_count: int


@dataclass(frozen=True)
class Dataset:
    """Merged observations with their partial order.

    ``X`` holds the distinct covariate vectors in lexicographic order.  The
    raw responses of point i are ``responses[offsets[i]:offsets[i + 1]]``.
    """

    X: np.ndarray
    responses: np.ndarray
    offsets: np.ndarray
    order: PartialOrder

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def n_rows(self) -> int:
        return int(self.responses.shape[0])

    @property
    def simple(self) -> bool:
        """True when no two rows were merged."""
        return self.n_rows == self.n

    @property
    def owner(self) -> np.ndarray:
        """Point index of every raw response."""
        return np.repeat(np.arange(self.n), self.counts)

    @property
    def raw_responses(self) -> list[np.ndarray]:
        return [self.responses[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    @property
    def points(self) -> list[Observation]:
        """One Observation per merged point; ``y`` is the mean response."""
        return [Observation(tuple(x), float(np.mean(r)), int(r.size))
                for x, r in zip(self.X.tolist(), self.raw_responses)]

    def rows(self) -> list[tuple[tuple[float, ...], float]]:
        X = self.X.tolist()
        return [(tuple(X[i]), float(r)) for i, r in zip(self.owner, self.responses)]

    def gather(self, members: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Raw responses of ``members`` and the position of their owner in it."""
        if self.simple:
            return self.responses[members], np.arange(members.shape[0])
        starts = self.offsets[members]
        counts = self.offsets[members + 1] - starts
        local = np.repeat(np.arange(members.shape[0]), counts)
        shift = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
        return self.responses[np.arange(local.shape[0]) + shift], local

    def fingerprint(self) -> dict:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.offsets).tobytes())
        h.update(np.ascontiguousarray(self.responses).tobytes())
        return {"rows": self.n_rows, "points": self.n, "dimension": self.d,
                "sha256": h.hexdigest()}


def build_order(X: np.ndarray, reduce: bool = True) -> PartialOrder:
    """Dominance edges among distinct, lexicographically sorted points."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    src, dst = _kernels.dominance_edges(X, reduce)
    key = np.lexsort((dst, src))
    src, dst = src[key], dst[key]
    src.setflags(write=False)
    dst.setflags(write=False)
    return PartialOrder(n=X.shape[0], src=src, dst=dst, reduced=reduce)


def from_arrays(X, y, reduce: bool = True) -> Dataset:
    """Merge rows with equal covariates and build the order."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] < 1:
        raise DataError("covariates must be an (n, d) array with d >= 1")
    if X.shape[0] < 1:
        raise DataError("at least one row is required")
    if y.shape != (X.shape[0],):
        raise DataError(f"expected {X.shape[0]} responses, got shape {y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("covariates and responses must be finite")
    X = X + 0.0  # -0.0 -> 0.0
    U, inverse = np.unique(X, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    by_point = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=U.shape[0])
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    responses = y[by_point]
    U = np.ascontiguousarray(U)
    for arr in (U, responses, offsets):
        arr.setflags(write=False)
    return Dataset(X=U, responses=responses, offsets=offsets, order=build_order(U, reduce))


def ingest(rows, reduce: bool = True) -> Dataset:
    """Build a Dataset from ``(covariates, response)`` pairs."""
    rows = list(rows)
    if not rows:
        raise DataError("at least one row is required")
    dims = {len(np.atleast_1d(x)) for x, _ in rows}
    if len(dims) != 1:
        raise DataError(f"rows have mismatched dimensions: {sorted(dims)}")
    X = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in rows])
    y = np.array([float(v) for _, v in rows])
    return from_arrays(X, y, reduce=reduce)


def _parse_float(token: str, where: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"{where}: not a number: {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {token!r}")
    return value


def read_csv(path, require_response: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
    """Read ``x1,...,xd,y`` (or ``x1,...,xd`` when no response is needed)."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_y = bool(header) and header[-1].lower() == "y"
        xcols = header[:-1] if has_y else header
        if require_response and not has_y:
            raise DataError(f"{path}: last header column must be 'y'")
        if not xcols:
            raise DataError(f"{path}: no covariate columns")
        X, y = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            vals = [_parse_float(c.strip(), f"{path}:{lineno}") for c in row]
            if has_y:
                X.append(vals[:-1])
                y.append(vals[-1])
            else:
                X.append(vals)
    if not X:
        raise DataError(f"{path}: no data rows")
    return np.array(X, dtype=float), (np.array(y, dtype=float) if has_y else None)


def write_csv(path, X, y=None, ycol="y"):
    X = np.asarray(X, dtype=float)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(X.shape[1])] + ([ycol] if y is not None else []))
        for i, row in enumerate(X.tolist()):
            w.writerow([repr(v) for v in row] + ([repr(float(y[i]))] if y is not None else []))
