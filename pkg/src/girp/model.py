"""Predictive models cut from a path, metrics, stopping selection, model files.

Out-of-sample prediction uses the isotonic envelope: the largest fit among
training points below ``x`` and the smallest fit among those above it,
averaged when both exist.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from girp import _kernels
from girp.dataset import Dataset, build_order
from girp.engine import Group, Path, Split
from girp.losses import EPS, GroupWeight, Loss, parse_loss

SCHEMA = "girp-path"
VERSION = 1


class ModelError(ValueError):
    pass


def _as_queries(X, d: int) -> np.ndarray:
    Q = np.asarray(X, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[None, :] if Q.shape[0] == d else Q[:, None]
    if Q.ndim != 2 or Q.shape[1] != d:
        raise ModelError(f"expected covariates of dimension {d}, got shape {np.shape(X)}")
    if not np.all(np.isfinite(Q)):
        raise ModelError("covariates must be finite")
    return np.ascontiguousarray(Q + 0.0)


@dataclass(frozen=True)
class Envelope:
    """Training points below and above each query, in CSR form."""

    below_ptr: np.ndarray
    below: np.ndarray
    above_ptr: np.ndarray
    above: np.ndarray

    @classmethod
    def build(cls, X: np.ndarray, Q: np.ndarray) -> "Envelope":
        return cls(*_kernels.envelope_index(np.ascontiguousarray(X), Q))

    def predict(self, fits: np.ndarray) -> np.ndarray:
        """Midpoint of the largest fit below and the smallest fit above.

        A missing bound falls back to the fitted range, so a query below every
        training point predicts the midpoint of min(fits) and its upper bound.
        Clamping both bounds into the range keeps the midpoint monotone.
        """
        fits = np.ascontiguousarray(fits, dtype=np.float64)
        return _kernels.envelope_predict(fits, self.below_ptr, self.below,
                                         self.above_ptr, self.above,
                                         float(fits.min()), float(fits.max()))


@dataclass(frozen=True)
class IsotonicModel:
    """Fitted values at the training points of one path record."""

    X: np.ndarray
    fits: np.ndarray
    k: int
    loss: Loss = field(repr=False)

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    @classmethod
    def from_path(cls, path: Path, k: int | None = None) -> "IsotonicModel":
        k = path.n_iterations if k is None else k
        if not 0 <= k <= path.n_iterations:
            raise ModelError(f"iteration {k} outside 0..{path.n_iterations}")
        return cls(X=path.dataset.X, fits=path.fits(k),
                   k=k, loss=path.loss)

    def predict(self, X) -> np.ndarray:
        """Predictions on the loss's fit scale; one per row of ``X``."""
        Q = _as_queries(X, self.d)
        return Envelope.build(self.X, Q).predict(self.fits)

    def predict_response(self, X) -> np.ndarray:
        return self.loss.mean_response(self.predict(X))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _mse(pred, y):
    return (pred - y) ** 2


def _poisson(pred, y):
    pred = np.maximum(pred, EPS)
    return pred - y * np.log(pred)


def _bernoulli(pred, y):
    pred = np.clip(pred, EPS, 1.0 - EPS)
    return -(y * np.log(pred) + (1.0 - y) * np.log1p(-pred))


def _huber(pred, y, delta):
    r = np.abs(pred - y)
    return np.where(r < delta, 0.5 * r * r, delta * (r - 0.5 * delta))


METRICS = ("mse", "poisson", "bernoulli", "huber")


def metric_values(metric: str, pred, y, delta: float | None = None) -> np.ndarray:
    """Per-point metric of response-scale predictions."""
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if metric == "mse":
        return _mse(pred, y)
    if metric == "poisson":
        if np.any(y < 0):
            raise ModelError("poisson metric needs nonnegative responses")
        return _poisson(pred, y)
    if metric == "bernoulli":
        if np.any((y < 0) | (y > 1)):
            raise ModelError("bernoulli metric needs responses in [0, 1]")
        return _bernoulli(pred, y)
    if metric == "huber":
        if delta is None or not delta > 0:
            raise ModelError("huber metric needs a positive delta")
        return _huber(pred, y, delta)
    raise ModelError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")


def default_metric(loss: Loss) -> str:
    return {"poisson": "poisson", "poisson-log": "poisson",
            "bernoulli": "bernoulli"}.get(loss.name, "mse")


def evaluate(model: IsotonicModel, X, y, metric: str = "mse",
             delta: float | None = None) -> float:
    """Mean per-point metric of the model's response-scale predictions."""
    if metric == "huber" and delta is None:
        delta = getattr(model.loss, "delta", None)
    return float(np.mean(metric_values(metric, model.predict_response(X), y, delta)))


def validation_curve(path: Path, X, y, metric: str = "mse",
                     delta: float | None = None) -> np.ndarray:
    """Validation metric of every record of the path, indexed by k."""
    Q = _as_queries(X, path.dataset.d)
    y = np.asarray(y, dtype=float)
    if y.shape != (Q.shape[0],):
        raise ModelError("one response per validation row is required")
    env = Envelope.build(path.dataset.X, Q)
    curve = np.empty(len(path))
    for k, fits in path.iter_fits():
        pred = path.loss.mean_response(env.predict(fits))
        curve[k] = np.mean(metric_values(metric, pred, y, delta))
    return curve


def select_stopping(curve) -> int:
    """Index of the smallest value; ties go to the smallest index."""
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0:
        raise ModelError("empty validation curve")
    return int(np.argmin(curve))


# ---------------------------------------------------------------------------
# Model file: one JSON object per line
# ---------------------------------------------------------------------------


@dataclass
class ModelFile:
    path: Path
    selected_k: int | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def model(self, k: int | None = None) -> IsotonicModel:
        if k is None:
            k = self.selected_k if self.selected_k is not None else self.path.n_iterations
        return IsotonicModel.from_path(self.path, k)


def write_model(target, path: Path, selected_k: int | None = None,
                seed: int | None = None, meta: dict | None = None) -> None:
    if selected_k is not None and not 0 <= selected_k <= path.n_iterations:
        raise ModelError(f"selected_k {selected_k} outside 0..{path.n_iterations}")
    ds = path.dataset
    header = {"schema": SCHEMA, "version": VERSION, "loss": path.loss.descriptor(),
              "fingerprint": ds.fingerprint(), "reduced": ds.order.reduced,
              "selected_k": selected_k, "seed": seed, "optimal": path.optimal,
              "stop_reason": path.stop_reason, "n_iterations": path.n_iterations,
              "meta": meta or {}}
    lines = [header]
    for x, r in zip(ds.X.tolist(), ds.raw_responses):
        lines.append({"type": "point", "x": x, "y": r.tolist()})
    for g in path.groups:
        lines.append({"type": "group", "id": g.id, "members": g.members.tolist(),
                      "weight": g.weight.value,
                      "flat": list(g.weight.flat_interval) if g.weight.flat_interval else None,
                      "clamped": g.weight.clamped, "loss": g.loss, "parent": g.parent,
                      "created": g.created, "split_at": g.split_at, "status": g.status})
    for s in path.splits:
        lines.append({"type": "split", "k": s.k, "group": s.group, "lower": s.lower,
                      "upper": s.upper, "value": s.value, "loss_total": s.loss_total})
    with open(FilePath(target), "w", encoding="utf-8") as fh:
        for obj in lines:
            fh.write(json.dumps(obj, allow_nan=False) + "\n")


def read_model(source) -> ModelFile:
    with open(FilePath(source), encoding="utf-8") as fh:
        try:
            objs = [json.loads(line) for line in fh if line.strip()]
        except json.JSONDecodeError as exc:
            raise ModelError(f"{source}: not a model file ({exc})") from None
    if not objs or objs[0].get("schema") != SCHEMA:
        raise ModelError(f"{source}: not a {SCHEMA} file")
    header = objs[0]
    if header.get("version") != VERSION:
        raise ModelError(f"{source}: unsupported version {header.get('version')!r}")
    points = [o for o in objs[1:] if o.get("type") == "point"]
    groups = [o for o in objs[1:] if o.get("type") == "group"]
    splits = [o for o in objs[1:] if o.get("type") == "split"]
    if not points or not groups:
        raise ModelError(f"{source}: missing points or groups")

    X = np.array([p["x"] for p in points], dtype=np.float64)
    counts = [len(p["y"]) for p in points]
    responses = np.array([v for p in points for v in p["y"]], dtype=np.float64)
    offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    for arr in (X, responses, offsets):
        arr.setflags(write=False)
    ds = Dataset(X=X, responses=responses, offsets=offsets,
                 order=build_order(X, header.get("reduced", True)))
    if ds.fingerprint() != header["fingerprint"]:
        raise ModelError(f"{source}: data does not match the stored fingerprint")

    loss = parse_loss(header["loss"])
    group_objs = sorted(groups, key=lambda o: o["id"])
    built = [Group(id=o["id"], members=np.array(o["members"], dtype=np.int64),
                   weight=GroupWeight(o["weight"],
                                      tuple(o["flat"]) if o["flat"] else None,
                                      o["clamped"]),
                   loss=o["loss"], parent=o["parent"], created=o["created"],
                   split_at=o["split_at"], status=o["status"])
             for o in group_objs]
    split_objs = sorted(splits, key=lambda o: o["k"])
    built_splits = [Split(k=o["k"], group=o["group"], lower=o["lower"], upper=o["upper"],
                          value=o["value"], loss_total=o["loss_total"]) for o in split_objs]
    if [s.k for s in built_splits] != list(range(1, len(built_splits) + 1)):
        raise ModelError(f"{source}: split records are not consecutive")
    path = Path(ds, loss, built, built_splits, built[0].loss,
                optimal=header["optimal"], stop_reason=header["stop_reason"])
    selected = header.get("selected_k")
    if selected is not None and not 0 <= selected <= path.n_iterations:
        raise ModelError(f"{source}: selected_k {selected} out of range")
    return ModelFile(path=path, selected_k=selected, seed=header.get("seed"),
                     meta=header.get("meta", {}))
