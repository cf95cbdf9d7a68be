"""Synthetic experiment harness: path regularization and timing studies.

Each seed simulates a training and a test set, fits a path on a subtraining
split, picks the stopping point on the held-out validation split, and scores
both the selected and the final model on the test set against a parametric
baseline trained on the full training set.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from girp import dataset as ds_mod
from girp import engine
from girp.losses import Huber, Loss, PoissonNLL, parse_loss
from girp.model import IsotonicModel, metric_values, select_stopping, validation_curve

OUTLIER_FRACTION = 0.005
OUTLIER_FACTOR = 20.0


class ExperimentError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Data generators
# ---------------------------------------------------------------------------


def _poisson1(rng, n, d, x_range):
    X = rng.uniform(*(x_range or (0.0, 10.0)), size=(n, d))
    return X, rng.poisson(np.prod(np.sqrt(X), axis=1)).astype(float)


def _poisson2(rng, n, d, x_range):
    X = rng.uniform(*(x_range or (5.0, 10.0)), size=(n, d))
    return X, rng.poisson(np.sum(X * X, axis=1)).astype(float)


def _huber1(rng, n, d, x_range):
    X = rng.uniform(*(x_range or (0.0, 3.0)), size=(n, d))
    return X, np.prod(X, axis=1) + rng.normal(0.0, d, size=n)


def _huber2(rng, n, d, x_range):
    X = rng.uniform(*(x_range or (0.0, 5.0)), size=(n, d))
    return X, np.sum(X * X, axis=1) + rng.normal(0.0, 1.5 * d, size=n)


def _timing(rng, n, d, x_range):
    X = rng.uniform(*(x_range or (0.0, 2.0)), size=(n, d))
    return X, np.prod(X, axis=1) + rng.normal(0.0, d, size=n)


GENERATORS = {"poisson1": _poisson1, "poisson2": _poisson2,
              "huber1": _huber1, "huber2": _huber2, "timing": _timing}
EXPERIMENTS = tuple(GENERATORS)


def add_outliers(y: np.ndarray, rng, fraction=OUTLIER_FRACTION, factor=OUTLIER_FACTOR):
    """Multiply a random ``fraction`` of the responses by ``factor`` (at least one)."""
    y = y.copy()
    count = max(1, int(round(fraction * y.shape[0])))
    idx = rng.choice(y.shape[0], size=count, replace=False)
    y[idx] *= factor
    return y


def simulate(name: str, n: int, d: int, rng, x_range=None, outliers: bool = False):
    if name not in GENERATORS:
        raise ExperimentError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    X, y = GENERATORS[name](rng, n, d, x_range)
    if outliers:
        y = add_outliers(y, rng)
    return X, y


# ---------------------------------------------------------------------------
# Parametric baselines
# ---------------------------------------------------------------------------


def _design(X, center, scale):
    Z = (X - center) / scale
    return np.column_stack((np.ones(X.shape[0]), Z))


@dataclass(frozen=True)
class LinearBaseline:
    """Linear predictor on standardized covariates, optionally with a log link."""

    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    log_link: bool

    def predict(self, X) -> np.ndarray:
        eta = _design(np.asarray(X, dtype=float), self.center, self.scale) @ self.coef
        return np.exp(eta) if self.log_link else eta


def _standardize(X):
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return center, scale


def fit_poisson_glm(X, y) -> LinearBaseline:
    """Poisson regression with log link, fit by L-BFGS on the mean NLL."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    center, scale = _standardize(X)
    A = _design(X, center, scale)
    n = y.shape[0]

    def objective(beta):
        eta = np.clip(A @ beta, -50.0, 50.0)
        mu = np.exp(eta)
        return float(np.sum(mu - y * eta)) / n, A.T @ (mu - y) / n

    beta0 = np.zeros(A.shape[1])
    beta0[0] = np.log(max(y.mean(), 1e-3))
    res = minimize(objective, beta0, jac=True, method="L-BFGS-B")
    return LinearBaseline(res.x, center, scale, log_link=True)


def fit_huber_linear(X, y, delta: float) -> LinearBaseline:
    """Linear regression under Huber loss, fit by L-BFGS."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    center, scale = _standardize(X)
    A = _design(X, center, scale)
    n = y.shape[0]

    def objective(beta):
        r = A @ beta - y
        a = np.abs(r)
        val = np.where(a < delta, 0.5 * r * r, delta * (a - 0.5 * delta))
        return float(np.sum(val)) / n, A.T @ np.clip(r, -delta, delta) / n

    beta0 = np.zeros(A.shape[1])
    beta0[0] = np.median(y)
    res = minimize(objective, beta0, jac=True, method="L-BFGS-B")
    return LinearBaseline(res.x, center, scale, log_link=False)


# ---------------------------------------------------------------------------
# Protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    d: int = 2
    n_train: int = 1200
    n_test: int = 300
    seeds: int = 5
    seed: int = 0
    valid_frac: float = 0.2
    x_range: tuple[float, float] | None = None
    n: int = 1000
    loss: str | None = None

    def __post_init__(self):
        if self.name not in GENERATORS:
            raise ExperimentError(
                f"unknown experiment {self.name!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.d < 1 or self.seeds < 1:
            raise ExperimentError("d and seeds must be positive")
        if not 0.0 < self.valid_frac < 1.0:
            raise ExperimentError("valid_frac must lie in (0, 1)")


@dataclass
class SeedResult:
    seed: int
    min_path: float = float("nan")
    final: float = float("nan")
    baseline: float = float("nan")
    min_k: int = 0
    path_length: int = 0
    seconds: float = 0.0
    points: int = 0


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    metric: str
    results: list[SeedResult] = field(default_factory=list)

    def median(self, attr: str) -> float:
        return float(np.median([getattr(r, attr) for r in self.results]))

    @property
    def early_stop_rate(self) -> float:
        """Share of seeds whose selected model precedes the final one."""
        return float(np.mean([r.min_k < r.path_length for r in self.results]))

    def format(self) -> str:
        c = self.config
        if c.name == "timing":
            head = [f"experiment=timing d={c.d} n={c.n} loss={c.loss or 'huber'} seeds={c.seeds}",
                    "seed  points  iterations  seconds"]
            rows = [f"{r.seed:4d}  {r.points:6d}  {r.path_length:10d}  {r.seconds:7.3f}"
                    for r in self.results]
            tail = [f"median_seconds={self.median('seconds'):.3f}",
                    f"median_iterations={self.median('path_length'):.0f}"]
            return "\n".join(head + rows + tail)
        head = [f"experiment={c.name} d={c.d} n_train={c.n_train} n_test={c.n_test} "
                f"seeds={c.seeds} seed={c.seed} valid_frac={c.valid_frac} metric={self.metric}",
                "seed  min_k  path_length  min_path  final  baseline"]
        rows = [f"{r.seed:4d}  {r.min_k:5d}  {r.path_length:11d}  {r.min_path:.6g}  "
                f"{r.final:.6g}  {r.baseline:.6g}" for r in self.results]
        tail = [f"median_min_path={self.median('min_path'):.6g}",
                f"median_final={self.median('final'):.6g}",
                f"median_baseline={self.median('baseline'):.6g}",
                f"median_min_k={self.median('min_k'):.0f}",
                f"median_path_length={self.median('path_length'):.0f}",
                f"early_stop_rate={self.early_stop_rate:.3f}"]
        return "\n".join(head + rows + tail)

    def to_dict(self) -> dict:
        return {"config": asdict(self.config), "metric": self.metric,
                "results": [asdict(r) for r in self.results]}


def _metric_for(name: str) -> str:
    return "poisson" if name.startswith("poisson") else "mse"


def _run_timing(cfg: ExperimentConfig, index: int, rng) -> SeedResult:
    X, y = simulate("timing", cfg.n, cfg.d, rng, cfg.x_range, outliers=True)
    t0 = time.perf_counter()
    data = ds_mod.from_arrays(X, y)
    loss = parse_loss(cfg.loss or "huber", responses=y)
    path = engine.fit(data, loss)
    return SeedResult(seed=index, seconds=time.perf_counter() - t0,
                      path_length=path.n_iterations, points=data.n)


def run_seed(cfg: ExperimentConfig, index: int) -> SeedResult:
    """One replicate; the random stream depends only on ``(cfg.seed, index)``."""
    rng = np.random.default_rng([cfg.seed, index])
    if cfg.name == "timing":
        return _run_timing(cfg, index, rng)
    huber = cfg.name.startswith("huber")
    X, y = simulate(cfg.name, cfg.n_train, cfg.d, rng, cfg.x_range, outliers=huber)
    Xt, yt = simulate(cfg.name, cfg.n_test, cfg.d, rng, cfg.x_range, outliers=False)
    metric = _metric_for(cfg.name)

    perm = rng.permutation(cfg.n_train)
    n_valid = max(1, int(round(cfg.valid_frac * cfg.n_train)))
    valid, sub = perm[:n_valid], perm[n_valid:]

    if huber:
        delta = float(np.std(y, ddof=1))
        loss: Loss = Huber(delta) if cfg.loss is None else parse_loss(cfg.loss, responses=y)
        baseline = fit_huber_linear(X, y, delta)
    else:
        loss = PoissonNLL() if cfg.loss is None else parse_loss(cfg.loss, responses=y)
        baseline = fit_poisson_glm(X, y)

    t0 = time.perf_counter()
    data = ds_mod.from_arrays(X[sub], y[sub])
    path = engine.fit(data, loss)
    seconds = time.perf_counter() - t0
    curve = validation_curve(path, X[valid], y[valid], metric)
    k = select_stopping(curve)

    def test_score(model):
        return float(np.mean(metric_values(metric, model.predict_response(Xt), yt)))

    return SeedResult(
        seed=index,
        min_path=test_score(IsotonicModel.from_path(path, k)),
        final=test_score(IsotonicModel.from_path(path)),
        baseline=float(np.mean(metric_values(metric, baseline.predict(Xt), yt))),
        min_k=k, path_length=path.n_iterations, seconds=seconds, points=data.n)


def worker_count(tasks: int) -> int:
    env = os.environ.get("GIRP_THREADS")
    cap = int(env) if env and env.strip().isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, tasks))


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    workers = worker_count(cfg.seeds)
    indices = range(cfg.seeds)
    if workers == 1:
        results = [run_seed(cfg, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_seed, [cfg] * cfg.seeds, indices))
    return ExperimentReport(cfg, "seconds" if cfg.name == "timing" else _metric_for(cfg.name),
                            results)
