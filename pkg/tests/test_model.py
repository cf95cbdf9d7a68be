import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_continuous
from girp import _kernels, dataset, engine, losses
from girp.model import (IsotonicModel, ModelError, evaluate, metric_values, read_model,
                        select_stopping, validation_curve, write_model)


@pytest.fixture
def chain_model():
    ds = dataset.from_arrays([1.0, 2.0, 3.0], [1.0, 3.0, 2.0])
    return IsotonicModel.from_path(engine.fit(ds, losses.SquaredError()))


def test_predict_examples(chain_model):
    assert chain_model.predict([[2.0]]).tolist() == [2.5]
    assert chain_model.predict([[0.5]]).tolist() == [1.0]
    assert chain_model.predict([[1.5]]).tolist() == [1.75]
    assert chain_model.predict([[9.0]]).tolist() == [2.5]


def test_missing_bounds_fall_back_to_fitted_range():
    ds = dataset.from_arrays([[0.0, 1.0], [1.0, 2.0], [3.0, 0.0]], [1.0, 5.0, 4.0])
    model = IsotonicModel.from_path(engine.fit(ds, losses.SquaredError()))
    # incomparable to everything: midrange of the fits
    assert model.predict([[4.0, -1.0]]).tolist() == [3.0]
    # above (3,0) only: lower bound 4, upper bound the max fit 5
    assert model.predict([[3.5, 0.5]]).tolist() == [4.5]
    # below (3,0) only: upper bound 4, lower bound the min fit 1
    assert model.predict([[2.0, -1.0]]).tolist() == [2.5]
    assert model.predict([[-1.0, -1.0]]).tolist() == [1.0]
    assert model.predict([[9.0, 9.0]]).tolist() == [5.0]


def test_one_sided_rule_would_break_monotonicity():
    # fits 0 at (0,0) and 5 at (1,1) are comparable; (1,0.5) sits above (0,0)
    ds = dataset.from_arrays([[0.0, 0.0], [1.0, 1.0], [0.0, 2.0]], [0.0, 5.0, 5.0])
    model = IsotonicModel.from_path(engine.fit(ds, losses.SquaredError()))
    lo, hi = model.predict([[-1.0, 1.5], [0.0, 1.5]])
    assert lo <= hi


def test_dimension_mismatch(chain_model):
    with pytest.raises(ModelError, match="dimension"):
        chain_model.predict([[1.0, 2.0]])
    with pytest.raises(ModelError, match="finite"):
        chain_model.predict([[np.nan]])


def test_predict_reproduces_training_fits():
    rng = np.random.default_rng(0)
    for name in ("l2", "huber", "poisson"):
        ds = random_continuous(rng, name, 80, 3)
        loss = losses.Huber(1.0) if name == "huber" else losses.LOSSES[name]()
        path = engine.fit(ds, loss)
        for k in (0, path.n_iterations // 2, path.n_iterations):
            model = IsotonicModel.from_path(path, k)
            assert np.array_equal(model.predict(ds.X), path.fits(k))


def test_predict_is_monotone():
    rng = np.random.default_rng(1)
    ds = random_continuous(rng, "l2", 120, 2)
    model = IsotonicModel.from_path(engine.fit(ds, losses.SquaredError()))
    lo = rng.uniform(-0.2, 1.2, size=(2000, 2))
    hi = lo + rng.uniform(0, 0.5, size=(2000, 2)) * (rng.random((2000, 2)) < 0.7)
    assert np.all(model.predict(lo) <= model.predict(hi))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_numpy_envelope_matches_loop(seed):
    rng = np.random.default_rng(seed)
    X = np.unique(rng.integers(0, 5, size=(int(rng.integers(1, 40)), 2)).astype(float), axis=0)
    Q = rng.integers(-1, 6, size=(int(rng.integers(1, 20)), 2)).astype(float)
    a = _kernels.envelope_index_loop(X, Q)
    b = _kernels.envelope_index_numpy(X, Q)
    for u, v in zip(a, b):
        assert np.array_equal(u, v)
    fits = np.sort(rng.normal(size=X.shape[0]))
    assert np.array_equal(_kernels.envelope_predict_loop(fits, *a, fits[0], fits[-1]),
                          _kernels.envelope_predict_numpy(fits, *a, fits[0], fits[-1]))


def test_metrics():
    y = np.array([1.0, 2.0, 4.0])
    assert evaluate_const(y, y) == 0.0
    assert evaluate_const(np.full(3, 2.0), y) == pytest.approx(np.mean((2 - y) ** 2))
    assert metric_values("poisson", [2.0], [2.0])[0] == pytest.approx(2 - 2 * math.log(2))
    assert metric_values("poisson", [0.0], [0.0])[0] == pytest.approx(1e-9)
    assert np.isfinite(metric_values("bernoulli", [0.0, 1.0], [1.0, 0.0])).all()
    assert metric_values("huber", [3.0], [0.0], delta=1.0)[0] == 2.5
    with pytest.raises(ModelError):
        metric_values("poisson", [1.0], [-1.0])
    with pytest.raises(ModelError):
        metric_values("huber", [1.0], [1.0])
    with pytest.raises(ModelError):
        metric_values("mae", [1.0], [1.0])


def evaluate_const(pred, y):
    return float(np.mean(metric_values("mse", pred, y)))


def test_evaluate_on_model(chain_model):
    X = np.array([[1.0], [2.0], [3.0]])
    assert evaluate(chain_model, X, [1.0, 2.5, 2.5]) == 0.0
    assert evaluate(chain_model, X, [1.0, 3.0, 2.0]) == pytest.approx(0.5 / 3)


def test_select_stopping():
    assert select_stopping([5, 4, 3, 2]) == 3
    curve = np.concatenate((np.linspace(10, 1, 13), np.linspace(1.5, 3, 8)))
    assert select_stopping(curve) == 12
    assert select_stopping([1.0, 1.0, 1.0]) == 0
    with pytest.raises(ModelError):
        select_stopping([])


def test_validation_curve_matches_evaluate():
    rng = np.random.default_rng(2)
    ds = random_continuous(rng, "huber", 100, 2)
    loss = losses.Huber(1.0)
    path = engine.fit(ds, loss)
    Xv = rng.random((30, 2))
    yv = Xv.sum(axis=1) * 2 + rng.normal(size=30)
    curve = validation_curve(path, Xv, yv, "mse")
    assert len(curve) == len(path)
    for k in (0, 3, path.n_iterations):
        assert curve[k] == pytest.approx(evaluate(IsotonicModel.from_path(path, k), Xv, yv))
    hub = validation_curve(path, Xv, yv, "huber", delta=1.0)
    assert hub[-1] == pytest.approx(evaluate(IsotonicModel.from_path(path), Xv, yv, "huber"))


def test_log_link_predictions_on_rate_scale():
    rng = np.random.default_rng(3)
    X = rng.random((50, 2))
    y = rng.poisson(3.0, size=50).astype(float)
    ds = dataset.from_arrays(X, y)
    log_model = IsotonicModel.from_path(engine.fit(ds, losses.LogPoissonNLL()))
    id_model = IsotonicModel.from_path(engine.fit(ds, losses.PoissonNLL()))
    Q = rng.random((20, 2))
    assert np.all(log_model.predict_response(Q) > 0)
    assert evaluate(log_model, Q, np.ones(20), "poisson") > 0


def test_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    X = rng.integers(0, 6, size=(90, 2)).astype(float)
    y = X.sum(axis=1) + rng.normal(size=90)
    ds = dataset.from_arrays(X, y)
    for loss in (losses.SquaredError(), losses.Huber(0.7), losses.PNorm(1.3)):
        path = engine.fit(ds, loss)
        f = tmp_path / "m.girp"
        write_model(f, path, selected_k=2, seed=11, meta={"note": "x"})
        mf = read_model(f)
        assert mf.selected_k == 2 and mf.seed == 11 and mf.meta == {"note": "x"}
        back = mf.path
        assert back.loss == loss or back.loss.descriptor() == loss.descriptor()
        assert len(back) == len(path)
        for k in range(len(path)):
            a, b = path[k], back[k]
            assert partition_key(a) == partition_key(b)
            assert a.loss_total == b.loss_total and a.cut_performed == b.cut_performed
        Q = rng.uniform(-1, 7, size=(40, 2))
        for k in (0, 2, path.n_iterations):
            assert np.array_equal(IsotonicModel.from_path(path, k).predict(Q),
                                  mf.model(k).predict(Q))
        assert np.array_equal(mf.model().fits, path.fits(2))


def partition_key(rec):
    return sorted((m.tolist(), w) for m, w in rec.partition)


def test_read_model_rejects_bad_files(tmp_path):
    bad = tmp_path / "bad.girp"
    bad.write_text("not json\n")
    with pytest.raises(ModelError):
        read_model(bad)
    bad.write_text('{"schema": "other"}\n')
    with pytest.raises(ModelError, match="not a"):
        read_model(bad)
    ds = dataset.from_arrays([1.0, 2.0], [2.0, 1.0])
    path = engine.fit(ds, losses.SquaredError())
    good = tmp_path / "good.girp"
    write_model(good, path)
    text = good.read_text().replace('"y": [2.0]', '"y": [2.5]')
    bad.write_text(text)
    with pytest.raises(ModelError, match="fingerprint"):
        read_model(bad)
    with pytest.raises(ModelError):
        write_model(good, path, selected_k=5)
