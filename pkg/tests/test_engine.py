import zlib

import numpy as np
import pytest

from conftest import LOSS_NAMES, make_loss, make_responses, random_continuous, random_instance
from girp import dataset, engine, losses
from girp.engine import PathRecord, certify, check_path


def chain(y):
    return dataset.from_arrays(np.arange(len(y), dtype=float), np.asarray(y, dtype=float))


def partition_of(record):
    return sorted((m.tolist(), w) for m, w in record.partition)


def test_violating_chain_path():
    path = engine.fit(chain([1, 3, 2]), losses.SquaredError())
    assert len(path) == 2 and path.optimal
    assert partition_of(path[0]) == [([0, 1, 2], 2.0)]
    assert partition_of(path[1]) == [([0], 1.0), ([1, 2], 2.5)]
    assert path[1].cut_performed == (0, -4.0)
    assert path.fits().tolist() == [1.0, 2.5, 2.5]


def test_isotonic_chain_splits_to_singletons():
    path = engine.fit(chain([1, 2, 3]), losses.SquaredError())
    assert path.splits[0].value == -4.0
    assert path.fits().tolist() == [1.0, 2.0, 3.0]
    assert all(g.status in ("block", "split") for g in path.groups)


@pytest.mark.parametrize("name", LOSS_NAMES)
def test_antichain_gives_singletons(name):
    rng = np.random.default_rng(0)
    X = np.column_stack((np.arange(6.0), -np.arange(6.0)))
    loss = make_loss(name)
    y = make_responses(name, rng, 6)
    ds = dataset.from_arrays(X, y)
    assert ds.order.m == 0
    path = engine.fit(ds, loss)
    expect = [loss.group_weight(r).value for r in ds.raw_responses]
    assert path.fits().tolist() == pytest.approx(expect, abs=1e-12)


@pytest.mark.parametrize("name", LOSS_NAMES)
def test_path_invariants_on_random_instances(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for i in range(40):
        if i % 2:
            ds = random_instance(rng, name, n_max=25, d_max=3, grid=5, dup_rows=3)
        else:
            ds = random_continuous(rng, name, int(rng.integers(1, 80)), int(rng.integers(1, 4)))
        loss = make_loss(name, rng)
        path = engine.fit(ds, loss)
        chk = check_path(path)
        assert chk.ok, chk
        rep = certify(ds, loss, path[-1])
        assert rep.passed, rep.summary()
        assert len(path) <= ds.n
        covered = np.sort(np.concatenate([m for m, _ in path[-1].partition]))
        assert covered.tolist() == list(range(ds.n))


def test_huber_flat_groups_keep_path_isotonic():
    X = np.array([[0, 2], [1, 2], [2, 1], [2, 2], [2, 2]], dtype=float)
    y = np.array([5, -5, -5, -4, -3], dtype=float)
    ds = dataset.from_arrays(X, y)
    path = engine.fit(ds, losses.Huber(1.0))
    assert check_path(path).ok
    flat = [g for g in path.groups if g.weight.flat_interval is not None]
    assert flat and all(g.weight.value == g.weight.flat_interval[0] for g in flat)
    assert certify(ds, losses.Huber(1.0), path[-1]).passed


def test_records_match_incremental_fits():
    rng = np.random.default_rng(4)
    ds = random_continuous(rng, "l2", 60, 2)
    path = engine.fit(ds, losses.SquaredError())
    for k, fits in path.iter_fits():
        assert np.array_equal(fits, path.fits(k))
        rec = path[k]
        labels = path.labels(k)
        assert len(np.unique(labels)) == len(rec.partition) == k + 1
        obj = sum(losses.SquaredError().total(w, ds.gather(m)[0]) for m, w in rec.partition)
        assert obj == pytest.approx(rec.loss_total, rel=1e-9, abs=1e-9)
    assert path[-1].k == path.n_iterations
    with pytest.raises(IndexError):
        path[len(path)]


def test_limits_flag_partial_path():
    rng = np.random.default_rng(5)
    ds = random_continuous(rng, "l2", 80, 2)
    full = engine.fit(ds, losses.SquaredError())
    part = engine.fit(ds, losses.SquaredError(), max_iterations=3)
    assert not part.optimal and part.stop_reason == "max_iterations"
    assert part.n_iterations == 3
    assert np.array_equal(part.fits(3), full.fits(3))
    timed = engine.fit(ds, losses.SquaredError(), time_budget=0.0)
    assert not timed.optimal and timed.stop_reason == "time_budget"
    assert timed.n_iterations == 0


def test_progress_callback():
    seen = []
    engine.fit(chain([3, 1, 2, 0]), losses.SquaredError(),
               progress=lambda k, g, best: seen.append((k, g, best)))
    assert seen[0][0] == 0 and seen[0][1] == 1
    assert [s[0] for s in seen] == list(range(len(seen)))
    assert seen[-1][2] is None


def test_response_range_checked_before_fitting():
    with pytest.raises(losses.LossError, match="response out of range for poisson"):
        engine.fit(chain([1, -1]), losses.PoissonNLL())


def test_certify_flags_merged_blocks():
    ds = chain([1, 3, 2])
    loss = losses.SquaredError()
    bad = PathRecord(k=0, partition=[(np.arange(3), 2.0)], cut_performed=None, loss_total=2.0)
    rep = certify(ds, loss, bad)
    assert not rep.passed
    assert rep.improving_cuts or rep.stationarity


def test_certify_reports_perturbed_residual():
    ds = chain([1, 3, 2])
    loss = losses.SquaredError()
    final = engine.fit(ds, loss)[-1]
    moved = PathRecord(k=final.k, cut_performed=None, loss_total=0.0,
                       partition=[(m, w + 1e-3) for m, w in final.partition])
    rep = certify(ds, loss, moved)
    assert not rep.stationary
    for b, residual in rep.stationarity:
        members, w = moved.partition[b]
        y = ds.gather(members)[0]
        assert residual == pytest.approx(np.sum(2 * (w - y)), rel=1e-9)


def test_certify_flags_non_isotonic_weights():
    ds = chain([1, 3, 2])
    rec = PathRecord(k=0, cut_performed=None, loss_total=0.0,
                     partition=[(np.array([0]), 1.0), (np.array([1]), 3.0), (np.array([2]), 2.0)])
    rep = certify(ds, losses.SquaredError(), rec)
    assert not rep.isotonic
    assert rep.isotonicity[0][:2] == (1, 2)


def test_certify_requires_full_cover():
    with pytest.raises(ValueError):
        certify(chain([1, 2]), losses.SquaredError(),
                PathRecord(k=0, partition=[(np.array([0]), 1.0)], cut_performed=None,
                           loss_total=0.0))


def test_check_path_detects_tampering():
    path = engine.fit(chain([1, 3, 2]), losses.SquaredError())
    g = path.groups[1]
    path.groups[1] = type(g)(id=g.id, members=g.members, weight=losses.GroupWeight(9.0),
                             loss=g.loss, parent=g.parent, created=g.created)
    assert check_path(path).isotonic_violations > 0


def test_clamped_boundary_blocks_certify():
    X = np.arange(6, dtype=float)
    ds = dataset.from_arrays(X, np.array([0, 0, 0, 3, 1, 5], dtype=float))
    for loss in (losses.PoissonNLL(), losses.LogPoissonNLL()):
        path = engine.fit(ds, loss)
        assert certify(ds, loss, path[-1]).passed
        assert check_path(path).ok
    yb = np.array([0, 0, 1, 0, 1, 1], dtype=float)
    ds = dataset.from_arrays(X, yb)
    path = engine.fit(ds, losses.BernoulliNLL())
    assert certify(ds, losses.BernoulliNLL(), path[-1]).passed
