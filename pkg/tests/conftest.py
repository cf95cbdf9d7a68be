"""Shared generators plus a suite-wide audit of every fitted path.

The audit wraps ``girp.engine.fit`` so that every path produced anywhere in
the suite is checked for isotonic records, no-regret refinement, and (for
completed fits) the optimality certificate.  Totals print at the end.
"""

from __future__ import annotations

import numpy as np
import pytest

from girp import dataset, engine, losses

LOSS_NAMES = ("l2", "huber", "poisson", "bernoulli", "pnorm", "poisson-log")

AUDIT = {"fits": 0, "records": 0, "isotonic": 0, "regret": 0, "kkt_checked": 0, "kkt": 0}
AUDIT_CERTIFY_MAX_N = 3000
ACCEPTANCE_LINES: list[str] = []

_original_fit = engine.fit


def _audited_fit(data, loss, *args, **kwargs):
    path = _original_fit(data, loss, *args, **kwargs)
    chk = engine.check_path(path)
    AUDIT["fits"] += 1
    AUDIT["records"] += len(path)
    AUDIT["isotonic"] += chk.isotonic_violations
    AUDIT["regret"] += chk.refinement_violations
    if path.optimal and data.n <= AUDIT_CERTIFY_MAX_N:
        AUDIT["kkt_checked"] += 1
        AUDIT["kkt"] += int(not engine.certify(data, loss, path[-1]).passed)
    return path


@pytest.fixture(autouse=True)
def _audit_fits(monkeypatch):
    monkeypatch.setattr(engine, "fit", _audited_fit)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    terminalreporter.section("fit audit")
    terminalreporter.write_line(
        f"{AUDIT['fits']} fitted paths, {AUDIT['records']} records: "
        f"isotonic violations {AUDIT['isotonic']}, refinement violations {AUDIT['regret']}, "
        f"certificate failures {AUDIT['kkt']} of {AUDIT['kkt_checked']} certified")


def make_loss(name: str, rng=None) -> losses.Loss:
    if name == "huber":
        delta = 1.0 if rng is None else float(rng.choice([0.3, 1.0, 2.5]))
        return losses.Huber(delta)
    if name == "pnorm":
        p = 1.5 if rng is None else float(rng.uniform(1.1, 1.9))
        return losses.PNorm(p)
    return losses.LOSSES[name]()


def make_responses(name: str, rng, size: int) -> np.ndarray:
    if name in ("poisson", "poisson-log"):
        return rng.poisson(rng.uniform(0.5, 6.0), size=size).astype(float)
    if name == "bernoulli":
        if rng.random() < 0.5:
            return rng.integers(0, 2, size=size).astype(float)
        return np.round(rng.random(size), 2)
    return np.round(rng.normal(0.0, 3.0, size=size), 1)


def random_instance(rng, name: str, n_max: int = 8, d_max: int = 3, grid: int = 4,
                    dup_rows: int = 0):
    """Small random dataset on an integer grid (ties and duplicates likely)."""
    n = int(rng.integers(1, n_max + 1))
    d = int(rng.integers(1, d_max + 1))
    X = rng.integers(0, grid, size=(n, d)).astype(float)
    if dup_rows:
        X = np.vstack([X, X[rng.integers(0, n, size=dup_rows)]])
    y = make_responses(name, rng, X.shape[0])
    return dataset.from_arrays(X, y)


def random_continuous(rng, name: str, n: int, d: int):
    X = rng.random((n, d))
    y = make_responses(name, rng, n)
    if name in ("l2", "huber", "pnorm"):
        y = X.sum(axis=1) * 2 + y
    return dataset.from_arrays(X, y)
