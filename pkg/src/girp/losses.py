"""Separable convex differentiable losses and their group weights.

A loss acts pointwise: ``value(fit, y)`` is the contribution of one response
``y`` fitted by ``fit``.  The group weight is the single fit value that
minimizes the summed loss over a set of responses.

Shipped families::

    l2           (fit - y)**2
    huber        r**2 / 2 inside delta, delta * (|r| - delta / 2) outside
    poisson      fit - y * log(fit)                      fit in (0, inf)
    bernoulli    -y log(fit) - (1 - y) log(1 - fit)      fit in (0, 1)
    pnorm        |fit - y|**p, 1 < p < 2
    poisson-log  exp(eta) - y * eta   (Poisson on the log-rate scale)

User losses subclass :class:`Loss` and provide ``value``, ``derivative`` and
optionally a closed-form ``group_weight``; the default weight solver bisects
the summed derivative on ``[min y, max y]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import xlog1py, xlogy

EPS = 1e-9


class LossError(ValueError):
    """Raised on fits outside the loss domain or responses outside its range."""


@dataclass(frozen=True)
class GroupWeight:
    """Minimizer of a group's summed loss.

    ``flat_interval`` is set when the minimizer is not unique (Huber), in
    which case ``value`` is its midpoint.  ``clamped`` marks a value pinned
    to the ``EPS`` margin of an open domain because the unconstrained
    minimizer sits on its boundary.
    """

    value: float
    flat_interval: tuple[float, float] | None = None
    clamped: bool = False


def _bisect(summed_derivative, lo, hi):
    """Root of a nondecreasing function on [lo, hi], to float resolution."""
    s_lo = summed_derivative(lo)
    s_hi = summed_derivative(hi)
    if s_lo > 0 or s_hi < 0:
        raise LossError(
            f"summed derivative does not bracket a root on [{lo!r}, {hi!r}]: "
            f"{s_lo!r}, {s_hi!r}")
    if s_lo == 0:
        return lo
    if s_hi == 0:
        return hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s = summed_derivative(mid)
        if s < 0:
            lo, s_lo = mid, s
        elif s > 0:
            hi, s_hi = mid, s
        else:
            return mid
    return lo if -s_lo <= s_hi else hi


class Loss:
    """Base class for separable losses ``f_i(fit) = g(fit, y_i)``."""

    name = "loss"
    domain = (-math.inf, math.inf)
    response_range = (-math.inf, math.inf)

    def value(self, fit, y):
        raise NotImplementedError

    def derivative(self, fit, y):
        raise NotImplementedError

    def descriptor(self) -> str:
        return self.name

    def __str__(self):
        return self.descriptor()

    # -- checks ------------------------------------------------------------

    def check_fit(self, fit):
        fit = np.asarray(fit, dtype=float)
        lo, hi = self.domain
        if not np.all((fit > lo) & (fit < hi)):
            raise LossError(f"fit outside the domain of {self.name}: ({lo}, {hi})")
        return fit

    def check_responses(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.response_range
        if y.size and not np.all((y >= lo) & (y <= hi)):
            raise LossError(f"response out of range for {self.name}")
        return y

    def clamp(self, fit):
        """Pull fits into the closed EPS-margin of the domain."""
        lo, hi = self.domain
        fit = np.asarray(fit, dtype=float)
        if math.isfinite(lo):
            fit = np.maximum(fit, lo + EPS)
        if math.isfinite(hi):
            fit = np.minimum(fit, hi - EPS)
        return fit

    # -- weights -----------------------------------------------------------

    def summed_derivative(self, w, y):
        return float(np.sum(self.derivative(w, y)))

    def group_weight(self, responses) -> GroupWeight:
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise LossError("group weight of an empty group")
        lo, hi = float(y.min()), float(y.max())
        if lo == hi:
            return self._clamped(lo)
        lo, hi = self._inside(lo), self._inside(hi)
        return GroupWeight(_bisect(lambda w: self.summed_derivative(w, y), lo, hi))

    def _inside(self, w):
        dlo, dhi = self.domain
        return min(max(w, dlo + EPS), dhi - EPS)

    def _clamped(self, w):
        inside = self._inside(w)
        return GroupWeight(inside, clamped=inside != w)

    def total(self, fit, y) -> float:
        return float(np.sum(self.value(fit, y)))

    def mean_response(self, fit):
        """Fitted values on the response scale (identity unless a link is used)."""
        return np.asarray(fit, dtype=float)


class SquaredError(Loss):
    name = "l2"

    def value(self, fit, y):
        return (np.asarray(fit, dtype=float) - y) ** 2

    def derivative(self, fit, y):
        return 2.0 * (np.asarray(fit, dtype=float) - y)

    def group_weight(self, responses):
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise LossError("group weight of an empty group")
        return GroupWeight(float(np.mean(y)))


@dataclass(frozen=True, repr=False)
class Huber(Loss):
    delta: float = 1.0
    name = "huber"

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise LossError(f"huber delta must be positive, got {self.delta!r}")

    def __repr__(self):
        return f"Huber(delta={self.delta!r})"

    def descriptor(self):
        return f"huber:delta={self.delta!r}"

    def value(self, fit, y):
        r = np.abs(np.asarray(fit, dtype=float) - y)
        d = self.delta
        return np.where(r < d, 0.5 * r * r, d * (r - 0.5 * d))

    def derivative(self, fit, y):
        return np.clip(np.asarray(fit, dtype=float) - y, -self.delta, self.delta)

    def summed_derivative(self, w, y):
        # saturated terms counted, not summed, so a balanced flat stretch is exactly 0
        r = w - y
        d = self.delta
        n_hi = np.count_nonzero(r >= d)
        n_lo = np.count_nonzero(r <= -d)
        inside = r[(r > -d) & (r < d)]
        return d * (n_hi - n_lo) + float(np.sum(inside))

    def _slope(self, w, y):
        return np.count_nonzero(np.abs(w - y) < self.delta)

    def group_weight(self, responses):
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise LossError("group weight of an empty group")
        lo_y, hi_y = float(y.min()), float(y.max())
        if lo_y == hi_y:
            return GroupWeight(lo_y)
        d = self.delta
        knots = np.concatenate(([lo_y, hi_y], y - d, y + d))
        knots = np.unique(knots[(knots >= lo_y) & (knots <= hi_y)])
        # a flat stretch is a run of segments where every term is saturated
        # and the saturated counts balance; counting keeps that test exact
        # even when knots carry rounding error
        s_mid, slope_mid = self._summed_at_sorted(0.5 * (knots[:-1] + knots[1:]), y)
        flat = np.flatnonzero((slope_mid == 0) & (s_mid == 0))
        if flat.size:
            left, right = float(knots[flat[0]]), float(knots[flat[-1] + 1])
            return GroupWeight(0.5 * (left + right), flat_interval=(left, right))
        s, _ = self._summed_at_sorted(knots, y)
        # summed derivative is nondecreasing piecewise linear between knots
        left = self._crossing(knots, s, y, strict=False)
        right = self._crossing(knots, s, y, strict=True)
        return GroupWeight(0.5 * (left + right))

    def _summed_at_sorted(self, w, y):
        """Summed derivative and count of unsaturated terms at each of ``w``."""
        ys = np.sort(y)
        cs = np.concatenate(([0.0], np.cumsum(ys)))
        d = self.delta
        n_hi = np.searchsorted(ys, w - d, side="right")
        b = np.searchsorted(ys, w + d, side="left")
        n_lo = ys.size - b
        slope = b - n_hi
        inside = np.where(slope > 0, slope * w - (cs[b] - cs[n_hi]), 0.0)
        return d * (n_hi - n_lo) + inside, slope

    def _crossing(self, knots, s, y, strict):
        """Leftmost w with S(w) >= 0, or (strict) rightmost w with S(w) <= 0."""
        if not strict:
            idx = int(np.searchsorted(s >= 0, True))  # first knot with S >= 0
            if idx == 0:
                return float(knots[0])
            a, b = knots[idx - 1], knots[idx]
            s_a = self.summed_derivative(a, y)
        else:
            idx = int(np.searchsorted(s > 0, True))  # first knot with S > 0
            if idx >= knots.size:
                return float(knots[-1])
            if idx == 0:
                return float(knots[0])
            a, b = knots[idx - 1], knots[idx]
            s_a = self.summed_derivative(a, y)
            if s_a > 0:
                return float(a)
        slope = self._slope(0.5 * (a + b), y)
        if slope == 0:
            return float(a if (s_a >= 0) != strict else b)
        root = a - s_a / slope
        return float(min(max(root, a), b))


class PoissonNLL(Loss):
    name = "poisson"
    domain = (0.0, math.inf)
    response_range = (0.0, math.inf)

    def value(self, fit, y):
        fit = self.check_fit(fit)
        return fit - xlogy(y, fit)

    def derivative(self, fit, y):
        fit = self.check_fit(fit)
        return 1.0 - np.asarray(y, dtype=float) / fit

    def group_weight(self, responses):
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise LossError("group weight of an empty group")
        return self._clamped(float(np.mean(y)))


class BernoulliNLL(Loss):
    name = "bernoulli"
    domain = (0.0, 1.0)
    response_range = (0.0, 1.0)

    def value(self, fit, y):
        fit = self.check_fit(fit)
        y = np.asarray(y, dtype=float)
        return -xlogy(y, fit) - xlog1py(1.0 - y, -fit)

    def derivative(self, fit, y):
        fit = self.check_fit(fit)
        return (fit - y) / (fit * (1.0 - fit))

    def group_weight(self, responses):
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise LossError("group weight of an empty group")
        return self._clamped(float(np.mean(y)))


@dataclass(frozen=True, repr=False)
class PNorm(Loss):
    p: float = 1.5
    name = "pnorm"

    def __post_init__(self):
        if not 1.0 < self.p < 2.0:
            raise LossError(f"pnorm exponent must lie in (1, 2), got {self.p!r}")

    def __repr__(self):
        return f"PNorm(p={self.p!r})"

    def descriptor(self):
        return f"pnorm:p={self.p!r}"

    def value(self, fit, y):
        return np.abs(np.asarray(fit, dtype=float) - y) ** self.p

    def derivative(self, fit, y):
        r = np.asarray(fit, dtype=float) - y
        return self.p * np.sign(r) * np.abs(r) ** (self.p - 1.0)


class LogPoissonNLL(Loss):
    """Poisson negative log-likelihood on the log-rate scale.

    ``exp(eta) - y * eta``: the ``Phi(eta) - eta * y`` form with
    ``Phi = exp``, whose weight is ``log(mean y)``.
    """

    name = "poisson-log"
    response_range = (0.0, math.inf)
    floor = math.log(EPS)

    def value(self, fit, y):
        fit = np.asarray(fit, dtype=float)
        return np.exp(fit) - np.asarray(y, dtype=float) * fit

    def derivative(self, fit, y):
        return np.exp(np.asarray(fit, dtype=float)) - y

    def group_weight(self, responses):
        y = np.asarray(responses, dtype=float)
        if y.size == 0:
            raise LossError("group weight of an empty group")
        mean = float(np.mean(y))
        if mean < EPS:
            return GroupWeight(self.floor, clamped=True)
        return GroupWeight(math.log(mean))

    def mean_response(self, fit):
        return np.exp(np.asarray(fit, dtype=float))


LOSSES = {
    "l2": SquaredError,
    "huber": Huber,
    "poisson": PoissonNLL,
    "bernoulli": BernoulliNLL,
    "pnorm": PNorm,
    "poisson-log": LogPoissonNLL,
}


def parse_loss(text: str, responses=None) -> Loss:
    """Build a loss from ``name[:key=value,...]``.

    ``huber`` without ``delta`` takes one standard deviation of
    ``responses`` when they are given.
    """
    name, _, params = text.strip().partition(":")
    name = name.strip().lower()
    if name not in LOSSES:
        raise LossError(f"unknown loss {name!r}; choose from {', '.join(LOSSES)}")
    kwargs = {}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise LossError(f"malformed loss parameter {item!r}")
        try:
            kwargs[key.strip()] = float(val)
        except ValueError:
            raise LossError(f"loss parameter {key!r} is not a number: {val!r}") from None
    if name == "huber" and "delta" not in kwargs:
        if responses is None:
            raise LossError("huber needs delta=... (or responses to default it)")
        kwargs["delta"] = float(np.std(np.asarray(responses, dtype=float), ddof=1)) \
            if len(responses) > 1 else 1.0
    allowed = {"huber": {"delta"}, "pnorm": {"p"}}.get(name, set())
    extra = set(kwargs) - allowed
    if extra:
        raise LossError(f"unexpected parameters for {name}: {sorted(extra)}")
    return LOSSES[name](**kwargs)
