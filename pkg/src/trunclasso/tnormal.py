"""Unit-variance Gaussians truncated to a finite union of intervals.

A :class:`TruncationSet` is an ordered union of disjoint intervals with
possibly infinite ends. A :class:`TruncatedGaussianView` pairs a set with
a location ``t`` and stands for the law of ``Z + t`` conditioned on
``Z + t`` landing in the set, ``Z ~ N(0, 1)``.

Everything numeric is evaluated in log space through the compiled
kernels in :mod:`trunclasso._kernels`, so far-tail sets stay accurate
until the survival probability itself underflows.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels as K
from .errors import InvalidView, NumericalUnderflow, ToleranceUnreachable, TruncationSetError

__all__ = [
    "TruncationSet",
    "TruncatedGaussianView",
    "survival",
    "log_survival",
    "trunc_mean",
    "trunc_var",
    "cdf",
    "inverse_cdf",
    "sample",
    "moments_at",
    "sample_at",
]

# survival below this is treated as underflow by the moment routines
SURVIVAL_FLOOR = 1e-300
_LOG_FLOOR = math.log(SURVIVAL_FLOOR)

_INTERVAL = re.compile(r"\s*\[\s*([^,\[\]]+?)\s*,\s*([^,\[\]]+?)\s*\]\s*")


def _parse_end(token):
    try:
        return float(token)
    except ValueError:
        raise TruncationSetError(f"bad interval end {token!r}") from None


def _format_end(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))


@dataclass(frozen=True)
class TruncationSet:
    """Sorted union of disjoint closed intervals ``[lo_i, hi_i]``.

    Ends may be ``-inf``/``inf``. Intervals must have positive length and
    be strictly separated (``hi_i < lo_{i+1}``).
    """

    intervals: tuple

    def __post_init__(self):
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        if not ivs:
            raise TruncationSetError("truncation set needs at least one interval")
        for lo, hi in ivs:
            if math.isnan(lo) or math.isnan(hi):
                raise TruncationSetError("interval ends must not be NaN")
            if not lo < hi:
                raise TruncationSetError(f"interval [{lo}, {hi}] is empty or reversed")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if not hi < lo:
                raise TruncationSetError("intervals must be sorted and disjoint")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def parse(cls, text):
        """Parse ``"[a,b],[c,d],..."``; ends accept ``inf``/``-inf``."""
        pos = 0
        out = []
        text = text.strip()
        while True:
            match = _INTERVAL.match(text, pos)
            if match is None:
                raise TruncationSetError(f"cannot parse truncation set {text!r}")
            out.append((_parse_end(match.group(1)), _parse_end(match.group(2))))
            pos = match.end()
            if pos == len(text):
                break
            if text[pos] != ",":
                raise TruncationSetError(f"cannot parse truncation set {text!r}")
            pos += 1
        return cls(tuple(out))

    @classmethod
    def real_line(cls):
        return cls(((-math.inf, math.inf),))

    @cached_property
    def lo(self):
        return np.array([iv[0] for iv in self.intervals])

    @cached_property
    def hi(self):
        return np.array([iv[1] for iv in self.intervals])

    @property
    def is_real_line(self):
        return self.intervals == ((-math.inf, math.inf),)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.intervals:
            inside |= (x >= lo) & (x <= hi)
        return inside

    def __str__(self):
        return ",".join(f"[{_format_end(lo)},{_format_end(hi)}]" for lo, hi in self.intervals)


def log_survival(tset, t):
    """Natural log of the survival probability; vectorized over ``t``."""
    if np.ndim(t) == 0:
        return float(K.log_survival(tset.lo, tset.hi, float(t)))
    ts = np.ascontiguousarray(t, dtype=float)
    return K.log_survival_many(tset.lo, tset.hi, ts.ravel()).reshape(ts.shape)


def survival(tset, t):
    """Probability that ``Z + t`` lies in ``tset`` for ``Z ~ N(0, 1)``."""
    return np.exp(log_survival(tset, t))


@dataclass(frozen=True)
class TruncatedGaussianView:
    """The law N(t, 1; S).

    Raises
    ------
    InvalidView
        If the survival probability is zero in double precision. Locations
        whose survival is positive but below ``SURVIVAL_FLOOR`` construct,
        and their moments raise :class:`NumericalUnderflow`.
    """

    t: float
    set: TruncationSet

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        if not math.isfinite(self.t):
            raise InvalidView("location must be finite")
        if self.gamma == 0.0:
            raise InvalidView(f"zero survival probability at t={self.t} for {self.set}")

    @cached_property
    def log_gamma(self):
        return log_survival(self.set, self.t)

    @property
    def gamma(self):
        return math.exp(self.log_gamma)

    @cached_property
    def _moments(self):
        if self.log_gamma < _LOG_FLOOR:
            raise NumericalUnderflow(f"survival {self.gamma:.3g} below {SURVIVAL_FLOOR:g}")
        _, mean, var = K.moments(self.set.lo, self.set.hi, self.t)
        return mean, var


def trunc_mean(view):
    """E[Z_t]."""
    return view._moments[0]


def trunc_var(view):
    """Var(Z_t)."""
    return view._moments[1]


def cdf(view, x):
    """P(Z_t <= x)."""
    return math.exp(K.log_cdf(view.set.lo, view.set.hi, view.t, float(x)))


def inverse_cdf(view, q, tol=1e-12):
    """Quantile of ``view`` at level ``q``.

    The interval holding the ``q`` mass quantile is located from the
    cumulative interval masses; inside it the closed-form tail inversion
    gives a starting point that is refined by bisection until
    ``|cdf(view, x) - q| <= tol``.
    """
    if tol < 1e-15:
        raise ToleranceUnreachable(f"tolerance {tol:g} is below double precision")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    lo_arr, hi_arr, t = view.set.lo, view.set.hi, view.t
    lms = np.array([K.log_mass(a - t, b - t) for a, b in view.set.intervals])
    w = np.exp(lms - view.log_gamma)
    cum = np.cumsum(w)
    i = min(int(np.searchsorted(cum, q * cum[-1], side="left")), len(w) - 1)
    prev = cum[i - 1] if i else 0.0
    u = min(max((q - prev) / w[i], 0.0), 1.0)
    lo, hi = lo_arr[i], hi_arr[i]
    x = t + K.sample_interval(lo - t, hi - t, u)

    def err(v):
        return cdf(view, v) - q

    e = err(x)
    if abs(e) <= tol:
        return x
    # bracket inside the chosen interval, widening infinite ends
    a, b = lo, hi
    if e > 0:
        b = x
        if math.isinf(a):
            step = 1.0
            a = x - step
            while err(a) > 0:
                step *= 2.0
                a = x - step
    else:
        a = x
        if math.isinf(b):
            step = 1.0
            b = x + step
            while err(b) < 0:
                step *= 2.0
                b = x + step
    best, best_e = x, abs(e)
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid in (a, b):
            break
        e = err(mid)
        if abs(e) < best_e:
            best, best_e = mid, abs(e)
        if best_e <= tol:
            break
        if e > 0:
            b = mid
        else:
            a = mid
    return best


def sample(view, rng, size=None):
    """Draw from ``view`` by interval selection and inverse-CDF inversion.

    The output law is within total variation 1e-12 of N(t, 1; S) and every
    draw lies in the set. ``rng`` is a :class:`numpy.random.Generator`;
    each draw consumes two uniforms.
    """
    if size is None:
        u = rng.random(2)
        return float(K.sample_one(view.set.lo, view.set.hi, view.t, u[0], u[1]))
    count = int(np.prod(size))
    u = rng.random((2, count))
    ts = np.full(count, view.t)
    return K.sample_many(view.set.lo, view.set.hi, ts, u[0], u[1]).reshape(size)


def moments_at(tset, ts):
    """Vectorized ``(log_gamma, mean, var)`` for locations ``ts``.

    Raises :class:`NumericalUnderflow` carrying the first offending index
    when a survival probability drops below ``SURVIVAL_FLOOR``.
    """
    ts = np.ascontiguousarray(ts, dtype=float)
    lg, mean, var = K.moments_many(tset.lo, tset.hi, ts)
    bad = np.flatnonzero(~(lg >= _LOG_FLOOR))
    if bad.size:
        j = int(bad[0])
        raise NumericalUnderflow(f"survival underflow at row {j} (t={ts[j]:.6g})", row=j)
    return lg, mean, var


def sample_at(tset, ts, rng):
    """One draw from N(t_j, 1; S) for every location in ``ts``."""
    ts = np.ascontiguousarray(ts, dtype=float)
    u = rng.random((2, ts.shape[0]))
    return K.sample_many(tset.lo, tset.hi, ts, u[0], u[1])
