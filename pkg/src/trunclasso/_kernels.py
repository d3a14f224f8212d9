"""Compiled scalar kernels for the unit-variance truncated normal.

All routines work on *standardized* endpoints (interval ends minus the
location ``t``) or take the interval arrays ``lo``/``hi`` plus ``t``.
Special functions are bound from ``scipy.special.cython_special`` so the
compiled solver loop and the public helpers evaluate the exact same code.
"""

import ctypes
import math

import numba as nb
import numpy as np
from numba.extending import get_cython_function_address

_dd = ctypes.CFUNCTYPE(ctypes.c_double, ctypes.c_double, ctypes.c_int)


def _bind(name):
    return _dd(get_cython_function_address("scipy.special.cython_special", name))


_ndtr = _bind("__pyx_fuse_1ndtr")
_log_ndtr = _bind("__pyx_fuse_1log_ndtr")
_erfcx = _bind("__pyx_fuse_1erfcx")
_ndtri = _bind("ndtri")
_ndtri_exp = _bind("ndtri_exp")

SQRT2 = math.sqrt(2.0)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# total-variation budget of the sampler
ZETA = 1e-12


@nb.njit
def log_phi(x):
    return -0.5 * x * x - LOG_SQRT_2PI


@nb.njit
def _log_tail(x):
    # log Q(x); log_ndtr(-inf) would raise the divide-by-zero flag
    return -np.inf if x == np.inf else _log_ndtr(-x, 0)


@nb.njit
def log_mass(a, b):
    """log P(a <= Z <= b) for a standard normal Z and a < b."""
    if a < 0.0 < b:
        # straddles zero: both erf terms are positive, no cancellation
        return math.log(0.5 * (math.erf(b / SQRT2) - math.erf(a / SQRT2)))
    # one-sided: difference of log tails on the side away from the mode
    if a >= 0.0:
        la, lb = _log_ndtr(-a, 0), _log_tail(b)
    else:
        la, lb = _log_ndtr(b, 0), _log_tail(-a)
    if lb == la:
        # ends within rounding of each other: empty in double precision
        return -np.inf
    return la + math.log(-math.expm1(lb - la))


@nb.njit
def _logsumexp(v):
    hi = -np.inf
    for x in v:
        if x > hi:
            hi = x
    if hi == -np.inf:
        return -np.inf
    s = 0.0
    for x in v:
        s += math.exp(x - hi)
    return hi + math.log(s)


@nb.njit
def log_survival(lo, hi, t):
    out = np.empty(lo.shape[0])
    for i in range(lo.shape[0]):
        out[i] = log_mass(lo[i] - t, hi[i] - t)
    return _logsumexp(out)


@nb.njit
def _upper_moments(a, b):
    # 0 <= a < b <= inf; ratios via erfcx keep the inverse Mills ratio exact
    la = _log_ndtr(-a, 0)
    lb = _log_tail(b)
    d = lb - la
    keep = -math.expm1(d)
    lm = la + math.log(keep)
    ta = SQRT_2_OVER_PI / _erfcx(a / SQRT2, 0) / keep
    if math.isinf(b):
        m = ta
        v = 1.0 + (a - m) * ta
    else:
        tb = SQRT_2_OVER_PI / _erfcx(b / SQRT2, 0) * math.exp(d) / keep
        m = ta - tb
        v = 1.0 + (a - m) * ta - (b - m) * tb
    return lm, m, v


@nb.njit
def interval_moments(a, b):
    """Log mass, mean and variance of Z restricted to [a, b]."""
    if a >= 0.0:
        return _upper_moments(a, b)
    if b <= 0.0:
        lm, m, v = _upper_moments(-b, -a)
        return lm, -m, v
    p = 0.5 * (math.erf(b / SQRT2) - math.erf(a / SQRT2))
    m = 0.0
    v = 1.0
    if not math.isinf(a):
        ta = math.exp(log_phi(a)) / p
        m += ta
    if not math.isinf(b):
        tb = math.exp(log_phi(b)) / p
        m -= tb
    if not math.isinf(a):
        v += (a - m) * ta
    if not math.isinf(b):
        v -= (b - m) * tb
    return math.log(p), m, v


@nb.njit
def moments(lo, hi, t):
    """Return (log survival, mean, variance) of N(t, 1; S)."""
    r = lo.shape[0]
    lms = np.empty(r)
    ms = np.empty(r)
    vs = np.empty(r)
    for i in range(r):
        lms[i], ms[i], vs[i] = interval_moments(lo[i] - t, hi[i] - t)
    lg = _logsumexp(lms)
    if r == 1:
        return lg, t + ms[0], vs[0]
    mean = 0.0
    for i in range(r):
        mean += math.exp(lms[i] - lg) * ms[i]
    var = 0.0
    for i in range(r):
        dm = ms[i] - mean
        var += math.exp(lms[i] - lg) * (vs[i] + dm * dm)
    return lg, t + mean, var


@nb.njit
def moments_many(lo, hi, ts):
    n = ts.shape[0]
    lg = np.empty(n)
    mean = np.empty(n)
    var = np.empty(n)
    for j in range(n):
        lg[j], mean[j], var[j] = moments(lo, hi, ts[j])
    return lg, mean, var


@nb.njit
def log_survival_many(lo, hi, ts):
    out = np.empty(ts.shape[0])
    for j in range(ts.shape[0]):
        out[j] = log_survival(lo, hi, ts[j])
    return out


@nb.njit
def log_cdf(lo, hi, t, x):
    """log P(Z_t <= x) for Z_t ~ N(t, 1; S)."""
    r = lo.shape[0]
    below = np.full(r, -np.inf)
    total = np.empty(r)
    xs = x - t
    for i in range(r):
        a = lo[i] - t
        b = hi[i] - t
        total[i] = log_mass(a, b)
        if xs >= b:
            below[i] = total[i]
        elif xs > a:
            below[i] = log_mass(a, xs)
    return min(_logsumexp(below) - _logsumexp(total), 0.0)


@nb.njit
def sample_interval(a, b, u):
    """Inverse-CDF draw from Z restricted to [a, b] at mass fraction u.

    Works on the side of zero where the normal tail is represented in
    log space so far-tail intervals keep full relative precision.
    """
    if a >= 0.0:
        la = _log_ndtr(-a, 0)
        lb = _log_tail(b)
        # log Q(x) = log Q(a) + log(1 - u (1 - Q(b)/Q(a)))
        x = -_ndtri_exp(la + math.log1p(u * math.expm1(lb - la)), 0)
    elif b <= 0.0:
        la = _log_tail(-a)
        lb = _log_ndtr(b, 0)
        rho = math.exp(la - lb)
        x = _ndtri_exp(lb + math.log(rho + u * (1.0 - rho)), 0)
    else:
        pa = _ndtr(a, 0)
        pb = _ndtr(b, 0)
        x = _ndtri(pa + u * (pb - pa), 0)
    if x < a:
        x = a
    if x > b:
        x = b
    return x


@nb.njit
def sample_one(lo, hi, t, u_pick, u_draw):
    """One draw from N(t, 1; S) using two uniforms in [0, 1)."""
    r = lo.shape[0]
    if r == 1:
        return t + sample_interval(lo[0] - t, hi[0] - t, u_draw)
    lms = np.empty(r)
    for i in range(r):
        lms[i] = log_mass(lo[i] - t, hi[i] - t)
    lg = _logsumexp(lms)
    # intervals below zeta / 3r of the total mass are never selected
    cut = math.log(ZETA / (3.0 * r))
    w = np.zeros(r)
    total = 0.0
    for i in range(r):
        if lms[i] - lg >= cut:
            w[i] = math.exp(lms[i] - lg)
            total += w[i]
    target = u_pick * total
    acc = 0.0
    pick = -1
    for i in range(r):
        if w[i] > 0.0:
            pick = i
            acc += w[i]
            if acc > target:
                break
    return t + sample_interval(lo[pick] - t, hi[pick] - t, u_draw)


@nb.njit
def sample_many(lo, hi, ts, u_pick, u_draw):
    out = np.empty(ts.shape[0])
    for j in range(ts.shape[0]):
        out[j] = sample_one(lo, hi, ts[j], u_pick[j], u_draw[j])
    return out
