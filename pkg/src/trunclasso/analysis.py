"""Empirical verification harness.

Isometry and RIP checks on (possibly truncated) designs, recovery under
adversarial noise, the ordinary LASSO baseline, error-scaling sweeps and
randomized property checks for the truncated-Gaussian survival function.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, stats

from . import seeding
from .convex import ResidualBall, min_l1
from .datagen import generate_adversarial, generate_truncated, noise_of_norm, sparse_signal
from .errors import MaxItersExceeded, TruncLassoError
from .psgd import SolverConfig, solve
from .tnormal import TruncatedGaussianView, TruncationSet, log_survival, trunc_mean, trunc_var

# stream id for per-cell dataset seeds in sweeps
SWEEP = 7

SWEEP_COLUMNS = ["m", "seed", "l2_error", "l1_error", "support_f1", "runtime_ms"]


# -- isometry ---------------------------------------------------------------


@dataclass
class IsometryReport:
    """Extreme singular values of column-restricted designs, scaled by sqrt(m).

    ``full_*`` refer to ``A_V`` itself; ``min_/max_singular_over_sqrt_m``
    are the worst cases over the sampled row subsets ``J``. Subsets are
    random, so the report lower-bounds the true worst-case violation.
    """

    subset_size: int
    trials: int
    min_singular_over_sqrt_m: float
    max_singular_over_sqrt_m: float
    submatrix_fraction: float
    full_min: float
    full_max: float
    columns: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def _extreme_sv(M):
    s = np.linalg.svd(M, compute_uv=False)
    return float(s.min()), float(s.max())


def check_isometry(data, V, eps, trials, rng):
    """Singular-value band of ``A_{J,V} / sqrt(m)`` over random row subsets.

    Parameters
    ----------
    data : Dataset
    V : sequence of int
        Column indices.
    eps : float
        Row fraction in (0, 1]; subsets have ``ceil(eps * m)`` rows.
    trials : int
    rng : numpy.random.Generator
    """
    V = np.asarray(V, dtype=int)
    m = data.m
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    if V.size == 0 or V.size > m:
        raise ValueError("need 1 <= |V| <= m")
    AV = data.A[:, V]
    root = math.sqrt(m)
    fmin, fmax = _extreme_sv(AV)
    size = int(math.ceil(eps * m))
    lo, hi = math.inf, 0.0
    for _ in range(trials):
        J = rng.choice(m, size=size, replace=False)
        a, b = _extreme_sv(AV[J])
        lo, hi = min(lo, a), max(hi, b)
    if trials == 0:
        lo, hi = fmin, fmax
    return IsometryReport(size, int(trials), lo / root, hi / root, float(eps),
                          fmin / root, fmax / root, V.tolist())


def rip_check(data, s, vectors, rng):
    """Compare ``||A v|| / sqrt(m)`` of random s-sparse unit vectors to the
    singular-value band of ``A`` restricted to each vector's support.

    Returns a list of ``(ratio, lo, hi, ok)`` records where ``ok`` means the
    ratio lies in ``[0.99 lo, 1.01 hi]``.
    """
    out = []
    root = math.sqrt(data.m)
    for _ in range(vectors):
        W = np.sort(rng.choice(data.n, size=s, replace=False))
        v = np.zeros(data.n)
        v[W] = rng.standard_normal(s)
        v /= np.linalg.norm(v)
        rep = check_isometry(data, W, 1.0, 0, rng)
        ratio = float(np.linalg.norm(data.A @ v)) / root
        out.append((ratio, rep.full_min, rep.full_max,
                    0.99 * rep.full_min <= ratio <= 1.01 * rep.full_max))
    return out


# -- adversarial noise ----------------------------------------------------


def adversarial_recover(data, eps, tol=1e-10, max_iters=None):
    """Minimum-l1 point of ``{x : ||A x - y|| <= eps}``."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return min_l1(ResidualBall(data.A, data.y, eps), tol=tol, max_iters=max_iters)


def adversarial_errors(x_star, eps_values, m, seed):
    """Recovery error for each noise level at a fixed design and noise direction.

    Returns ``(errors, constants)`` where ``constants[i] = err_i sqrt(m) / eps_i``
    (``nan`` at ``eps = 0``); the constant is measured, not asserted.
    """
    direction = noise_of_norm(m, 1.0, seed)
    errors, consts = [], []
    for eps in eps_values:
        data = generate_adversarial(x_star, eps * direction, m, seed)
        err = float(np.linalg.norm(adversarial_recover(data, eps) - x_star))
        errors.append(err)
        consts.append(err * math.sqrt(m) / eps if eps > 0 else math.nan)
    return errors, consts


# -- naive LASSO baseline -------------------------------------------------


def _soft(v, k):
    return np.sign(v) * np.maximum(np.abs(v) - k, 0.0)


def naive_lasso(data, lam, tol=1e-8, max_iters=100_000):
    """Ordinary LASSO ``(1/2m)||A x - y||^2 + lam ||x||_1`` ignoring truncation.

    Accelerated proximal gradient with backtracking on the Lipschitz
    estimate and gradient-based adaptive restart. Stops when the gradient
    map norm falls to ``tol``.

    Raises
    ------
    MaxItersExceeded
        With the last iterate and its gradient-map norm.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    A, y, m = data.A, data.y, data.m
    Aty = A.T @ y / m
    if lam >= np.abs(Aty).max():
        return np.zeros(data.n)

    def grad(x):
        return A.T @ (A @ x) / m - Aty

    def smooth(x):
        r = A @ x - y
        return 0.5 * float(r @ r) / m

    x = np.zeros(data.n)
    z = x.copy()
    t = 1.0
    L = 1.0
    gmap = math.inf
    for _ in range(max_iters):
        g = grad(z)
        fz = smooth(z)
        while True:
            x_new = _soft(z - g / L, lam / L)
            d = x_new - z
            if smooth(x_new) <= fz + g @ d + 0.5 * L * (d @ d) + 1e-15 * abs(fz):
                break
            L *= 2.0
        gmap = L * float(np.linalg.norm(d))
        if gmap <= tol:
            return x_new
        if d @ (x_new - x) > 0:
            # momentum points uphill; restart
            t = 1.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t = x_new, t_new
        L *= 0.9
    raise MaxItersExceeded(f"naive_lasso stopped with gradient map {gmap:.3g}", x, gmap)


# -- error sweeps ---------------------------------------------------------


@dataclass
class SweepConfig:
    """Grid of ``(m, seed)`` cells at fixed ``(n, k, set)``.

    The signal depends on the seed only, so every ``m`` sees the same
    ``x*`` for a given seed. ``solver`` holds :class:`SolverConfig`
    overrides shared by all cells.
    """

    n: int = 200
    k: int = 5
    set: str = "[-inf,inf]"
    ms: tuple = (250, 500, 1000, 2000)
    seeds: tuple = (0, 1, 2, 3, 4)
    magnitude: float = 1.0
    solver: dict = field(default_factory=dict)
    baseline: bool = True
    workers: int = 1

    def __post_init__(self):
        self.ms = tuple(int(m) for m in self.ms)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.ms or not self.seeds:
            raise ValueError("sweep grid is empty")
        TruncationSet.parse(self.set)
        SolverConfig(**self.solver)


@dataclass
class SweepResult:
    config: SweepConfig
    records: list
    slope: float = math.nan
    slope_stderr: float = math.nan
    intercept: float = math.nan
    constant: float = math.nan
    medians: dict = field(default_factory=dict)
    baseline_medians: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def summary(self):
        return {
            "config": asdict(self.config),
            "fit": {"slope": self.slope, "slope_stderr": self.slope_stderr,
                    "intercept": self.intercept, "constant": self.constant,
                    "model": "l2_error = constant * (k log n / m) ** (-slope)"},
            "median_l2_error": {str(m): v for m, v in self.medians.items()},
            "baseline_median_l2_error": {str(m): v for m, v in self.baseline_medians.items()},
            "failures": self.failures,
        }

    def write(self, directory):
        """Write ``sweep.csv`` and ``summary.json`` into ``directory``."""
        from pathlib import Path

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for rec in self.records:
                w.writerow([rec[c] if isinstance(rec[c], int) else repr(float(rec[c]))
                            for c in SWEEP_COLUMNS])
        text = json.dumps(self.summary(), indent=2, sort_keys=True)
        (out / "summary.json").write_text(text + "\n")
        return out


def cell_seed(seed, m):
    """Dataset seed for sweep cell ``(m, seed)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(SWEEP, int(m)))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def support_f1(x_hat, x_star, threshold):
    est = np.abs(x_hat) >= threshold
    true = x_star != 0
    tp = int(np.sum(est & true))
    if not est.any() and not true.any():
        return 1.0
    denom = int(est.sum()) + int(true.sum())
    return 2.0 * tp / denom


def _run_cell(args):
    cfg, m, seed = args
    tset = TruncationSet.parse(cfg.set)
    x_star = sparse_signal(cfg.n, cfg.k, seed, cfg.magnitude)
    rec = {"m": m, "seed": seed}
    start = time.perf_counter()
    try:
        data = generate_truncated(x_star, tset, m, cell_seed(seed, m))
        blind = data.without_truth()
        rep = solve(blind, SolverConfig(**{"seed": seed, **cfg.solver}))
        x_hat = rep.x_bar
        thr = 0.5 * (np.abs(x_star[x_star != 0]).min() if cfg.k else cfg.magnitude)
        rec.update(l2_error=float(np.linalg.norm(x_hat - x_star)),
                   l1_error=float(np.abs(x_hat - x_star).sum()),
                   support_f1=support_f1(x_hat, x_star, thr))
        rec["runtime_ms"] = 1e3 * (time.perf_counter() - start)
        if cfg.baseline:
            try:
                x_naive = naive_lasso(blind, rep.lam)
            except MaxItersExceeded as exc:
                x_naive = exc.best
            rec["naive_l2_error"] = float(np.linalg.norm(x_naive - x_star))
        rec["error"] = None
    except (TruncLassoError, ValueError, ArithmeticError) as exc:
        rec.update(l2_error=math.nan, l1_error=math.nan, support_f1=math.nan,
                   runtime_ms=1e3 * (time.perf_counter() - start), naive_l2_error=math.nan,
                   error=f"{type(exc).__name__}: {exc}")
    return rec


def error_sweep(config):
    """Run the solver over the ``(m, seed)`` grid and fit the error rate.

    Log error is regressed on log m over all finite positive cell errors;
    ``slope`` is the fitted exponent of m (the rate theory predicts is
    -1/2) and ``constant`` is ``C`` in ``err = C (k log n / m) ** (-slope)``.
    With ``k = 0`` the fit is skipped. Failed cells are kept with NaN
    errors and listed in ``failures``.
    """
    cells = [(config, m, s) for m in config.ms for s in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            records = list(pool.map(_run_cell, cells))
    else:
        records = [_run_cell(c) for c in cells]
    res = SweepResult(config, records)
    res.failures = [{"m": r["m"], "seed": r["seed"], "error": r["error"]}
                    for r in records if r["error"]]
    for m in config.ms:
        errs = [r["l2_error"] for r in records if r["m"] == m and not r["error"]]
        res.medians[m] = float(np.median(errs)) if errs else math.nan
        if config.baseline:
            nv = [r["naive_l2_error"] for r in records if r["m"] == m and not r["error"]]
            res.baseline_medians[m] = float(np.median(nv)) if nv else math.nan
    pts = [(math.log(r["m"]), math.log(r["l2_error"])) for r in records
           if not r["error"] and r["l2_error"] > 0]
    if config.k > 0 and len({p[0] for p in pts}) >= 2:
        fit = stats.linregress(*zip(*pts))
        res.slope, res.slope_stderr, res.intercept = fit.slope, fit.stderr, fit.intercept
        scale = config.k * math.log(config.n)
        res.constant = math.exp(fit.intercept) * scale ** fit.slope
    return res


# -- survival-function properties -------------------------------------------


def random_set(rng, max_intervals=3, span=4.0, min_width=0.05):
    """Random truncation set with up to ``max_intervals`` pieces.

    Ends are sorted uniform draws in roughly ``[-span, span]`` pushed apart
    so every piece and every gap is at least ``min_width`` long; the
    outermost ends are made infinite with probability 1/3 each.
    """
    r = int(rng.integers(1, max_intervals + 1))
    pts = np.sort(rng.uniform(-span, span, 2 * r)) + min_width * (np.arange(2 * r) - r)
    ivs = [[pts[2 * i], pts[2 * i + 1]] for i in range(r)]
    if rng.random() < 1 / 3:
        ivs[0][0] = -math.inf
    if rng.random() < 1 / 3:
        ivs[-1][1] = math.inf
    return TruncationSet(tuple(map(tuple, ivs)))


def quad_moments(tset, t):
    """Survival, mean, variance and E[R_t^2] of N(t, 1; S) by adaptive quadrature.

    Independent oracle for the closed-form routines. Each interval is
    integrated separately against ``phi(z - t)``; central moments are taken
    in a second pass about the computed mean so narrow intervals keep
    their precision.
    """
    pieces = []
    for a, b in tset.intervals:
        lo, hi = max(a, t - 40.0), min(b, t + 40.0)
        if lo < hi:
            pieces.append((lo, hi))

    def integral(f):
        with warnings.catch_warnings():
            # roundoff warnings only mean the double-precision floor was hit
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return sum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-12, limit=200)[0]
                       for lo, hi in pieces)

    def pdf(z):
        return math.exp(-0.5 * (z - t) ** 2) / math.sqrt(2 * math.pi)

    g = integral(pdf)
    # shift by the interval midpoint scale to avoid cancellation in the mean
    c = 0.5 * (pieces[0][0] + pieces[-1][1])
    mean = c + integral(lambda z: (z - c) * pdf(z)) / g
    var = integral(lambda z: (z - mean) ** 2 * pdf(z)) / g
    r2 = integral(lambda z: (z - t) ** 2 * pdf(z)) / g
    return g, mean, var, r2


@dataclass
class PropertyReport:
    cases: int
    derivative_max_rel_error: float
    sign_violations: int
    decay_violations: int
    second_moment_violations: int
    variance_nonpositive: int

    @property
    def ok(self):
        return (self.derivative_max_rel_error <= 1e-4 and not self.sign_violations
                and not self.decay_violations and not self.second_moment_violations
                and not self.variance_nonpositive)

    def to_dict(self):
        return {**asdict(self), "ok": self.ok}


def survival_properties(rng, cases=1000, h=1e-5):
    """Randomized checks of the survival and moment identities.

    Per case ``(S, t, t*)``: the derivative of the mean equals the variance,
    the mean is strictly increasing in t, and

        log(1/g(t)) <= 2 log(1/g(t*)) + |t - t*|^2 + 2,
        E[R_t^2] <= 2 log(1/g(t)) + 4,

    with ``E[R_t^2]`` taken from quadrature.
    """
    worst = 0.0
    sign = decay = second = nonpos = 0
    done = 0
    while done < cases:
        tset = random_set(rng)
        t, ts = rng.uniform(-5, 5, 2)
        if log_survival(tset, t) < -600 or log_survival(tset, ts) < -600:
            continue
        done += 1
        view = TruncatedGaussianView(t, tset)
        var = trunc_var(view)
        nonpos += var <= 0
        fd = (trunc_mean(TruncatedGaussianView(t + h, tset))
              - trunc_mean(TruncatedGaussianView(t - h, tset))) / (2 * h)
        worst = max(worst, abs(fd - var) / var)
        mu_s = trunc_mean(TruncatedGaussianView(ts, tset))
        if t != ts and np.sign(trunc_mean(view) - mu_s) != np.sign(t - ts):
            sign += 1
        lg, lgs = log_survival(tset, t), log_survival(tset, ts)
        if -lg > -2 * lgs + (t - ts) ** 2 + 2:
            decay += 1
        if quad_moments(tset, t)[3] > -2 * lg + 4:
            second += 1
    return PropertyReport(cases, worst, sign, decay, second, int(nonpos))


def check_stream(seed):
    """Generator used by the ``check`` command."""
    return seeding.stream(seed, seeding.CHECK)
