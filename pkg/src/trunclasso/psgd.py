"""Truncated-LASSO objective and its projected SGD solver.

The objective is the average truncated negative log-likelihood plus an
l1 penalty,

    f(x) = (1/m) sum_j [ (A_j x - y_j)^2 / 2 + log(sqrt(2 pi) gamma_S(A_j x)) ]
           + lam * ||x||_1,

minimized over the residual ball ``{x : ||A x - y|| <= r sqrt(m)}``.
The solver starts from the minimum-l1 point of the ball and takes single
sample steps ``v = A_j (z - y_j) + lam sign(x)`` with ``z ~ N(A_j x, 1; S)``,
step size ``sqrt(1 / (n N))``, projecting after every step and returning
the average of the iterates ``x_0 .. x_{N-1}``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field

import numba as nb
import numpy as np

from . import seeding
from ._kernels import LOG_SQRT_2PI, sample_one
from .convex import ResidualBall, min_l1, secular_root
from .errors import MaxItersExceeded
from .tnormal import moments_at, sample_at

# steps per compiled chunk; z = V^T x and V^T sign(x) are re-synced between chunks
CHUNK = 4096


@dataclass
class SolverConfig:
    """Solver knobs. ``None`` fields are resolved against the data.

    ``sigma`` scales the default regularization ``sigma * sqrt(log n / m)``;
    ``lam`` overrides it. ``r`` defaults to ``2 / sqrt(alpha_hat) + 2``,
    ``steps`` to ``200 m log n`` and ``step_size`` to ``sqrt(1 / (n steps))``.
    """

    sigma: float = 2.0
    lam: float | None = None
    r: float | None = None
    steps: int | None = None
    step_size: float | None = None
    seed: int = 0
    record_trace: bool = False
    trace_points: int = 64
    proj_tol: float = 1e-10
    l1_tol: float = 1e-8
    l1_max_iters: int | None = None

    def __post_init__(self):
        if self.sigma < 0 or (self.lam is not None and self.lam < 0):
            raise ValueError("regularization must be non-negative")
        if self.r is not None and not self.r > 0:
            raise ValueError("r must be positive")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be positive")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be positive")

    def resolve(self, data):
        m, n = data.m, data.n
        log_n = math.log(n) if n > 1 else 1.0
        lam = self.sigma * math.sqrt(log_n / m) if self.lam is None else float(self.lam)
        r = default_radius(data) if self.r is None else float(self.r)
        steps = int(math.ceil(200 * m * log_n)) if self.steps is None else int(self.steps)
        eta = math.sqrt(1.0 / (n * steps)) if self.step_size is None else float(self.step_size)
        return lam, r, steps, eta


def default_radius(data):
    """``2 / sqrt(alpha_hat) + 2`` with the generator's survival estimate.

    Falls back to the empirical acceptance rate, then to ``alpha = 1``.
    """
    alpha = data.alpha_hat
    if alpha is None and data.rejected_count is not None:
        alpha = data.m / (data.m + data.rejected_count)
    alpha = 1.0 if alpha is None else min(max(float(alpha), 1e-4), 1.0)
    return 2.0 * math.sqrt(1.0 / alpha) + 2.0


def nll(x, data):
    """Average truncated negative log-likelihood.

    Raises :class:`~trunclasso.errors.NumericalUnderflow` naming the row
    whose survival probability underflows.
    """
    t = data.A @ x
    lg, _, _ = moments_at(data.set, t)
    return float(np.mean(0.5 * (t - data.y) ** 2 + lg) + LOG_SQRT_2PI)


def nll_gradient(x, data):
    """``(1/m) A^T (E[Z_{A x}] - y)``."""
    t = data.A @ x
    _, mean, _ = moments_at(data.set, t)
    return data.A.T @ (mean - data.y) / data.m


def objective(x, data, lam):
    return nll(x, data) + lam * float(np.abs(x).sum())


def stochastic_gradient(x, data, lam, rng):
    """One-sample unbiased subgradient of the objective (sign(0) = 0)."""
    j = int(rng.integers(data.m))
    t = data.A[j] @ x
    z = sample_at(data.set, np.array([t]), rng)[0]
    return data.A[j] * (z - data.y[j]) + lam * np.sign(x)


@nb.njit
def _run_chunk(A, y, lo, hi, V, AV, sv, c, beta, lam, eta, proj_tol,
               x, z, q, sgn, xsum, draws, stats):
    n = A.shape[1]
    p = sv.shape[0]
    w = np.empty(n)
    zw = np.empty(p)
    e = np.empty(p)
    m = A.shape[0]
    for step in range(draws.shape[0]):
        j = min(int(draws[step, 0] * m), m - 1)
        for i in range(n):
            xsum[i] += x[i]
        t = 0.0
        for i in range(n):
            t += A[j, i] * x[i]
        s = sample_one(lo, hi, t, draws[step, 1], draws[step, 2]) - y[j]
        vsq = 0.0
        for i in range(n):
            v = s * A[j, i] + lam * sgn[i]
            vsq += v * v
            w[i] = x[i] - eta * v
        stats[0] += vsq
        r2 = 0.0
        for l in range(p):
            zw[l] = z[l] - eta * (s * AV[j, l] + lam * q[l])
            e[l] = sv[l] * zw[l] - c[l]
            r2 += e[l] * e[l]
        if r2 > beta * beta:
            stats[1] += 1.0
            if beta == 0.0:
                nu = np.inf
            else:
                nu = secular_root(e, sv, beta, proj_tol)
            for l in range(p):
                if beta == 0.0:
                    zn = c[l] / sv[l]
                else:
                    zn = (zw[l] + nu * sv[l] * c[l]) / (1.0 + nu * sv[l] * sv[l])
                dz = zn - zw[l]
                z[l] = zn
                for i in range(n):
                    w[i] += V[i, l] * dz
        else:
            for l in range(p):
                z[l] = zw[l]
        for i in range(n):
            x[i] = w[i]
            ns = 0.0
            if w[i] > 0.0:
                ns = 1.0
            elif w[i] < 0.0:
                ns = -1.0
            if ns != sgn[i]:
                d = ns - sgn[i]
                for l in range(p):
                    q[l] += d * V[i, l]
                sgn[i] = ns


@dataclass
class RecoveryReport:
    x_bar: np.ndarray
    x_init: np.ndarray
    lam: float
    r: float
    radius: float
    steps: int
    step_size: float
    seed: int
    feasibility_residual: float
    l1_norm: float
    objective: float
    mean_sq_step: float
    step_constant: float
    projections: int
    init: dict
    objective_trace: list | None = None
    wall_time: float = 0.0
    config: dict = field(default_factory=dict)

    @property
    def feasible(self):
        return self.feasibility_residual <= self.radius * (1 + 1e-6)

    def to_dict(self):
        out = asdict(self)
        out["x_bar"] = self.x_bar.tolist()
        out["x_init"] = self.x_init.tolist()
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["x_bar"] = np.asarray(d["x_bar"], dtype=float)
        d["x_init"] = np.asarray(d["x_init"], dtype=float)
        return cls(**d)


def solve(data, config=None):
    """Run projected SGD on the truncated-LASSO program.

    Deterministic given ``config.seed``. A capped initial l1 solve is not
    fatal: its best iterate is used and the cap is noted in ``report.init``.
    """
    config = SolverConfig() if config is None else config
    start = time.perf_counter()
    lam, r, steps, eta = config.resolve(data)
    m, n = data.m, data.n
    ball = ResidualBall(data.A, data.y, r * math.sqrt(m))

    try:
        res = min_l1(ball, tol=config.l1_tol, max_iters=config.l1_max_iters, return_info=True)
        x0 = res.x
        init = {"iterations": res.iterations, "gap": float(res.gap),
                "converged": res.converged, "polished": res.polished}
    except MaxItersExceeded as exc:
        x0 = exc.best
        init = {"iterations": config.l1_max_iters, "gap": float(exc.gap),
                "converged": False, "polished": False}

    A = data.A
    V = ball.V
    AV = np.ascontiguousarray(A @ V)
    lo, hi = data.set.lo, data.set.hi
    x = x0.copy()
    sgn = np.sign(x)
    xsum = np.zeros(n)
    stats = np.zeros(2)
    rng = seeding.stream(config.seed, seeding.SOLVE)
    trace = [] if config.record_trace else None
    stride = max(1, math.ceil(steps / CHUNK / max(config.trace_points, 1)))
    done = 0
    chunk_id = 0
    while done < steps:
        size = min(CHUNK, steps - done)
        draws = rng.random(3 * size).reshape(size, 3)
        z = V.T @ x
        q = V.T @ sgn
        _run_chunk(A, data.y, lo, hi, V, AV, ball.sv, ball.c, ball.beta, lam, eta,
                   config.proj_tol, x, z, q, sgn, xsum, draws, stats)
        done += size
        chunk_id += 1
        if trace is not None and (chunk_id % stride == 0 or done == steps):
            trace.append([done, objective(xsum / done, data, lam)])

    x_bar = xsum / steps
    report = RecoveryReport(
        x_bar=x_bar,
        x_init=x0,
        lam=lam,
        r=r,
        radius=ball.radius,
        steps=steps,
        step_size=eta,
        seed=int(config.seed),
        feasibility_residual=ball.residual_norm(x_bar),
        l1_norm=float(np.abs(x_bar).sum()),
        objective=objective(x_bar, data, lam),
        mean_sq_step=float(stats[0] / steps),
        step_constant=float(stats[0] / steps / n),
        projections=int(stats[1]),
        init=init,
        objective_trace=trace,
        config=asdict(config),
    )
    report.wall_time = time.perf_counter() - start
    return report
