"""Projection onto, and l1 minimization over, a residual ball.

The ball is ``{x : ||A x - y||_2 <= radius}``. A thin SVD ``A = U S V^T``
is computed once; in the coordinates ``z = V^T x`` the constraint reads
``||S z - U^T y||^2 <= radius^2 - ||y_perp||^2`` and the projection
reduces to a scalar secular equation in the Lagrange multiplier.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import EmptyFeasibleSet, MaxItersExceeded, SingularFactorization


@nb.njit
def _resid(e, sv, nu):
    s = 0.0
    for i in range(e.shape[0]):
        r = e[i] / (1.0 + nu * sv[i] * sv[i])
        s += r * r
    return math.sqrt(s)


@nb.njit
def secular_root(e, sv, beta, tol):
    """Multiplier nu >= 0 with ||e / (1 + nu sv^2)|| = beta to relative tol.

    Requires ``||e|| > beta > 0``. Newton on ``1/beta - 1/||r(nu)||``,
    safeguarded by bisection inside a bracket whose upper end is doubled
    until it is feasible. The returned multiplier never leaves the
    residual above ``beta * (1 + tol)``.
    """
    smax = 0.0
    for s in sv:
        smax = max(smax, s)
    hi = 1.0 / (smax * smax)
    for _ in range(4000):
        if _resid(e, sv, hi) <= beta:
            break
        hi *= 2.0
    lo = 0.0
    nu = 0.0
    for _ in range(200):
        s2 = 0.0
        ds2 = 0.0
        for i in range(e.shape[0]):
            d = 1.0 + nu * sv[i] * sv[i]
            r = e[i] / d
            s2 += r * r
            ds2 -= 2.0 * r * r * sv[i] * sv[i] / d
        rn = math.sqrt(s2)
        if abs(rn - beta) <= tol * beta:
            return nu
        if rn > beta:
            lo = nu
        else:
            hi = nu
        # psi(nu) = 1/beta - 1/rn, psi' = ds2 / (2 rn^3)
        slope = 0.5 * ds2 / (rn * rn * rn)
        step = nu - (1.0 / beta - 1.0 / rn) / slope if slope < 0.0 else hi
        if not lo < step < hi:
            step = 0.5 * (lo + hi)
        if step == nu:
            break
        nu = step
    return hi


@dataclass(frozen=True, eq=False)
class ResidualBall:
    """The set ``{x : ||A x - y||_2 <= radius}`` with a cached thin SVD.

    ``radius == 0`` is allowed and means the affine set ``A x = y``.
    """

    A: np.ndarray
    y: np.ndarray
    radius: float

    def __post_init__(self):
        A = np.ascontiguousarray(self.A, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        radius = float(self.radius)
        if not radius >= 0.0:
            raise ValueError("radius must be non-negative")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(y))):
            raise SingularFactorization("non-finite entries in A or y")
        try:
            U, s, Vt = np.linalg.svd(A, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise SingularFactorization(str(exc)) from exc
        cut = s[0] * max(A.shape) * np.finfo(float).eps if s.size else 0.0
        p = int(np.count_nonzero(s > cut))
        if p == 0:
            raise SingularFactorization("design matrix is zero")
        U, s, V = U[:, :p], s[:p], np.ascontiguousarray(Vt[:p].T)
        c = U.T @ y
        y_perp2 = float(np.sum((y - U @ c) ** 2))
        beta2 = radius * radius - y_perp2
        if math.sqrt(y_perp2) > radius + 1e-10 * np.linalg.norm(y):
            raise EmptyFeasibleSet(
                f"radius {radius:.6g} below least-squares residual {math.sqrt(y_perp2):.6g}")
        for name, val in [("A", A), ("y", y), ("radius", radius), ("U", np.ascontiguousarray(U)),
                          ("sv", s), ("V", V), ("c", c), ("beta", math.sqrt(max(beta2, 0.0)))]:
            object.__setattr__(self, name, val)

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    def residual_norm(self, x):
        return float(np.linalg.norm(self.A @ x - self.y))

    def contains(self, x, rtol=1e-9):
        return self.residual_norm(x) <= self.radius * (1.0 + rtol) + 1e-12 * np.linalg.norm(self.y)

    def least_squares_point(self):
        """Minimum-norm least-squares solution (always feasible)."""
        return self.V @ (self.c / self.sv)


def project(ball, v, tol=1e-10):
    """Euclidean projection of ``v`` onto ``ball``.

    Feasible points come back unchanged. Otherwise the stationarity
    system ``x(nu) = (I + nu A^T A)^{-1} (v + nu A^T y)`` is solved in the
    SVD basis and ``nu`` is found by :func:`secular_root`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.asarray(v, dtype=np.float64)
    z = ball.V.T @ v
    e = ball.sv * z - ball.c
    if e @ e <= ball.beta * ball.beta:
        return v.copy()
    if ball.beta == 0.0:
        z_new = ball.c / ball.sv
    else:
        nu = secular_root(e, ball.sv, ball.beta, tol)
        z_new = (z + nu * ball.sv * ball.c) / (1.0 + nu * ball.sv ** 2)
    return v + ball.V @ (z_new - z)


def _soft(v, k):
    return np.sign(v) * np.maximum(np.abs(v) - k, 0.0)


def _dual_value(ball, mu):
    """Scaled dual objective of min ||x||_1 s.t. ||Ax - y|| <= radius.

    Any ``mu`` is rescaled to satisfy ``||A^T mu||_inf <= 1``; the result
    lower-bounds the optimal l1 norm.
    """
    g = np.abs(ball.A.T @ mu).max()
    if not g > 0:
        return 0.0
    val = (ball.y @ mu - ball.radius * np.linalg.norm(mu)) / g
    return max(val, 0.0)


def _polish(ball, x):
    """Closed-form optimum restricted to the support and signs of ``x``."""
    T = np.flatnonzero(x)
    if T.size == 0 or T.size > ball.m:
        return None, None
    AT = ball.A[:, T]
    s = np.sign(x[T])
    try:
        Q, R = np.linalg.qr(AT)
        if np.min(np.abs(np.diag(R))) < 1e-12 * np.max(np.abs(np.diag(R))):
            return None, None
        x_ls = np.linalg.solve(R, Q.T @ ball.y)
        Gs = np.linalg.solve(R, np.linalg.solve(R.T, s))
    except np.linalg.LinAlgError:
        return None, None
    r_ls2 = float(np.sum((ball.y - AT @ x_ls) ** 2))
    slack = ball.radius ** 2 - r_ls2
    quad = float(s @ Gs)
    if slack < 0 or quad <= 0:
        return None, None
    xT = x_ls - math.sqrt(slack / quad) * Gs
    out = np.zeros(ball.n)
    out[T] = xT
    # the support-restricted dual certificate for the polished point
    return out, AT @ Gs


@dataclass
class L1Result:
    x: np.ndarray
    iterations: int
    gap: float
    converged: bool
    polished: bool = False


def min_l1(ball, tol=1e-8, max_iters=None, rho=None, relax=1.6, return_info=False):
    """Minimize ``||x||_1`` over ``ball``.

    ADMM on ``||x||_1 + indicator(z in ball)`` with ``x = z``: the x-step is
    soft-thresholding, the z-step is :func:`project`, with over-relaxation
    ``relax`` and residual-balancing penalty updates. Every few iterations
    a duality gap is formed from the feasible iterate and two dual
    candidates; a support/sign polish is attempted at the same time. Stops
    when the gap is below ``tol * max(1, ||x||_1)``.

    Raises
    ------
    MaxItersExceeded
        Carrying the best feasible iterate and its gap.
    """
    n = ball.n
    max_iters = 50 * n if max_iters is None else int(max_iters)
    if np.linalg.norm(ball.y) <= ball.radius:
        res = L1Result(np.zeros(n), 0, 0.0, True)
        return res if return_info else res.x

    x_ls = ball.least_squares_point()
    best, best_l1 = x_ls, np.abs(x_ls).sum()
    z = x_ls.copy()
    u = np.zeros(n)
    rho = n / max(best_l1, 1e-12) if rho is None else float(rho)
    gap = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        x = _soft(z - u, 1.0 / rho)
        xh = relax * x + (1.0 - relax) * z
        z_old = z
        z = project(ball, xh + u)
        u = u + xh - z
        if it % 10 and it != max_iters:
            continue
        l1 = np.abs(z).sum()
        if l1 < best_l1:
            best, best_l1 = z, l1
        # dual candidates: residual direction and the ADMM multiplier mapped
        # back through A^T by least squares
        mu_b = ball.U @ ((ball.V.T @ (-rho * u)) / ball.sv)
        lower = max(_dual_value(ball, ball.y - ball.A @ z), _dual_value(ball, mu_b))
        gap = best_l1 - lower
        polished, mu_p = _polish(ball, x)
        if polished is not None and ball.contains(polished):
            p_l1 = np.abs(polished).sum()
            p_lower = max(_dual_value(ball, mu_p), _dual_value(ball, ball.y - ball.A @ polished), lower)
            if p_l1 - p_lower <= tol * max(1.0, p_l1):
                res = L1Result(polished, it, p_l1 - p_lower, True, True)
                return res if return_info else res.x
        if gap <= tol * max(1.0, best_l1):
            res = L1Result(best, it, gap, True)
            return res if return_info else res.x
        r = np.linalg.norm(x - z)
        s = rho * np.linalg.norm(z - z_old)
        if r > 10.0 * s:
            rho *= 2.0
            u /= 2.0
        elif s > 10.0 * r:
            rho /= 2.0
            u *= 2.0
    raise MaxItersExceeded(f"min_l1 stopped after {it} iterations with gap {gap:.3g}", best, gap)
