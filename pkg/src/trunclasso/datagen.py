"""Synthetic truncated-regression datasets.

Rows ``A_i ~ N(0, I_n)`` and noise ``eta_i ~ N(0, 1)`` are drawn in a
single stream; a row is kept only when ``y_i = A_i x* + eta_i`` falls in
the truncation set. Datasets serialize to a directory::

    A.csv      m rows of n comma-separated floats (shortest round-trip repr)
    y.csv      m floats, one per line
    meta.json  m, n, seed, set, rejected_count, alpha_hat, alpha_stderr
    xstar.csv  ground truth, written separately so solvers never see it
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import seeding
from .errors import SurvivalTooLow
from .tnormal import TruncationSet, survival

# rows drawn per rejection batch; part of the seed contract
BATCH_ROWS = 1024
# floor on the survival estimate used by the rejection guard
ALPHA_FLOOR = 1e-4
ALPHA_TRIALS = 20000


class AlphaEstimate(NamedTuple):
    value: float
    stderr: float


@dataclass
class Dataset:
    A: np.ndarray
    y: np.ndarray
    set: TruncationSet
    seed: int = 0
    rejected_count: int = 0
    x_star: np.ndarray | None = None
    alpha_hat: float | None = None
    alpha_stderr: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.ascontiguousarray(self.A, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        if self.A.ndim != 2 or self.A.shape[0] < 1 or self.A.shape[1] < 1:
            raise ValueError("A must be a non-empty 2-D array")
        if self.y.shape != (self.A.shape[0],):
            raise ValueError("y length must match the rows of A")
        if self.x_star is not None:
            self.x_star = np.asarray(self.x_star, dtype=np.float64)
            if self.x_star.shape != (self.A.shape[1],):
                raise ValueError("x_star length must match the columns of A")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def k(self):
        return None if self.x_star is None else int(np.count_nonzero(self.x_star))

    def without_truth(self):
        """Copy with the ground truth removed."""
        return Dataset(self.A, self.y, self.set, self.seed, self.rejected_count,
                       None, self.alpha_hat, self.alpha_stderr, dict(self.meta))

    def save(self, directory):
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        _write_matrix(out / "A.csv", self.A)
        _write_vector(out / "y.csv", self.y)
        meta = {
            "m": self.m,
            "n": self.n,
            "seed": int(self.seed),
            "set": str(self.set),
            "rejected_count": int(self.rejected_count),
            "alpha_hat": self.alpha_hat,
            "alpha_stderr": self.alpha_stderr,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        if self.x_star is not None:
            _write_vector(out / "xstar.csv", self.x_star)
        return out

    @classmethod
    def load(cls, directory, with_truth=False):
        """Read a dataset directory; ``xstar.csv`` is only read on request."""
        src = Path(directory)
        meta = json.loads((src / "meta.json").read_text())
        A = np.loadtxt(src / "A.csv", delimiter=",", ndmin=2)
        y = np.loadtxt(src / "y.csv", ndmin=1)
        x_star = None
        if with_truth:
            x_star = np.loadtxt(src / "xstar.csv", ndmin=1)
        if A.shape != (meta["m"], meta["n"]):
            raise ValueError(f"A.csv shape {A.shape} disagrees with meta.json")
        return cls(A, y, TruncationSet.parse(meta["set"]), meta["seed"],
                   meta["rejected_count"], x_star, meta.get("alpha_hat"),
                   meta.get("alpha_stderr"), meta)


def _fmt(v):
    return repr(float(v))


def _write_matrix(path, M):
    with open(path, "w") as fh:
        for row in M.tolist():
            fh.write(",".join(map(_fmt, row)))
            fh.write("\n")


def _write_vector(path, v):
    with open(path, "w") as fh:
        for x in v.tolist():
            fh.write(_fmt(x))
            fh.write("\n")


def sparse_signal(n, k, seed, magnitude=1.0):
    """k-sparse vector with entries +-magnitude on a uniformly random support."""
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    rng = seeding.stream(seed, seeding.SIGNAL)
    x = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    x[support] = magnitude * rng.choice([-1.0, 1.0], size=k)
    return x


def estimate_alpha(x_star, tset, trials=ALPHA_TRIALS, seed=0):
    """Monte-Carlo estimate of E_a[survival(a . x*)] with a ~ N(0, I).

    Uses that ``a . x*`` is exactly N(0, ||x*||^2), so one scalar draw
    stands in for each design row.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    scale = float(np.linalg.norm(x_star))
    rng = seeding.stream(seed, seeding.ALPHA)
    g = scale * rng.standard_normal(trials)
    s = survival(tset, g)
    if trials == 1:
        return AlphaEstimate(float(s[0]), float("nan"))
    return AlphaEstimate(float(s.mean()), float(s.std(ddof=1) / math.sqrt(trials)))


def generate_truncated(x_star, tset, m, seed, alpha_trials=ALPHA_TRIALS):
    """Draw ``m`` rows by the truncated process.

    Raises
    ------
    SurvivalTooLow
        When the estimated survival is below ``ALPHA_FLOOR`` or the number
        of rejections exceeds ``1e4 * m / max(alpha_hat, ALPHA_FLOOR)``.
    """
    x_star = np.asarray(x_star, dtype=np.float64)
    if not np.all(np.isfinite(x_star)):
        raise ValueError("x_star must be finite")
    if m < 1:
        raise ValueError("m must be positive")
    n = x_star.shape[0]
    alpha = estimate_alpha(x_star, tset, alpha_trials, seed)
    if alpha.value < ALPHA_FLOOR:
        raise SurvivalTooLow(f"estimated survival {alpha.value:.3g} below {ALPHA_FLOOR:g}")
    limit = 1e4 * m / max(alpha.value, ALPHA_FLOOR)

    rng = seeding.stream(seed, seeding.GENERATE)
    rows, ys = [], []
    kept = 0
    rejected = 0
    while kept < m:
        A = rng.standard_normal((BATCH_ROWS, n))
        eta = rng.standard_normal(BATCH_ROWS)
        y = A @ x_star + eta
        ok = np.flatnonzero(tset.contains(y))
        need = m - kept
        if ok.size >= need:
            ok = ok[:need]
            rejected += int(ok[-1]) + 1 - need
        else:
            rejected += BATCH_ROWS - ok.size
        rows.append(A[ok])
        ys.append(y[ok])
        kept += ok.size
        if rejected > limit:
            raise SurvivalTooLow(f"{rejected} rejections for {kept} accepted rows")
    return Dataset(np.concatenate(rows), np.concatenate(ys), tset, seed, rejected,
                   x_star.copy(), alpha.value, alpha.stderr)


def generate_adversarial(x_star, noise, m, seed):
    """Untruncated Gaussian design with arbitrary additive noise."""
    x_star = np.asarray(x_star, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (m,):
        raise ValueError("noise must have length m")
    rng = seeding.stream(seed, seeding.GENERATE)
    A = rng.standard_normal((m, x_star.shape[0]))
    return Dataset(A, A @ x_star + noise, TruncationSet.real_line(), seed, 0, x_star.copy(), 1.0, 0.0)


def noise_of_norm(m, eps, seed):
    """Random direction in R^m scaled to Euclidean norm ``eps``."""
    v = seeding.stream(seed, seeding.NOISE).standard_normal(m)
    return v * (eps / np.linalg.norm(v))
