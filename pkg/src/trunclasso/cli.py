"""Command-line front end.

Subcommands::

    gen     generate a truncated dataset directory
    solve   run projected SGD on a dataset, write a report JSON
    eval    score a report against the dataset's ground truth
    sweep   error-scaling sweep over an (m, seed) grid
    check   isometry, RIP and survival-property reports for a dataset
    sample  draw from a truncated Gaussian

Settings come from an optional JSON ``--config`` file whose keys are the
fields of :class:`ExperimentConfig`; explicit flags override it. Exit
codes: 0 success, 2 input error, 3 solver error. Errors are reported as a
JSON object on standard error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis, seeding
from .datagen import Dataset, generate_truncated, sparse_signal
from .errors import (
    EmptyFeasibleSet,
    InvalidView,
    SurvivalTooLow,
    ToleranceUnreachable,
    TruncationSetError,
    TruncLassoError,
)
from .psgd import RecoveryReport, SolverConfig, solve
from .tnormal import TruncatedGaussianView, TruncationSet, sample

EXIT_INPUT = 2
EXIT_SOLVER = 3


class InputError(Exception):
    """Bad command-line or configuration input."""


@dataclass
class ExperimentConfig:
    n: int = 200
    k: int = 5
    m: int = 1000
    ms: list | None = None
    set: str = "[0,inf]"
    seed: int = 0
    seeds: list | None = None
    out: str | None = None
    sigma: float = 2.0
    lam: float | None = None
    r: float | None = None
    steps: int | None = None
    step_size: float | None = None
    record_trace: bool = False
    magnitude: float = 1.0
    workers: int = 1
    baseline: bool = True
    eps: float = 0.25
    trials: int = 20
    rip_vectors: int = 50
    property_cases: int = 1000

    @classmethod
    def from_file(cls, path):
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError("config file must hold a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**raw)

    def solver(self):
        return SolverConfig(sigma=self.sigma, lam=self.lam, r=self.r, steps=self.steps,
                            step_size=self.step_size, seed=self.seed,
                            record_trace=self.record_trace)

    def truncation_set(self):
        return TruncationSet.parse(self.set)


# flag dest -> config field
_OVERRIDES = {"seed": "seed", "out": "out", "set": "set", "n": "n", "k": "k", "m": "m",
              "lambda_sigma": "sigma", "radius": "r", "steps": "steps"}


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _common(p):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--set", help='truncation set, e.g. "[0,inf]" or "[-2,-1],[1,2]"')
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--lambda-sigma", type=float, help="sigma in lambda = sigma sqrt(log n / m)")
    p.add_argument("--radius", type=float, help="r in the residual ball ||Ax - y|| <= r sqrt(m)")
    p.add_argument("--steps", type=int)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser():
    parser = _Parser(prog="trunclasso", description="Sparse recovery from truncated samples.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a dataset directory")
    _common(p)

    p = sub.add_parser("solve", help="solve the truncated-LASSO program on a dataset")
    _common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--trace", action="store_true", help="record the objective trace")

    p = sub.add_parser("eval", help="score a report against xstar.csv")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)

    p = sub.add_parser("sweep", help="error-scaling sweep")
    _common(p)
    p.add_argument("--ms", type=_int_list, help="comma-separated sample sizes")
    p.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("check", help="isometry and property reports for a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--cases", type=int, help="survival-property cases")

    p = sub.add_parser("sample", help="draw from N(t, 1; S)")
    _common(p)
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--count", type=int, default=10)
    return parser


def _resolve(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    for flag, name in _OVERRIDES.items():
        val = getattr(args, flag, None)
        if val is not None:
            setattr(cfg, name, val)
    for name in ("ms", "seeds", "workers"):
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "cases", None) is not None:
        cfg.property_cases = args.cases
    if getattr(args, "trace", False):
        cfg.record_trace = True
    return cfg


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load(directory, with_truth=False):
    try:
        return Dataset.load(directory, with_truth=with_truth)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot load dataset {directory}: {exc}") from None


def cmd_gen(cfg):
    if cfg.out is None:
        raise InputError("gen needs --out")
    tset = cfg.truncation_set()
    x_star = sparse_signal(cfg.n, cfg.k, cfg.seed, cfg.magnitude)
    data = generate_truncated(x_star, tset, cfg.m, cfg.seed)
    data.save(cfg.out)
    _emit({"out": str(cfg.out), "m": data.m, "n": data.n, "rejected_count": data.rejected_count,
           "alpha_hat": data.alpha_hat, "alpha_stderr": data.alpha_stderr})


def cmd_solve(cfg, data_dir):
    data = _load(data_dir)
    report = solve(data, cfg.solver())
    _emit(report.to_dict(), cfg.out)


def cmd_eval(cfg, data_dir, report_path):
    data = _load(data_dir, with_truth=True)
    try:
        report = RecoveryReport.from_dict(json.loads(Path(report_path).read_text()))
    except (OSError, ValueError, TypeError, KeyError) as exc:
        raise InputError(f"cannot load report {report_path}: {exc}") from None
    x_star, x = data.x_star, report.x_bar
    if x.shape != x_star.shape:
        raise InputError("report and dataset dimensions differ")
    k = int(np.count_nonzero(x_star))
    thr = 0.5 * (np.abs(x_star[x_star != 0]).min() if k else 1.0)
    naive = analysis.naive_lasso(data, report.lam)
    _emit({
        "l2_error": float(np.linalg.norm(x - x_star)),
        "l1_error": float(np.abs(x - x_star).sum()),
        "linf_error": float(np.abs(x - x_star).max()),
        "init_l2_error": float(np.linalg.norm(report.x_init - x_star)),
        "support_f1": analysis.support_f1(x, x_star, thr),
        "feasible": bool(report.feasible),
        "feasibility_residual": report.feasibility_residual,
        "radius": report.radius,
        "naive_l2_error": float(np.linalg.norm(naive - x_star)),
        "rate_scale": math.sqrt(max(k, 1) * math.log(data.n) / data.m),
    }, cfg.out)


def cmd_sweep(cfg):
    sweep = analysis.SweepConfig(
        n=cfg.n, k=cfg.k, set=cfg.set,
        ms=tuple(cfg.ms) if cfg.ms else (cfg.m,),
        seeds=tuple(cfg.seeds) if cfg.seeds else (cfg.seed,),
        magnitude=cfg.magnitude,
        solver={"sigma": cfg.sigma, "lam": cfg.lam, "r": cfg.r, "steps": cfg.steps,
                "step_size": cfg.step_size},
        baseline=cfg.baseline, workers=cfg.workers)
    result = analysis.error_sweep(sweep)
    if cfg.out:
        result.write(cfg.out)
    _emit(result.summary())


def cmd_check(cfg, data_dir):
    data = _load(data_dir)
    if not 1 <= cfg.k <= data.n:
        raise InputError("check needs 1 <= k <= n")
    rng = seeding.stream(cfg.seed, seeding.CHECK)
    # the support is unknown to the checker; probe a random column set of size k
    V = np.sort(rng.choice(data.n, size=cfg.k, replace=False))
    iso = analysis.check_isometry(data, V, cfg.eps, cfg.trials, rng)
    s = min(2 * cfg.k, data.n)
    rip = analysis.rip_check(data, s, cfg.rip_vectors, rng)
    props = analysis.survival_properties(rng, cfg.property_cases)
    _emit({
        "isometry": iso.to_dict(),
        "rip": {"sparsity": s, "vectors": len(rip), "violations": sum(not r[3] for r in rip),
                "min_ratio": min(r[0] for r in rip) if rip else None,
                "max_ratio": max(r[0] for r in rip) if rip else None},
        "survival_properties": props.to_dict(),
    }, cfg.out)


def cmd_sample(cfg, t, count):
    if count < 0:
        raise InputError("count must be non-negative")
    view = TruncatedGaussianView(t, cfg.truncation_set())
    draws = sample(view, seeding.stream(cfg.seed, seeding.SAMPLE), size=count)
    text = "".join(repr(float(v)) + "\n" for v in draws)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                 "exit_code": code}) + "\n")
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = _resolve(args)
        if args.command == "gen":
            cmd_gen(cfg)
        elif args.command == "solve":
            cmd_solve(cfg, args.data)
        elif args.command == "eval":
            cmd_eval(cfg, args.data, args.report)
        elif args.command == "sweep":
            cmd_sweep(cfg)
        elif args.command == "check":
            cmd_check(cfg, args.data)
        elif args.command == "sample":
            cmd_sample(cfg, args.t, args.count)
    except (InputError, TruncationSetError, SurvivalTooLow, InvalidView, ToleranceUnreachable,
            EmptyFeasibleSet, TypeError, ValueError) as exc:
        return _fail(EXIT_INPUT, exc)
    except TruncLassoError as exc:
        return _fail(EXIT_SOLVER, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
