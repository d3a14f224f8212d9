import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

# compiled kernels make the first example slow; timing is not under test
settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {detail}")


@pytest.fixture(scope="session")
def benchmark_runs():
    """Standard benchmark, 10 seeds: n = 200, k = 5, m = 1200, set [0, inf),
    +-1 spikes. Returns per-seed dicts with truncated, naive and initial
    point errors."""
    from trunclasso.analysis import cell_seed, naive_lasso
    from trunclasso.datagen import generate_truncated, sparse_signal
    from trunclasso.psgd import SolverConfig, solve
    from trunclasso.tnormal import TruncationSet

    tset = TruncationSet.parse("[0,inf]")
    out = []
    for seed in range(10):
        x_star = sparse_signal(200, 5, seed)
        data = generate_truncated(x_star, tset, 1200, cell_seed(seed, 1200))
        rep = solve(data.without_truth(), SolverConfig(seed=seed))
        naive = naive_lasso(data, rep.lam)
        out.append({
            "report": rep,
            "psgd": float(np.linalg.norm(rep.x_bar - x_star)),
            "naive": float(np.linalg.norm(naive - x_star)),
            "init": float(np.linalg.norm(rep.x_init - x_star)),
        })
    return out
