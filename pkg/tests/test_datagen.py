import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from trunclasso import seeding
from trunclasso.datagen import (
    BATCH_ROWS,
    Dataset,
    estimate_alpha,
    generate_adversarial,
    generate_truncated,
    noise_of_norm,
    sparse_signal,
)
from trunclasso.errors import SurvivalTooLow
from trunclasso.tnormal import TruncationSet

LINE = TruncationSet.real_line()
HALF = TruncationSet.parse("[0,inf]")


def e1(n, scale=1.0):
    x = np.zeros(n)
    x[0] = scale
    return x


class TestSparseSignal:
    @given(st.integers(1, 60), st.data(), st.integers(0, 2**32 - 1))
    def test_support_and_values(self, n, data, seed):
        k = data.draw(st.integers(0, n))
        x = sparse_signal(n, k, seed, magnitude=2.5)
        assert np.count_nonzero(x) == k
        assert set(np.abs(x[x != 0])) <= {2.5}

    def test_deterministic(self):
        assert np.array_equal(sparse_signal(200, 5, 3), sparse_signal(200, 5, 3))
        assert not np.array_equal(sparse_signal(200, 5, 3), sparse_signal(200, 5, 4))

    def test_bad_k(self):
        with pytest.raises(ValueError):
            sparse_signal(3, 4, 0)


class TestGenerateTruncated:
    def test_untruncated_exact(self):
        x = sparse_signal(10, 3, 0)
        d = generate_truncated(x, LINE, 50, seed=11)
        assert d.rejected_count == 0
        # replay the generator stream: first batch of rows, then its noise
        rng = seeding.stream(11, seeding.GENERATE)
        A = rng.standard_normal((BATCH_ROWS, 10))
        eta = rng.standard_normal(BATCH_ROWS)
        assert np.array_equal(d.A, A[:50])
        assert np.array_equal(d.y, A[:50] @ x + eta[:50])

    def test_zero_signal_half_acceptance(self):
        d = generate_truncated(np.zeros(5), HALF, 10_000, seed=1)
        assert abs(d.m / (d.m + d.rejected_count) - 0.5) <= 0.01

    def test_support_constraint(self):
        d = generate_truncated(e1(8, 10.0), HALF, 500, seed=2)
        assert d.y.min() >= 0
        assert d.m == 500

    def test_every_response_in_set(self):
        s = TruncationSet.parse("[-2,-1],[1,2]")
        d = generate_truncated(sparse_signal(20, 2, 0), s, 300, seed=3)
        assert s.contains(d.y).all()

    def test_bit_reproducible(self):
        x = sparse_signal(30, 3, 1)
        a = generate_truncated(x, HALF, 400, seed=5)
        b = generate_truncated(x, HALF, 400, seed=5)
        assert np.array_equal(a.A, b.A) and np.array_equal(a.y, b.y)
        assert a.rejected_count == b.rejected_count and a.alpha_hat == b.alpha_hat

    def test_rejection_consistency(self):
        x = sparse_signal(20, 4, 2)
        s = TruncationSet.parse("[1,inf]")
        d = generate_truncated(x, s, 5000, seed=4)
        total = d.m + d.rejected_count
        rate = d.m / total
        se = math.sqrt(rate * (1 - rate) / total + d.alpha_stderr ** 2)
        assert abs(rate - d.alpha_hat) <= 4 * se

    def test_columns_gaussian(self):
        d = generate_truncated(sparse_signal(10, 3, 0), LINE, 2000, seed=6)
        for j in range(d.n):
            assert stats.kstest(d.A[:, j], "norm").pvalue > 0.001

    def test_survival_too_low(self):
        with pytest.raises(SurvivalTooLow):
            generate_truncated(e1(4), TruncationSet.parse("[50,51]"), 10, seed=0)

    def test_bad_inputs(self):
        with pytest.raises(ValueError):
            generate_truncated(np.array([np.nan, 1.0]), HALF, 10, seed=0)
        with pytest.raises(ValueError):
            generate_truncated(e1(3), HALF, 0, seed=0)


class TestEstimateAlpha:
    def test_whole_line(self):
        a = estimate_alpha(e1(5), LINE, trials=1000, seed=0)
        assert a.value == 1.0 and a.stderr == 0.0

    def test_zero_signal(self):
        trials = 10_000
        a = estimate_alpha(np.zeros(5), HALF, trials=trials, seed=0)
        assert abs(a.value - 0.5) <= 3 / math.sqrt(trials)

    def test_unit_signal_half_line(self):
        # a.x* is symmetric about 0, so E[Phi(a.x*)] = 1/2
        a = estimate_alpha(e1(5), HALF, trials=100_000, seed=1)
        assert abs(a.value - 0.5) <= 0.005

    def test_unit_signal_shifted_half_line(self):
        # E[Phi(g + 1)] = Phi(1 / sqrt 2) for g ~ N(0, 1)
        a = estimate_alpha(e1(5), TruncationSet.parse("[-1,inf]"), trials=100_000, seed=1)
        assert abs(a.value - stats.norm.cdf(1 / math.sqrt(2))) <= 0.005
        assert abs(a.value - 0.7602) <= 0.005

    def test_single_trial(self):
        a = estimate_alpha(e1(2), HALF, trials=1, seed=0)
        assert 0 < a.value < 1 and math.isnan(a.stderr)

    def test_trials_positive(self):
        with pytest.raises(ValueError):
            estimate_alpha(e1(2), HALF, trials=0)


class TestAdversarial:
    def test_zero_noise(self):
        x = sparse_signal(40, 3, 0)
        d = generate_adversarial(x, np.zeros(25), 25, seed=0)
        assert np.array_equal(d.y, d.A @ x)
        assert d.set.is_real_line and d.rejected_count == 0

    @given(st.floats(0.0, 100.0), st.integers(1, 50))
    def test_noise_norm(self, eps, m):
        x = sparse_signal(10, 2, 0)
        d = generate_adversarial(x, noise_of_norm(m, eps, 0), m, seed=1)
        assert np.linalg.norm(d.A @ x - d.y) == pytest.approx(eps, rel=1e-12, abs=1e-12)

    def test_noise_length(self):
        with pytest.raises(ValueError):
            generate_adversarial(np.ones(3), np.zeros(4), 5, seed=0)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        d = generate_truncated(sparse_signal(12, 2, 0), TruncationSet.parse("[-2,-1],[0.5,inf]"), 80, seed=9)
        d.save(tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == ["A.csv", "meta.json", "xstar.csv", "y.csv"]
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert {"m", "n", "seed", "set", "rejected_count"} <= set(meta)
        blind = Dataset.load(tmp_path)
        assert blind.x_star is None
        assert np.array_equal(blind.A, d.A) and np.array_equal(blind.y, d.y)
        assert blind.set == d.set and blind.rejected_count == d.rejected_count
        full = Dataset.load(tmp_path, with_truth=True)
        assert np.array_equal(full.x_star, d.x_star)

    def test_blind_load_ignores_truth(self, tmp_path):
        d = generate_truncated(sparse_signal(6, 1, 0), HALF, 20, seed=1)
        d.save(tmp_path)
        (tmp_path / "xstar.csv").unlink()
        assert Dataset.load(tmp_path).m == 20

    def test_without_truth(self):
        d = generate_truncated(sparse_signal(6, 1, 0), HALF, 20, seed=1)
        assert d.without_truth().x_star is None and d.k == 1

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(2), HALF)
        with pytest.raises(ValueError):
            Dataset(np.zeros((3, 2)), np.zeros(3), HALF, x_star=np.zeros(3))
