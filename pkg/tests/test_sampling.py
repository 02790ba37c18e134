"""
sampling 测试：PROSAC 池增长、均匀性收敛与终止次数。
"""

import itertools

import numpy as np
import pytest
from scipy.stats import chisquare

from src.spransac.core.errors import PreconditionError
from src.spransac.services.sampling import (
    ProsacSampler,
    prosac_pool_size,
    prosac_sample,
    termination_iters,
)


class TestTerminationIters:
    def test_half_inliers_homography(self):
        assert termination_iters(0.5, 4, 0.99, 5000) == 72

    def test_all_inliers(self):
        assert termination_iters(1.0, 7, 0.99, 5000) == 1

    def test_no_inliers(self):
        assert termination_iters(0.0, 4, 0.99, 5000) == 5000

    def test_capped(self):
        assert termination_iters(0.1, 7, 0.99, 5000) == 5000
        assert termination_iters(0.1, 7, 0.99, 10 ** 9) in (46051700, 46051701, 46051702)

    def test_monotone(self):
        ws = np.linspace(0.05, 1.0, 20)
        iters = [termination_iters(w, 4, 0.99, 10 ** 7) for w in ws]
        assert all(a >= b for a, b in zip(iters, iters[1:]))
        assert termination_iters(0.3, 4, 0.999, 10 ** 7) >= termination_iters(0.3, 4, 0.95, 10 ** 7)


class TestProsacSampler:
    def test_first_sample_from_top_pool(self):
        for seed in range(20):
            sampler = ProsacSampler(100, 4, np.random.default_rng(seed))
            sample = sampler.next_sample()
            assert set(sample.indices) <= set(range(5))
            assert len(set(sample.indices)) == 4

    def test_stateless_first_sample(self):
        sample = prosac_sample(1, list(range(50)), 7, np.random.default_rng(3))
        assert set(sample.indices) <= set(range(8))

    def test_ranking_maps_positions(self):
        ranking = list(range(99, -1, -1))
        sample = ProsacSampler(100, 4, np.random.default_rng(0), ranking=ranking).next_sample()
        assert set(sample.indices) <= set(ranking[:5])

    def test_pool_grows_to_all_points(self):
        sampler = ProsacSampler(30, 4, np.random.default_rng(1), growth_max=500)
        sizes = []
        for _ in range(2000):
            sampler.next_sample()
            sizes.append(sampler.pool_size)
        assert all(a <= b for a, b in zip(sizes, sizes[1:]))
        assert sizes[-1] == 30

    def test_pool_size_function_agrees(self):
        sampler = ProsacSampler(40, 4, np.random.default_rng(2), growth_max=1000)
        for t in range(1, 300):
            sampler.next_sample()
            assert sampler.pool_size == prosac_pool_size(t, 40, 4, 1000)[0]

    def test_converges_to_uniform(self):
        rng = np.random.default_rng(123)
        sampler = ProsacSampler(10, 2, rng, growth_max=1)
        for _ in range(50):
            sampler.next_sample()
        assert sampler.pool_size == 10
        pairs = {pair: k for k, pair in enumerate(itertools.combinations(range(10), 2))}
        counts = np.zeros(len(pairs))
        for _ in range(100_000):
            counts[pairs[tuple(sorted(sampler.next_sample().indices))]] += 1
        assert chisquare(counts).pvalue > 0.001

    def test_deterministic(self):
        a = ProsacSampler(60, 7, np.random.default_rng(42))
        b = ProsacSampler(60, 7, np.random.default_rng(42))
        assert [a.next_sample().indices for _ in range(100)] == [b.next_sample().indices for _ in range(100)]

    def test_too_few_points(self):
        with pytest.raises(PreconditionError):
            ProsacSampler(3, 4, np.random.default_rng(0))

    def test_ranking_length_checked(self):
        with pytest.raises(PreconditionError):
            ProsacSampler(10, 4, np.random.default_rng(0), ranking=[0, 1, 2])
