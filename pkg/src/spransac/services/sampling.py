"""
PROSAC 采样与终止条件。

点对按匹配分数降序排列后，假设池 U_n 从前 m 个点开始，按增长函数 T'_n 逐步扩大；
第 t 次迭代的样本由第 n 个点加上 U_{n−1} 中随机抽取的 m−1 个点组成。
池扩大到全部 N 个点后退化为均匀采样。
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np

from ..core.errors import PreconditionError
from .solvers import MinimalSample

logger = logging.getLogger(__name__)

DEFAULT_GROWTH_MAX = 200_000


def _initial_growth(n_points: int, m: int, growth_max: int) -> float:
    # T_m = T_N · Π_{i=0}^{m−1} (m − i) / (N − i)
    t = float(growth_max)
    for i in range(m):
        t *= (m - i) / (n_points - i)
    return t


class ProsacSampler:
    """有状态的 PROSAC 采样器，每次 next_sample 对应一次迭代。"""

    def __init__(
        self,
        n_points: int,
        m: int,
        rng: np.random.Generator,
        ranking: Optional[Sequence[int]] = None,
        growth_max: int = DEFAULT_GROWTH_MAX,
    ) -> None:
        if m < 1:
            raise PreconditionError(f"sample size must be positive, got {m}")
        if n_points < m:
            raise PreconditionError(f"need at least {m} correspondences, got {n_points}")
        self.n_points = int(n_points)
        self.m = int(m)
        self.rng = rng
        self.ranking = (
            np.arange(n_points, dtype=np.intp) if ranking is None else np.asarray(ranking, dtype=np.intp)
        )
        if self.ranking.shape[0] != n_points:
            raise PreconditionError("ranking length does not match the number of correspondences")
        self.growth_max = max(int(growth_max), 1)
        self.t = 0
        self.n = self.m
        self._t_n = _initial_growth(self.n_points, self.m, self.growth_max)
        self._t_n_prime = 1

    @property
    def pool_size(self) -> int:
        return self.n

    def _grow(self) -> None:
        while self.t >= self._t_n_prime and self.n < self.n_points:
            t_next = self._t_n * (self.n + 1) / (self.n + 1 - self.m)
            self._t_n_prime += int(math.ceil(t_next - self._t_n))
            self._t_n = t_next
            self.n += 1

    def next_sample(self) -> MinimalSample:
        self.t += 1
        self._grow()
        positions = draw_positions(self.n, self.n_points, self.m, self.rng, self._t_n_prime < self.t)
        return MinimalSample(tuple(int(i) for i in self.ranking[positions]))


def draw_positions(n: int, n_points: int, m: int, rng: np.random.Generator, uniform_in_pool: bool = False) -> np.ndarray:
    """在排序位置上抽样：池满或增长落后时在 U_n 中均匀抽取，否则取第 n 个点加 U_{n−1} 中的 m−1 个。"""
    if n >= n_points or uniform_in_pool:
        return np.sort(rng.choice(n, size=m, replace=False))
    rest = rng.choice(n - 1, size=m - 1, replace=False)
    return np.append(np.sort(rest), n - 1)


def prosac_pool_size(t: int, n_points: int, m: int, growth_max: int = DEFAULT_GROWTH_MAX) -> Tuple[int, int]:
    """第 t 次迭代时的池大小 n(t) 与对应的 T'_n。"""
    if n_points < m:
        raise PreconditionError(f"need at least {m} correspondences, got {n_points}")
    n = m
    t_n = _initial_growth(n_points, m, growth_max)
    t_n_prime = 1
    while t >= t_n_prime and n < n_points:
        t_next = t_n * (n + 1) / (n + 1 - m)
        t_n_prime += int(math.ceil(t_next - t_n))
        t_n = t_next
        n += 1
    return n, t_n_prime


def prosac_sample(
    t: int,
    ranking: Sequence[int],
    m: int,
    rng: np.random.Generator,
    growth_max: int = DEFAULT_GROWTH_MAX,
) -> MinimalSample:
    """无状态版本：按迭代序号 t（从 1 开始）计算池大小后抽样。"""
    ranking = np.asarray(ranking, dtype=np.intp)
    n, t_n_prime = prosac_pool_size(t, len(ranking), m, growth_max)
    positions = draw_positions(n, len(ranking), m, rng, t_n_prime < t)
    return MinimalSample(tuple(int(i) for i in ranking[positions]))


def termination_iters(w: float, m: int, confidence: float, max_iterations: int) -> int:
    """ceil(log(1−η) / log(1−w^m))，截断到 max_iterations；w = 1 时为 1，w = 0 时为上限。"""
    if w <= 0.0:
        return int(max_iterations)
    if w >= 1.0:
        return 1
    den = math.log1p(-(w ** m))
    if den == 0.0:
        return int(max_iterations)
    k = math.ceil(math.log1p(-confidence) / den)
    return int(max(1, min(k, max_iterations)))
