"""
模型质量计算。

策略：
- traditional：对全部 N 个点对计算残差
- partition：单元剔除得到候选集与内点数上界，先做早期拒绝，再只对候选集计算残差
- sprt：按随机顺序逐块评估并做序贯概率比检验，提前拒绝坏模型
- partition_sprt：先剔除与早期拒绝，再沿与 sprt 相同的随机顺序做 SPRT，
  被剔除的点对不计算残差、直接按外点更新似然比，因此决策与 sprt 一致而残差计算更少

MSAC 损失统一写成 Σ_{内点} r² + (N − 内点数)·ε²，内点残差按标识符升序求和，
因此 partition 与 traditional 在同一模型上得到逐位相同的 Score。
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..core.errors import ConfigurationError
from ..core.residuals import model_residuals
from ..core.types import Correspondence, CorrespondenceSet, Homography, Model, Score
from ..utils.timing import Stopwatch
from .bounding import DEFAULT_BOUND_NODES, CellSelection, cull_cells, inverse_refine
from .partition import JointGrid

logger = logging.getLogger(__name__)

SPRT_BLOCK = 64


# ---------------------------------------------------------------------------
# 枚举与参数
# ---------------------------------------------------------------------------


class Strategy(str, Enum):
    TRADITIONAL = "trad"
    PARTITION = "grid"
    SPRT = "sprt"
    PARTITION_SPRT = "grid-sprt"

    @classmethod
    def parse(cls, value: "str | Strategy") -> "Strategy":
        if isinstance(value, Strategy):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {
            "trad": cls.TRADITIONAL,
            "traditional": cls.TRADITIONAL,
            "grid": cls.PARTITION,
            "partition": cls.PARTITION,
            "sprt": cls.SPRT,
            "grid-sprt": cls.PARTITION_SPRT,
            "partition-sprt": cls.PARTITION_SPRT,
        }
        if key not in aliases:
            raise ConfigurationError(f"unknown verification strategy: {value}")
        return aliases[key]

    @property
    def uses_grid(self) -> bool:
        return self in (Strategy.PARTITION, Strategy.PARTITION_SPRT)

    @property
    def uses_sprt(self) -> bool:
        return self in (Strategy.SPRT, Strategy.PARTITION_SPRT)


class Scoring(str, Enum):
    RANSAC = "ransac"
    MSAC = "msac"

    @classmethod
    def parse(cls, value: "str | Scoring") -> "Scoring":
        try:
            return cls(str(value.value if isinstance(value, Scoring) else value).lower())
        except ValueError as exc:
            raise ConfigurationError(f"unknown scoring mode: {value}") from exc


class SprtDecision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class RejectReason(str, Enum):
    EARLY = "early"
    SPRT = "sprt"


@dataclass(frozen=True)
class SprtParams:
    """
    SPRT 参数。

    epsilon_good：好模型下点为内点的概率；delta_bad：坏模型下的概率；
    threshold_A 缺省由 Wald 近似 (1 − β) / α 给出。
    """

    epsilon_good: float = 0.1
    delta_bad: float = 0.01
    alpha: float = 0.05
    beta: float = 0.05
    threshold_A: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 < self.delta_bad < self.epsilon_good < 1.0:
            raise ConfigurationError(
                f"SPRT requires 0 < delta_bad < epsilon_good < 1 "
                f"(got delta_bad={self.delta_bad}, epsilon_good={self.epsilon_good})"
            )
        if not (0.0 < self.alpha < 1.0 and 0.0 <= self.beta < 1.0):
            raise ConfigurationError(f"SPRT error probabilities out of range: alpha={self.alpha} beta={self.beta}")
        if self.threshold_A is None:
            object.__setattr__(self, "threshold_A", (1.0 - self.beta) / self.alpha)
        if not self.threshold_A > 1.0:
            raise ConfigurationError(f"SPRT threshold_A must be > 1, got {self.threshold_A}")

    @property
    def inlier_step(self) -> float:
        return self.delta_bad / self.epsilon_good

    @property
    def outlier_step(self) -> float:
        return (1.0 - self.delta_bad) / (1.0 - self.epsilon_good)

    def adapted(self, inlier_ratio: float) -> "SprtParams":
        """以观测到的最佳内点率更新 epsilon_good（夹在 (delta_bad, 0.999) 内），阈值重新计算。"""
        eps = min(max(float(inlier_ratio), self.delta_bad * 1.0001 + 1e-12), 0.999)
        if eps <= self.delta_bad:
            return self
        return SprtParams(epsilon_good=eps, delta_bad=self.delta_bad, alpha=self.alpha, beta=self.beta)


@dataclass(frozen=True)
class VerifyConfig:
    threshold: float
    scoring: Scoring = Scoring.RANSAC
    eps_r: float = 1.0
    bound_nodes: int = DEFAULT_BOUND_NODES
    inverse_refinement: bool = False
    sampson: bool = False

    def __post_init__(self) -> None:
        if not self.threshold > 0.0:
            raise ConfigurationError(f"inlier threshold must be positive, got {self.threshold}")
        if self.eps_r < 1.0:
            raise ConfigurationError(f"eps_r must be >= 1, got {self.eps_r}")


@dataclass
class VerifyStats:
    """验证计数与耗时（秒），由调用方累加。"""

    evaluated_points: int = 0
    culled_points: int = 0
    early_rejections: int = 0
    sprt_rejections: int = 0
    models_verified: int = 0
    bound_fallbacks: int = 0
    lo_evaluations: int = 0
    cell_rejection_time: float = 0.0
    verification_time: float = 0.0

    def merge(self, other: "VerifyStats") -> "VerifyStats":
        for name, value in asdict(other).items():
            setattr(self, name, getattr(self, name) + value)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {k: float(v) if k.endswith("_time") else int(v) for k, v in asdict(self).items()}


@dataclass
class PrefilterResult:
    """
    剔除结果：所选单元对与内点数上界。

    候选点对在网格排序数组中的位置与标识符在首次访问时才展开，早期拒绝只需要上界。
    """

    selection: CellSelection
    grid: JointGrid = field(repr=False)
    refined: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def upper_bound(self) -> int:
        if self.refined is not None:
            return int(self.refined.size)
        return self.selection.candidate_count

    @cached_property
    def positions(self) -> np.ndarray:
        return self.refined if self.refined is not None else self.selection.positions()

    @cached_property
    def ids(self) -> np.ndarray:
        return self.grid.order[self.positions]

    @property
    def candidates(self) -> List[Correspondence]:
        return [self.grid.data[int(i)] for i in self.ids]


@dataclass
class VerifyOutcome:
    score: Optional[Score]
    inlier_ids: np.ndarray
    stats: VerifyStats
    reason: Optional[RejectReason] = None
    upper_bound: Optional[int] = None

    @property
    def rejected(self) -> bool:
        return self.score is None


class EvaluationOrder:
    """
    数据集级的随机评估顺序（SPRT 使用），每个数据集只生成一次。

    perm[k] 为第 k 个被评估的标识符，rank[id] 为其在 perm 中的位置。
    """

    __slots__ = ("perm", "rank")

    def __init__(self, n: int, seed: int) -> None:
        rng = np.random.default_rng(seed)
        self.perm = rng.permutation(n).astype(np.intp)
        self.rank = np.empty(n, dtype=np.intp)
        self.rank[self.perm] = np.arange(n, dtype=np.intp)


# ---------------------------------------------------------------------------
# 基本操作
# ---------------------------------------------------------------------------


def early_reject(upper_bound: int, best_inliers: int, eps_r: float) -> bool:
    """ε_r · |I*| > 上界时拒绝；ε_r = 1 时不会改变结果。"""
    return eps_r * best_inliers > upper_bound


def msac_loss_floor(n_total: int, upper_bound: int, eps: float) -> float:
    """内点数不超过上界的模型，其 MSAC 损失不低于 (N − 上界)·ε²。"""
    return (n_total - upper_bound) * eps * eps


def prefilter(
    model: Model,
    grid: JointGrid,
    eps: float,
    bound_nodes: int = DEFAULT_BOUND_NODES,
    inverse_refinement: bool = False,
) -> PrefilterResult:
    """保守剔除：返回所选单元对中的全部点对及内点数上界。"""
    selection = cull_cells(model, grid, eps, bound_nodes)
    refined = None
    if inverse_refinement and isinstance(model, Homography):
        refined = inverse_refine(model, grid, selection.positions(), eps)
    return PrefilterResult(selection=selection, grid=grid, refined=refined)


def _score_from_inliers(
    residuals_inliers_by_id: np.ndarray, n_total: int, n_evaluated: int, eps: float, scoring: Scoring
) -> Score:
    k = int(residuals_inliers_by_id.size)
    if scoring is Scoring.MSAC:
        loss = float(np.sum(residuals_inliers_by_id ** 2)) + (n_total - k) * eps * eps
    else:
        loss = float(-k)
    return Score(inlier_count=k, loss=loss, evaluated_points=n_evaluated)


def _score_subset(
    ids: np.ndarray,
    residuals: np.ndarray,
    n_total: int,
    eps: float,
    scoring: Scoring,
    n_evaluated: Optional[int] = None,
) -> Tuple[Score, np.ndarray]:
    inl = residuals < eps
    inl_ids = ids[inl]
    r_inl = residuals[inl]
    order = np.argsort(inl_ids, kind="stable")
    evaluated = int(ids.size) if n_evaluated is None else n_evaluated
    return _score_from_inliers(r_inl[order], n_total, evaluated, eps, scoring), inl_ids[order]


def count_inliers(model: Model, corrs, eps: float, scoring: "Scoring | str" = Scoring.RANSAC, sampson: bool = False) -> Score:
    """
    对给定点对计数。

    ransac：loss = −内点数；msac：loss = Σ min(r², ε²)。
    """
    scoring = Scoring.parse(scoring)
    if not eps > 0.0:
        raise ConfigurationError(f"inlier threshold must be positive, got {eps}")
    if isinstance(corrs, (list, tuple)):
        corrs = CorrespondenceSet.from_correspondences(corrs) if corrs else CorrespondenceSet(np.empty((0, 2)), np.empty((0, 2)))
    n = len(corrs)
    if n == 0:
        return Score(0, 0.0, 0)
    r = model_residuals(model, corrs.p, corrs.q, sampson=sampson)
    score, _ = _score_subset(np.arange(n), r, n, eps, scoring)
    return score


def inlier_ids(model: Model, data: CorrespondenceSet, eps: float) -> np.ndarray:
    """全量残差下的内点标识符（升序）。"""
    if len(data) == 0:
        return np.empty(0, dtype=np.intp)
    r = model_residuals(model, data.p, data.q)
    return np.flatnonzero(r < eps)


def _sprt_scan(
    model: Model,
    data: CorrespondenceSet,
    perm: np.ndarray,
    params: SprtParams,
    eps: float,
    candidate: Optional[np.ndarray] = None,
) -> Tuple[SprtDecision, int, np.ndarray, np.ndarray]:
    """
    按 perm 顺序分块评估；返回 (决策, 计算残差的点数, 已扫描部分的残差, 已扫描部分的内点掩码)。

    candidate（按标识符索引的布尔数组）给出时，只对候选计算残差；
    被剔除的点对已知是外点，残差记为 inf，照常按外点更新似然比。
    """
    n = len(perm)
    log_a = math.log(params.threshold_A) if math.isfinite(params.threshold_A) else math.inf
    log_in = math.log(params.inlier_step)
    log_out = math.log(params.outlier_step)
    log_lambda = 0.0
    evaluated = 0
    residuals: List[np.ndarray] = []
    for start in range(0, n, SPRT_BLOCK):
        block = perm[start : start + SPRT_BLOCK]
        if candidate is None:
            hits = None
            r = model_residuals(model, data.p[block], data.q[block])
        else:
            hits = candidate[block]
            r = np.full(block.size, np.inf)
            if hits.any():
                chosen = block[hits]
                r[hits] = model_residuals(model, data.p[chosen], data.q[chosen])
        steps = np.where(r < eps, log_in, log_out)
        cum = log_lambda + np.cumsum(steps)
        over = np.flatnonzero(cum > log_a)
        cut = int(over[0]) + 1 if over.size else block.size
        evaluated += cut if hits is None else int(np.count_nonzero(hits[:cut]))
        residuals.append(r[:cut])
        if over.size:
            r_all = np.concatenate(residuals)
            return SprtDecision.REJECT, evaluated, r_all, r_all < eps
        log_lambda = float(cum[-1])
    r_all = np.concatenate(residuals) if residuals else np.empty(0)
    return SprtDecision.ACCEPT, evaluated, r_all, r_all < eps


def sprt_verify(model: Model, corrs, params: SprtParams, eps: float) -> Tuple[SprtDecision, Score]:
    """
    SPRT：λ 从 1 开始，内点乘 δ/ε，外点乘 (1−δ)/(1−ε)，λ > A 时拒绝。

    corrs 应已按随机顺序排列。接受时 Score 为完整计数，拒绝时为部分计数。
    """
    if isinstance(corrs, (list, tuple)):
        corrs = CorrespondenceSet.from_correspondences(corrs) if corrs else CorrespondenceSet(np.empty((0, 2)), np.empty((0, 2)))
    perm = np.arange(len(corrs), dtype=np.intp)
    decision, evaluated, _, mask = _sprt_scan(model, corrs, perm, params, eps)
    k = int(np.count_nonzero(mask))
    return decision, Score(inlier_count=k, loss=float(-k), evaluated_points=evaluated)


# ---------------------------------------------------------------------------
# 策略分派
# ---------------------------------------------------------------------------


def verify(
    model: Model,
    data: CorrespondenceSet,
    grid: Optional[JointGrid],
    strategy: "Strategy | str",
    best_so_far: Optional[Score],
    config: VerifyConfig,
    sprt: Optional[SprtParams] = None,
    order: Optional[EvaluationOrder] = None,
) -> VerifyOutcome:
    """按策略验证单个模型，返回 Score（被拒绝时为 None）与本次的统计增量。"""
    strategy = Strategy.parse(strategy)
    eps = config.threshold
    n = len(data)
    stats = VerifyStats(models_verified=1)
    best_inliers = best_so_far.inlier_count if best_so_far is not None else 0

    if strategy.uses_grid and grid is None:
        raise ConfigurationError(f"strategy {strategy.value} requires a joint grid")
    if strategy.uses_sprt:
        if sprt is None:
            sprt = SprtParams()
        if order is None:
            order = EvaluationOrder(n, 0)

    if strategy is Strategy.TRADITIONAL:
        watch = Stopwatch()
        with watch.measure():
            r = model_residuals(model, data.p, data.q, sampson=config.sampson)
            score, ids = _score_subset(np.arange(n, dtype=np.intp), r, n, eps, config.scoring)
        stats.evaluated_points = n
        stats.verification_time = watch.elapsed
        return VerifyOutcome(score=score, inlier_ids=ids, stats=stats)

    if strategy is Strategy.SPRT:
        watch = Stopwatch()
        with watch.measure():
            decision, evaluated, r, _ = _sprt_scan(model, data, order.perm, sprt, eps)
        stats.evaluated_points = evaluated
        stats.verification_time = watch.elapsed
        if decision is SprtDecision.REJECT:
            stats.sprt_rejections = 1
            return VerifyOutcome(score=None, inlier_ids=np.empty(0, dtype=np.intp), stats=stats, reason=RejectReason.SPRT)
        score, inl = _score_subset(order.perm, r, n, eps, config.scoring)
        return VerifyOutcome(score=score, inlier_ids=inl, stats=stats)

    # 划分策略
    cell_watch = Stopwatch()
    with cell_watch.measure():
        pre = prefilter(model, grid, eps, config.bound_nodes, config.inverse_refinement)
    stats.cell_rejection_time = cell_watch.elapsed
    stats.bound_fallbacks = pre.selection.fallbacks
    stats.culled_points = n - pre.upper_bound
    if best_so_far is not None and _early_reject_applies(pre.upper_bound, n, best_so_far, best_inliers, config):
        stats.early_rejections = 1
        return VerifyOutcome(
            score=None,
            inlier_ids=np.empty(0, dtype=np.intp),
            stats=stats,
            reason=RejectReason.EARLY,
            upper_bound=pre.upper_bound,
        )

    watch = Stopwatch()
    if strategy is Strategy.PARTITION:
        with watch.measure():
            pos = pre.positions
            r = model_residuals(model, grid.p_sorted[pos], grid.q_sorted[pos])
            score, inl = _score_subset(pre.ids, r, n, eps, config.scoring)
        stats.evaluated_points = int(pos.size)
        stats.verification_time = watch.elapsed
        return VerifyOutcome(score=score, inlier_ids=inl, stats=stats, upper_bound=pre.upper_bound)

    # partition + SPRT：沿数据集级随机顺序扫描，被剔除的点对不计算残差、按外点计入
    with watch.measure():
        candidate = np.zeros(n, dtype=bool)
        candidate[pre.ids] = True
        decision, evaluated, r, _ = _sprt_scan(model, data, order.perm, sprt, eps, candidate)
    stats.evaluated_points = evaluated
    stats.verification_time = watch.elapsed
    if decision is SprtDecision.REJECT:
        stats.sprt_rejections = 1
        return VerifyOutcome(
            score=None,
            inlier_ids=np.empty(0, dtype=np.intp),
            stats=stats,
            reason=RejectReason.SPRT,
            upper_bound=pre.upper_bound,
        )
    score, inl = _score_subset(order.perm, r, n, eps, config.scoring, n_evaluated=evaluated)
    return VerifyOutcome(score=score, inlier_ids=inl, stats=stats, upper_bound=pre.upper_bound)


def _early_reject_applies(
    upper_bound: int, n_total: int, best_so_far: Score, best_inliers: int, config: VerifyConfig
) -> bool:
    """MSAC 下除计数规则外，还要求损失下界 (N − 上界)·ε² 不低于当前最优损失。"""
    if not early_reject(upper_bound, best_inliers, config.eps_r):
        return False
    if config.scoring is Scoring.MSAC:
        return msac_loss_floor(n_total, upper_bound, config.threshold) >= best_so_far.loss
    return True
