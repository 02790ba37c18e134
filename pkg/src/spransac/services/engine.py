"""
鲁棒估计主循环（LO-RANSAC + PROSAC）。

流程：采样 -> 最小求解（多解全部验证）-> 按策略验证 -> 新最优模型时局部优化并更新终止次数。
网格每个数据集只构建一次；结果的内点集合由最后一次全量传统验证给出。
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..core.errors import ConfigurationError, NumericalError, PreconditionError
from ..core.types import Aabb2, CorrespondenceSet, Model, ModelFamily, Score, undistort_points
from ..utils.timing import Stopwatch
from .bounding import DEFAULT_BOUND_NODES
from .partition import JointGrid, build_grid, default_grid_spec
from .sampling import DEFAULT_GROWTH_MAX, ProsacSampler, termination_iters
from .solvers import ModelContext, estimate_minimal, estimate_nonminimal
from .verify import (
    EvaluationOrder,
    Scoring,
    SprtParams,
    Strategy,
    VerifyConfig,
    VerifyOutcome,
    VerifyStats,
    count_inliers,
    inlier_ids,
    verify,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# 配置与结果
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RansacConfig:
    model_family: ModelFamily = ModelFamily.HOMOGRAPHY
    threshold: float = 2.0
    confidence: float = 0.99
    max_iterations: int = 5000
    fixed_iterations: Optional[int] = None
    strategy: Strategy = Strategy.TRADITIONAL
    cells_per_axis_1: int = 4
    cells_per_axis_2: Optional[int] = None
    extent_1: Optional[Aabb2] = None
    extent_2: Optional[Aabb2] = None
    eps_r: Optional[float] = None
    sprt: SprtParams = field(default_factory=SprtParams)
    seed: int = 0
    scoring: Scoring = Scoring.RANSAC
    lo_enabled: bool = True
    lo_rounds: int = 4
    bound_nodes: int = DEFAULT_BOUND_NODES
    parallel_solutions: bool = False
    inverse_refinement: bool = False
    sampson: bool = False
    prosac_growth_max: int = DEFAULT_GROWTH_MAX
    K1: Optional[np.ndarray] = None
    K2: Optional[np.ndarray] = None
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "model_family", ModelFamily(self.model_family))
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        object.__setattr__(self, "scoring", Scoring.parse(self.scoring))
        if not self.threshold > 0.0:
            raise ConfigurationError(f"threshold must be positive, got {self.threshold}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigurationError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.fixed_iterations is not None and self.fixed_iterations < 1:
            raise ConfigurationError(f"fixed_iterations must be >= 1, got {self.fixed_iterations}")
        if self.cells_per_axis_1 < 1 or (self.cells_per_axis_2 is not None and self.cells_per_axis_2 < 1):
            raise ConfigurationError("cells per axis must be positive")
        if self.eps_r is not None and self.eps_r < 1.0:
            raise ConfigurationError(f"eps_r must be >= 1, got {self.eps_r}")
        if self.lo_rounds < 0:
            raise ConfigurationError(f"lo_rounds must be >= 0, got {self.lo_rounds}")
        if not 2 <= self.bound_nodes <= 11:
            raise ConfigurationError(f"bound_nodes must be in [2, 11], got {self.bound_nodes}")
        if self.model_family is ModelFamily.ESSENTIAL and (self.K1 is None or self.K2 is None):
            raise ConfigurationError("essential estimation requires intrinsics K1 and K2")

    @property
    def effective_eps_r(self) -> float:
        return float(self.eps_r) if self.eps_r else self.model_family.default_eps_r

    @property
    def sample_size(self) -> int:
        return self.model_family.sample_size

    def model_context(self) -> ModelContext:
        return ModelContext(
            family=self.model_family,
            K1=None if self.K1 is None else np.asarray(self.K1, dtype=float),
            K2=None if self.K2 is None else np.asarray(self.K2, dtype=float),
            lambda1=self.lambda1,
            lambda2=self.lambda2,
        )

    def verify_config(self) -> VerifyConfig:
        return VerifyConfig(
            threshold=self.threshold,
            scoring=self.scoring,
            eps_r=self.effective_eps_r,
            bound_nodes=self.bound_nodes,
            inverse_refinement=self.inverse_refinement,
            sampson=self.sampson,
        )


@dataclass
class RansacResult:
    best_model: Optional[Model]
    best_score: Optional[Score]
    inlier_ids: np.ndarray
    iterations_run: int
    stats: VerifyStats
    wall_time: float
    grid_time: float = 0.0

    @property
    def found(self) -> bool:
        return self.best_model is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "found": self.found,
            "inliers": int(self.inlier_ids.size),
            "iterations_run": self.iterations_run,
            "score": None if self.best_score is None else self.best_score.to_dict(),
            "stats": self.stats.to_dict(),
            "wall_time": self.wall_time,
            "grid_time": self.grid_time,
        }


@dataclass
class LoResult:
    model: Model
    score: Score
    inlier_ids: np.ndarray
    evaluations: int = 0


# ---------------------------------------------------------------------------
# 局部优化
# ---------------------------------------------------------------------------


def local_optimize(
    model: Model,
    data: CorrespondenceSet,
    eps: float,
    ctx: ModelContext,
    score: Score,
    ids: np.ndarray,
    rounds: int = 4,
    scoring: Scoring = Scoring.RANSAC,
) -> LoResult:
    """
    迭代最小二乘：用当前内点做非最小拟合，在全部数据上重新评分，严格更优才接受。

    内点不足 m+1 或拟合失败时返回原模型。
    """
    best = LoResult(model=model, score=score, inlier_ids=ids)
    m = ctx.sample_size
    for _ in range(rounds):
        if best.inlier_ids.size < m + 1:
            break
        try:
            refit = estimate_nonminimal(ctx, data.p[best.inlier_ids], data.q[best.inlier_ids])
        except (NumericalError, PreconditionError) as exc:
            logger.debug("LO refit failed: %s", exc)
            break
        new_score = count_inliers(refit, data, eps, scoring)
        best.evaluations += len(data)
        if not new_score.is_better_than(best.score):
            break
        best = LoResult(
            model=refit,
            score=new_score,
            inlier_ids=inlier_ids(refit, data, eps),
            evaluations=best.evaluations,
        )
    return best


# ---------------------------------------------------------------------------
# 引擎
# ---------------------------------------------------------------------------


class RansacEngine:
    """按 RansacConfig 运行估计；实例可重复使用，每次 run 独立。"""

    def __init__(self, config: RansacConfig) -> None:
        self.config = config
        self._lock = threading.Lock()

    def prepare_grid(self, data: CorrespondenceSet) -> JointGrid:
        """构建联合网格；径向单应的图像 2 网格使用 λ2 去畸变后的坐标。"""
        cfg = self.config
        q_keys = None
        if cfg.model_family is ModelFamily.RADIAL_HOMOGRAPHY:
            q_keys = undistort_points(data.q, cfg.lambda2)
        spec = default_grid_spec(
            data,
            cfg.cells_per_axis_1,
            cfg.cells_per_axis_2,
            extent_1=cfg.extent_1,
            extent_2=cfg.extent_2,
            q_keys=q_keys,
        )
        return build_grid(data, spec, q_keys=q_keys)

    def run(self, data: CorrespondenceSet, grid: Optional[JointGrid] = None) -> RansacResult:
        cfg = self.config
        n = len(data)
        m = cfg.sample_size
        if n < m:
            raise PreconditionError(f"need at least {m} correspondences for {cfg.model_family.value}, got {n}")

        total = Stopwatch()
        grid_watch = Stopwatch()
        with total.measure():
            strategy = cfg.strategy
            if strategy.uses_grid and grid is None:
                with grid_watch.measure():
                    grid = self.prepare_grid(data)

            seeds = np.random.SeedSequence(cfg.seed).spawn(2)
            rng = np.random.default_rng(seeds[0])
            order = EvaluationOrder(n, seeds[1]) if strategy.uses_sprt else None
            sampler = ProsacSampler(n, m, rng, ranking=data.ranking(), growth_max=cfg.prosac_growth_max)
            ctx = cfg.model_context()
            vcfg = cfg.verify_config()
            sprt = cfg.sprt

            stats = VerifyStats()
            best_model: Optional[Model] = None
            best_score: Optional[Score] = None
            best_ids = np.empty(0, dtype=np.intp)
            limit = cfg.fixed_iterations or cfg.max_iterations
            it = 0
            executor = ThreadPoolExecutor(max_workers=3) if cfg.parallel_solutions else None
            try:
                while it < limit:
                    it += 1
                    sample = sampler.next_sample()
                    idx = np.asarray(sample.indices, dtype=np.intp)
                    models = estimate_minimal(ctx, data.p[idx], data.q[idx])
                    if not models:
                        continue
                    outcomes = self._verify_all(models, data, grid, best_score, vcfg, sprt, order, executor)
                    improved = False
                    for model, outcome in zip(models, outcomes):
                        stats.merge(outcome.stats)
                        if outcome.rejected or not outcome.score.is_better_than(best_score):
                            continue
                        best_model, best_score, best_ids = model, outcome.score, outcome.inlier_ids
                        improved = True
                    if not improved:
                        continue

                    logger.debug("Iteration %d: new best with %d inliers", it, best_score.inlier_count)
                    if cfg.lo_enabled and cfg.lo_rounds > 0:
                        lo = local_optimize(
                            best_model, data, cfg.threshold, ctx, best_score, best_ids, cfg.lo_rounds, cfg.scoring
                        )
                        stats.lo_evaluations += lo.evaluations
                        best_model, best_score, best_ids = lo.model, lo.score, lo.inlier_ids
                    ratio = best_score.inlier_count / n
                    sprt = cfg.sprt.adapted(ratio) if ratio > cfg.sprt.delta_bad else cfg.sprt
                    if cfg.fixed_iterations is None:
                        limit = min(cfg.max_iterations, max(it, termination_iters(ratio, m, cfg.confidence, cfg.max_iterations)))
            finally:
                if executor is not None:
                    executor.shutdown(wait=True)

            if best_model is not None:
                final_ids = inlier_ids(best_model, data, cfg.threshold)
                final_score = count_inliers(best_model, data, cfg.threshold, cfg.scoring)
            else:
                logger.warning("No model found after %d iterations", it)
                final_ids = np.empty(0, dtype=np.intp)
                final_score = None

        logger.info(
            "Estimation finished: family=%s strategy=%s iterations=%d inliers=%d evaluated=%d",
            cfg.model_family.value,
            cfg.strategy.value,
            it,
            int(final_ids.size),
            stats.evaluated_points,
        )
        return RansacResult(
            best_model=best_model,
            best_score=final_score,
            inlier_ids=final_ids,
            iterations_run=it,
            stats=stats,
            wall_time=total.elapsed,
            grid_time=grid_watch.elapsed,
        )

    def _verify_all(
        self,
        models: List[Model],
        data: CorrespondenceSet,
        grid: Optional[JointGrid],
        best_score: Optional[Score],
        vcfg: VerifyConfig,
        sprt: SprtParams,
        order: Optional[EvaluationOrder],
        executor: Optional[ThreadPoolExecutor],
    ) -> List[VerifyOutcome]:
        strategy = self.config.strategy
        if executor is None or len(models) == 1:
            outcomes: List[VerifyOutcome] = []
            for model in models:
                outcome = verify(model, data, grid, strategy, best_score, vcfg, sprt, order)
                outcomes.append(outcome)
                # 同一样本的后续解与当前最优比较，顺序模式下逐个更新
                if not outcome.rejected and outcome.score.is_better_than(best_score):
                    best_score = outcome.score
            return outcomes

        shared = {"best": best_score}

        def task(model: Model) -> VerifyOutcome:
            with self._lock:
                snapshot = shared["best"]
            outcome = verify(model, data, grid, strategy, snapshot, vcfg, sprt, order)
            with self._lock:
                if not outcome.rejected and outcome.score.is_better_than(shared["best"]):
                    shared["best"] = outcome.score
            return outcome

        return list(executor.map(task, models))


def ransac(data: CorrespondenceSet, config: RansacConfig) -> RansacResult:
    """便捷入口：RansacEngine(config).run(data)。"""
    return RansacEngine(config).run(data)
