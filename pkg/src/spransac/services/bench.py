"""
基准扫描。

对 (模型族, 固定迭代次数, 种子) × (策略, 每轴单元数) 的笛卡尔积逐点运行估计，每点一行 BenchRow。
传统策略作为基线总是运行一次（每个族/迭代/种子），rel_total 相对该基线计算。

- 同一 (族, 种子) 的所有点共享同一合成数据集
- 网格在计时之外预先构建，t_r / t_v 只包含剔除与验证本身
- 每个计时配置先做一次单迭代预热
- 扫描点可经 joblib 并行执行，行顺序始终与扫描顺序一致
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..core.errors import ConfigurationError, DataError
from ..core.types import EssentialSetup, ModelFamily, RadialHomography
from .engine import RansacConfig, RansacEngine
from .synth import SyntheticDataset, synth_generate
from .verify import Strategy

logger = logging.getLogger(__name__)

# CSV 列顺序固定（docs/bench-csv-schema.md）
BENCH_COLUMNS: Tuple[str, ...] = (
    "model_family",
    "strategy",
    "cells_per_axis",
    "fixed_iterations",
    "N",
    "inlier_ratio",
    "evaluated_points",
    "models_verified",
    "early_rejections",
    "t_r_ms",
    "t_v_ms",
    "total_ms",
    "inliers_found",
    "seed",
    "rel_total",
    "error",
)
TIMING_COLUMNS = ("t_r_ms", "t_v_ms", "total_ms", "rel_total")


@dataclass
class BenchSweep:
    families: Sequence[str] = ("h",)
    strategies: Sequence[str] = ("grid",)
    cells_per_axis: Sequence[int] = (4,)
    fixed_iterations: Sequence[int] = (1000,)
    seeds: Sequence[int] = (0,)
    n_points: int = 2000
    inlier_ratio: float = 0.1
    noise_sigma: float = 0.5
    threshold: float = 2.0
    eps_r: float = 1.0
    lo_enabled: bool = True
    warmup: bool = True
    jobs: int = 1

    def __post_init__(self) -> None:
        try:
            self.families = tuple(ModelFamily(f).value for f in self.families)
            self.strategies = tuple(Strategy.parse(s).value for s in self.strategies)
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
        self.cells_per_axis = tuple(int(c) for c in self.cells_per_axis)
        self.fixed_iterations = tuple(int(i) for i in self.fixed_iterations)
        self.seeds = tuple(int(s) for s in self.seeds)
        if not (self.families and self.strategies and self.fixed_iterations and self.seeds):
            raise ConfigurationError("benchmark sweep needs at least one family, strategy, iteration count and seed")
        if any(c < 1 for c in self.cells_per_axis):
            raise ConfigurationError("cells per axis must be positive")
        if any(i < 0 for i in self.fixed_iterations):
            raise ConfigurationError("fixed iterations must be >= 0 (0 = confidence-based termination)")
        if any(Strategy(s).uses_grid for s in self.strategies) and not self.cells_per_axis:
            raise ConfigurationError("grid strategies need at least one cells-per-axis value")


@dataclass
class BenchRow:
    model_family: str
    strategy: str
    cells_per_axis: int
    fixed_iterations: int
    N: int
    inlier_ratio: float
    evaluated_points: int = 0
    models_verified: int = 0
    early_rejections: int = 0
    t_r_ms: float = 0.0
    t_v_ms: float = 0.0
    total_ms: float = 0.0
    inliers_found: int = 0
    seed: int = 0
    rel_total: float = float("nan")
    error: str = ""


@dataclass(frozen=True)
class SweepPoint:
    index: int
    family: str
    strategy: str
    cells: int
    iterations: int
    seed: int


def sweep_points(sweep: BenchSweep) -> List[SweepPoint]:
    """展开扫描：每个 (族, 迭代, 种子) 先放传统基线，再放各策略/单元数组合。"""
    points: List[SweepPoint] = []
    for family, iters, seed in itertools.product(sweep.families, sweep.fixed_iterations, sweep.seeds):
        combos: List[Tuple[str, int]] = [(Strategy.TRADITIONAL.value, 0)]
        for strategy in sweep.strategies:
            if Strategy(strategy).uses_grid:
                combos.extend((strategy, c) for c in sweep.cells_per_axis)
            elif strategy != Strategy.TRADITIONAL.value:
                combos.append((strategy, 0))
        for strategy, cells in combos:
            points.append(SweepPoint(len(points), family, strategy, cells, iters, seed))
    return points


@lru_cache(maxsize=16)
def _dataset(family: str, n: int, ratio: float, sigma: float, seed: int) -> SyntheticDataset:
    return synth_generate(family, n, ratio, sigma, seed=seed)


def _ransac_config(point: SweepPoint, sweep: BenchSweep, ds: SyntheticDataset, iterations: Optional[int]) -> RansacConfig:
    extra: Dict[str, Any] = {}
    if isinstance(ds.model, EssentialSetup):
        extra.update(K1=ds.model.K1, K2=ds.model.K2)
    if isinstance(ds.model, RadialHomography):
        extra.update(lambda1=ds.model.lambda1, lambda2=ds.model.lambda2)
    return RansacConfig(
        model_family=ModelFamily(point.family),
        threshold=sweep.threshold,
        fixed_iterations=iterations,
        strategy=Strategy(point.strategy),
        cells_per_axis_1=max(point.cells, 1),
        extent_1=ds.extent_1,
        # 径向单应的图像 2 网格建在去畸变坐标上，范围由数据推得
        extent_2=None if isinstance(ds.model, RadialHomography) else ds.extent_2,
        eps_r=sweep.eps_r,
        seed=point.seed,
        lo_enabled=sweep.lo_enabled,
        **extra,
    )


def run_point(point: SweepPoint, sweep: BenchSweep) -> BenchRow:
    """运行单个扫描点；任何异常都记录到 error 列而不中断扫描。"""
    row = BenchRow(
        model_family=point.family,
        strategy=point.strategy,
        cells_per_axis=point.cells,
        fixed_iterations=point.iterations,
        N=sweep.n_points,
        inlier_ratio=sweep.inlier_ratio,
        seed=point.seed,
    )
    try:
        ds = _dataset(point.family, sweep.n_points, sweep.inlier_ratio, sweep.noise_sigma, point.seed)
        config = _ransac_config(point, sweep, ds, point.iterations or None)
        engine = RansacEngine(config)
        grid = engine.prepare_grid(ds.data) if config.strategy.uses_grid else None
        if sweep.warmup:
            warm = RansacEngine(_ransac_config(point, sweep, ds, 1))
            warm.run(ds.data, grid)
        result = engine.run(ds.data, grid)
    except Exception as exc:
        logger.error("Sweep point %d (%s/%s/%d) failed: %s", point.index, point.family, point.strategy, point.cells, exc)
        row.error = f"{type(exc).__name__}: {exc}"
        return row

    stats = result.stats
    row.evaluated_points = stats.evaluated_points
    row.models_verified = stats.models_verified
    row.early_rejections = stats.early_rejections
    row.t_r_ms = stats.cell_rejection_time * 1000.0
    row.t_v_ms = stats.verification_time * 1000.0
    row.total_ms = result.wall_time * 1000.0
    row.inliers_found = int(result.inlier_ids.size)
    return row


def add_relative_times(df: pd.DataFrame) -> pd.DataFrame:
    """rel_total = total_ms / 同 (族, 迭代, 种子) 的传统策略 total_ms。"""
    keys = ["model_family", "fixed_iterations", "seed"]
    base = (
        df[(df["strategy"] == Strategy.TRADITIONAL.value) & (df["error"] == "")]
        .drop_duplicates(keys)
        .set_index(keys)["total_ms"]
    )
    idx = pd.MultiIndex.from_frame(df[keys])
    baseline = base.reindex(idx).to_numpy()
    with np.errstate(divide="ignore", invalid="ignore"):
        df["rel_total"] = np.where(baseline > 0.0, df["total_ms"].to_numpy() / baseline, np.nan)
    return df


def run_bench(sweep: BenchSweep) -> pd.DataFrame:
    points = sweep_points(sweep)
    logger.info("Running benchmark sweep: %d points, jobs=%d", len(points), sweep.jobs)
    if sweep.jobs == 1:
        rows = [run_point(p, sweep) for p in points]
    else:
        rows = Parallel(n_jobs=sweep.jobs)(delayed(run_point)(p, sweep) for p in points)
    df = pd.DataFrame([asdict(r) for r in rows], columns=list(BENCH_COLUMNS))
    df = add_relative_times(df)
    failed = int((df["error"] != "").sum())
    if failed:
        logger.warning("%d of %d sweep points failed", failed, len(df))
    return df


def write_bench_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, columns=list(BENCH_COLUMNS), index=False, encoding="utf-8", lineterminator="\n")
    return path


def read_bench_csv(path: Union[str, Path]) -> pd.DataFrame:
    """读取基准 CSV；零字节文件视为无数据行，返回带全部列的空表。"""
    try:
        df = pd.read_csv(path, keep_default_na=False, na_values={"rel_total": ["", "nan"]})
    except pd.errors.EmptyDataError:
        logger.warning("Benchmark CSV %s is empty", path)
        return pd.DataFrame(columns=list(BENCH_COLUMNS))
    except OSError as exc:
        raise DataError(f"cannot read benchmark CSV {path}: {exc}") from exc
    missing = [c for c in BENCH_COLUMNS if c not in df.columns]
    if missing:
        raise ConfigurationError(f"benchmark CSV is missing columns: {', '.join(missing)}")
    df["error"] = df["error"].astype(str)
    return df


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """按 (族, 策略, 单元数) 汇总平均耗时，对应 t_r / t_v / 总时间的分解。"""
    ok = df[df["error"] == ""]
    return (
        ok.groupby(["model_family", "strategy", "cells_per_axis"], sort=False)[
            ["t_r_ms", "t_v_ms", "total_ms", "rel_total", "evaluated_points", "inliers_found"]
        ]
        .mean()
        .reset_index()
    )
