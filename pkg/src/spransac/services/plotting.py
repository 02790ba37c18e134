"""
基准结果绘图（静态 SVG）。

- relative_time_vs_iters：各 (策略, 单元数) 相对传统策略的总耗时比随 log10 迭代次数变化
- cdf_times：总耗时的经验累积分布（阶梯图）
- points_verified：实际计算残差的点数随迭代次数变化

图例中方括号内为联合网格单元总数。SVG 输出固定 hashsalt 且不写日期，同一输入逐字节相同。
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from ..core.errors import ConfigurationError  # noqa: E402
from .bench import read_bench_csv  # noqa: E402
from .verify import Strategy  # noqa: E402

logger = logging.getLogger(__name__)

PLOT_KINDS = ("relative_time_vs_iters", "cdf_times", "points_verified")
SVG_HASHSALT = "spransac"

Series = Tuple[str, np.ndarray, np.ndarray]


def empirical_cdf(values) -> Tuple[np.ndarray, np.ndarray]:
    """排序后的样本与对应累积概率 (i+1)/n。"""
    x = np.sort(np.asarray(values, dtype=float))
    y = np.arange(1, len(x) + 1, dtype=float) / max(len(x), 1)
    return x, y


def _label(family: str, strategy: str, cells: int, multi_family: bool) -> str:
    name = strategy if not Strategy(strategy).uses_grid else f"{strategy} [{int(cells) ** 4}]"
    return f"{family}: {name}" if multi_family else name


def _series(df: pd.DataFrame, kind: str) -> List[Series]:
    ok = df[df["error"].astype(str) == ""]
    if kind == "relative_time_vs_iters":
        ok = ok[(ok["strategy"] != Strategy.TRADITIONAL.value) & (ok["fixed_iterations"] > 0)]
    elif kind == "points_verified":
        ok = ok[ok["fixed_iterations"] > 0]
    multi_family = ok["model_family"].nunique() > 1
    out: List[Series] = []
    for (family, strategy, cells), grp in ok.groupby(["model_family", "strategy", "cells_per_axis"], sort=True):
        label = _label(family, strategy, cells, multi_family)
        if kind == "cdf_times":
            x, y = empirical_cdf(grp["total_ms"])
        else:
            column = "rel_total" if kind == "relative_time_vs_iters" else "evaluated_points"
            means = grp.groupby("fixed_iterations")[column].mean().dropna()
            x = means.index.to_numpy(dtype=float)
            y = means.to_numpy(dtype=float)
        if len(x):
            out.append((label, x, y))
    return out


def build_figure(df: pd.DataFrame, kind: str):
    """按种类构建 matplotlib Figure；无可绘数据时返回带警告注释的空图。"""
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"unknown plot kind {kind!r}; expected one of {', '.join(PLOT_KINDS)}")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = _series(df, kind) if len(df) else []
    if not series:
        logger.warning("No data to plot for kind %s", kind)
        ax.text(0.5, 0.5, "warning: no data", ha="center", va="center", transform=ax.transAxes)
        ax.set_axis_off()
        return fig

    for label, x, y in series:
        if kind == "cdf_times":
            ax.step(x, y, where="post", label=label)
        else:
            ax.plot(x, y, marker="o", label=label)

    if kind == "cdf_times":
        ax.set_xlabel("total time (ms)")
        ax.set_ylabel("fraction of runs")
        ax.set_ylim(0.0, 1.05)
    else:
        ax.set_xscale("log", base=10)
        ax.set_xlabel("iterations")
        if kind == "relative_time_vs_iters":
            ax.set_ylabel("time / traditional time")
            ax.axhline(1.0, color="grey", linewidth=0.8, linestyle="--")
        else:
            ax.set_ylabel("points verified")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return fig


def emit_svg(source: Union[pd.DataFrame, str, Path], kind: str, out: Optional[Union[str, Path]] = None) -> str:
    """生成 SVG 文本；给定 out 时同时写入文件。"""
    df = source if isinstance(source, pd.DataFrame) else read_bench_csv(source)
    with plt.rc_context({"svg.hashsalt": SVG_HASHSALT, "svg.fonttype": "none"}):
        fig = build_figure(df, kind)
        buf = io.StringIO()
        try:
            fig.savefig(buf, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    svg = buf.getvalue()
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg, encoding="utf-8")
        logger.info("Wrote %s chart to %s", kind, path)
    return svg
