"""
联合点对空间的规则网格划分。

两幅图像各自被划分为 n×n 的轴对齐单元，点对按 (图像 1 单元, 图像 2 单元) 分桶。
存储采用 CSR 形式：点对按联合单元编号稳定排序，offsets 给出每个桶的起止位置，
因此取一个桶或汇总一组桶都不需要逐点的 Python 循环。

单元编号约定：
- 单元索引 (i, j)，i 沿 x 轴，j 沿 y 轴
- 平铺编号 flat = j * n + i
- 联合编号 pair = flat1 * n2² + flat2，与 (n1², n2²) 形状的掩码按行展开一致
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, Hashable, Iterable, List, Optional, Tuple

import numpy as np

from ..core.errors import ConfigurationError, DataError
from ..core.types import Aabb2, Correspondence, CorrespondenceSet

logger = logging.getLogger(__name__)

CellIndex = Tuple[int, int]
CellPair = Tuple[CellIndex, CellIndex]


# ---------------------------------------------------------------------------
# 网格规格
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    cells_per_axis_1: int
    cells_per_axis_2: int
    extent_1: Aabb2
    extent_2: Aabb2

    def __post_init__(self) -> None:
        for name in ("cells_per_axis_1", "cells_per_axis_2"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {value}")
        for name in ("extent_1", "extent_2"):
            ext = getattr(self, name)
            if ext.is_degenerate or not np.all(np.isfinite(ext.as_tuple())):
                raise ConfigurationError(f"{name} is degenerate: {ext.as_tuple()}")

    @property
    def cells_1(self) -> int:
        return self.cells_per_axis_1 ** 2

    @property
    def cells_2(self) -> int:
        return self.cells_per_axis_2 ** 2

    @property
    def total_cells(self) -> int:
        return self.cells_1 * self.cells_2


def grid_edges(extent: Aabb2, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """单元边界坐标 xs、ys（各 n+1 个，首尾与 extent 精确相等）。"""
    k = np.arange(n + 1, dtype=float)
    xs = extent.xmin + extent.width * (k / n)
    ys = extent.ymin + extent.height * (k / n)
    xs[0], xs[-1] = extent.xmin, extent.xmax
    ys[0], ys[-1] = extent.ymin, extent.ymax
    return xs, ys


def _axis_index(edges: np.ndarray, values: np.ndarray) -> np.ndarray:
    # edges[i] <= v < edges[i+1]，最大边界归入最后一个单元
    n = len(edges) - 1
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, n - 1)


def cell_indices(points, extent: Aabb2, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """批量计算单元索引 (ix, iy)。超出 extent 的点被夹到边缘单元。"""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(pts)):
        raise DataError("cannot index non-finite coordinates")
    xs, ys = grid_edges(extent, n)
    return _axis_index(xs, pts[:, 0]), _axis_index(ys, pts[:, 1])


def cell_of(point, extent: Aabb2, cells_per_axis: int) -> CellIndex:
    """
    单点所在单元：i = floor((x − x_min) / w · n)，夹到 [0, n−1]。

    实现上以单元边界数组做二分查找，保证点与其单元矩形的包含关系在浮点意义下严格成立。
    """
    if cells_per_axis < 1:
        raise ConfigurationError(f"cells_per_axis must be >= 1, got {cells_per_axis}")
    ix, iy = cell_indices([point], extent, cells_per_axis)
    return int(ix[0]), int(iy[0])


def flat_index(cell: CellIndex, n: int) -> int:
    return int(cell[1]) * n + int(cell[0])


def unflat_index(flat: int, n: int) -> CellIndex:
    return int(flat % n), int(flat // n)


def cell_rects(extent: Aabb2, n: int) -> np.ndarray:
    """所有单元的矩形，形状 (n², 4)，列为 xmin, ymin, xmax, ymax，按平铺编号排列。"""
    xs, ys = grid_edges(extent, n)
    iy, ix = np.divmod(np.arange(n * n), n)
    return np.column_stack([xs[ix], ys[iy], xs[ix + 1], ys[iy + 1]])


def _covering_extent(points: np.ndarray, extent: Optional[Aabb2], label: str) -> Aabb2:
    tight = Aabb2.from_points(points)
    if extent is None:
        if tight.is_empty:
            return Aabb2(0.0, 0.0, 1.0, 1.0)
        extent = tight
    elif not extent.contains_box(tight):
        logger.warning("Extent %s %s expanded to cover all points", label, extent.as_tuple())
        extent = extent.union(tight)
    # 所有点共线或重合时补出正的宽高
    xmin, ymin, xmax, ymax = extent.as_tuple()
    if xmax <= xmin:
        xmin, xmax = xmin - 0.5, xmax + 0.5
    if ymax <= ymin:
        ymin, ymax = ymin - 0.5, ymax + 0.5
    return Aabb2(xmin, ymin, xmax, ymax)


def default_grid_spec(
    corrs: CorrespondenceSet,
    cells_1: int,
    cells_2: Optional[int] = None,
    extent_1: Optional[Aabb2] = None,
    extent_2: Optional[Aabb2] = None,
    q_keys: Optional[np.ndarray] = None,
) -> GridSpec:
    """
    由数据生成网格规格：未给出的范围取点的紧包围盒，给出的范围被扩展到覆盖全部点。

    q_keys 用于替代 q 参与图像 2 的划分（径向单应使用去畸变后的坐标）。
    """
    q = corrs.q if q_keys is None else np.asarray(q_keys, dtype=float).reshape(-1, 2)
    return GridSpec(
        cells_per_axis_1=int(cells_1),
        cells_per_axis_2=int(cells_2 if cells_2 else cells_1),
        extent_1=_covering_extent(corrs.p, extent_1, "1"),
        extent_2=_covering_extent(q, extent_2, "2"),
    )


# ---------------------------------------------------------------------------
# 联合网格
# ---------------------------------------------------------------------------


class JointGrid:
    """
    分桶后的点对集合。构造后只读，可被多个线程并发查询。

    order：按联合编号稳定排序后的点对标识符
    offsets：长度 total_cells + 1，桶 k 占 order[offsets[k]:offsets[k+1]]
    p_sorted / q_sorted：按 order 重排后的原始坐标，验证时连续访问
    """

    def __init__(
        self,
        spec: GridSpec,
        data: CorrespondenceSet,
        order: np.ndarray,
        offsets: np.ndarray,
        cell_1: np.ndarray,
        cell_2: np.ndarray,
    ) -> None:
        self.spec = spec
        self.data = data
        self.order = order
        self.offsets = offsets
        self.cell_1 = cell_1
        self.cell_2 = cell_2
        self.p_sorted = data.p[order]
        self.q_sorted = data.q[order]
        self.pair_counts = np.diff(offsets).reshape(spec.cells_1, spec.cells_2)
        self.per_cell_counts_1 = self.pair_counts.sum(axis=1)
        self.per_cell_counts_2 = self.pair_counts.sum(axis=0)
        self.rects_1 = cell_rects(spec.extent_1, spec.cells_per_axis_1)
        self.rects_2 = cell_rects(spec.extent_2, spec.cells_per_axis_2)
        self.edges_1 = grid_edges(spec.extent_1, spec.cells_per_axis_1)
        self.edges_2 = grid_edges(spec.extent_2, spec.cells_per_axis_2)
        # (c1, iy2) 行首桶的联合编号
        n2 = spec.cells_per_axis_2
        self._row_base = (
            np.arange(spec.cells_1, dtype=np.intp)[:, None] * spec.cells_2
            + np.arange(n2, dtype=np.intp)[None, :] * n2
        )
        self._buckets: Optional[Dict[CellPair, List[int]]] = None
        self._derived: Dict[Any, Any] = {}

    def __len__(self) -> int:
        return int(self.order.shape[0])

    @property
    def buckets(self) -> Dict[CellPair, List[int]]:
        """非空桶的映射视图 {(单元 1, 单元 2): [标识符...]}，首次访问时生成。"""
        if self._buckets is None:
            n1 = self.spec.cells_per_axis_1
            n2 = self.spec.cells_per_axis_2
            out: Dict[CellPair, List[int]] = {}
            for pair in np.flatnonzero(self.pair_counts.ravel()):
                f1, f2 = divmod(int(pair), self.spec.cells_2)
                key = (unflat_index(f1, n1), unflat_index(f2, n2))
                out[key] = self.order[self.offsets[pair] : self.offsets[pair + 1]].tolist()
            self._buckets = out
        return self._buckets

    def ids_in_pair(self, c1: CellIndex, c2: CellIndex) -> np.ndarray:
        n1 = self.spec.cells_per_axis_1
        n2 = self.spec.cells_per_axis_2
        if not (0 <= c1[0] < n1 and 0 <= c1[1] < n1 and 0 <= c2[0] < n2 and 0 <= c2[1] < n2):
            return np.empty(0, dtype=np.intp)
        pair = flat_index(c1, n1) * self.spec.cells_2 + flat_index(c2, n2)
        return self.order[self.offsets[pair] : self.offsets[pair + 1]]

    def derived(self, key: Hashable, build: Callable[[], Any]) -> Any:
        """只依赖网格本身的派生量（剔除用的顶点、边采样点等），首次访问时生成并缓存。"""
        value = self._derived.get(key)
        if value is None:
            value = self._derived[key] = build()
        return value

    def mask_spans(self, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """掩码 -> 所选非空桶的 CSR 区间 (starts, lengths)，联合编号升序。"""
        counts = self.pair_counts.ravel()
        selected = np.flatnonzero(np.asarray(mask, dtype=bool).ravel() & (counts > 0))
        return self.offsets[selected], counts[selected]

    def rect_spans(
        self, ix_lo: np.ndarray, ix_hi: np.ndarray, iy_lo: np.ndarray, iy_hi: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        每个图像 1 单元选中一个图像 2 单元矩形 [ix_lo, ix_hi] × [iy_lo, iy_hi]（闭区间，lo > hi 为空）。

        同一行相邻的桶在 CSR 中首尾相接，所以每个 (c1, iy) 只对应一段连续区间，
        不必展开 (n1², n2²) 掩码。返回非空区间的 (starts, lengths)，联合编号升序。
        """
        rows = np.arange(self.spec.cells_per_axis_2)
        hit = (rows >= iy_lo[:, None]) & (rows <= iy_hi[:, None]) & (ix_lo <= ix_hi)[:, None]
        c1 = np.nonzero(hit)[0]
        base = self._row_base[hit]
        starts = self.offsets[base + ix_lo[c1]]
        lengths = self.offsets[base + ix_hi[c1] + 1] - starts
        keep = lengths > 0
        return starts[keep], lengths[keep]

    def gather_positions(self, mask: np.ndarray) -> np.ndarray:
        """被选中桶内点对在排序数组中的位置，按联合编号升序拼接。"""
        return positions_from_spans(*self.mask_spans(mask))

    def count_selected(self, mask: np.ndarray) -> int:
        return int(self.pair_counts[np.asarray(mask, dtype=bool)].sum())


def positions_from_spans(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """CSR 区间 -> 排序数组中的位置，按区间顺序拼接。"""
    if starts.size == 0:
        return np.empty(0, dtype=np.intp)
    total = int(lengths.sum())
    # 每段起点减去该段在输出中的偏移，再加上全局序号
    shift = np.repeat(starts - (np.cumsum(lengths) - lengths), lengths)
    return (shift + np.arange(total)).astype(np.intp)


def build_grid(
    corrs: CorrespondenceSet,
    spec: GridSpec,
    q_keys: Optional[np.ndarray] = None,
) -> JointGrid:
    """
    O(N) 构建联合网格；桶内顺序保持输入顺序。

    q_keys 替代 q 决定图像 2 单元（径向单应传入去畸变坐标），验证仍使用原始 q。
    """
    if isinstance(corrs, (list, tuple)):
        corrs = CorrespondenceSet.from_correspondences(corrs)
    q = corrs.q if q_keys is None else np.asarray(q_keys, dtype=float).reshape(-1, 2)
    if q.shape != corrs.p.shape:
        raise DataError("q_keys must match the correspondence count")

    n1 = spec.cells_per_axis_1
    n2 = spec.cells_per_axis_2
    ix1, iy1 = cell_indices(corrs.p, spec.extent_1, n1)
    ix2, iy2 = cell_indices(q, spec.extent_2, n2)
    cell_1 = (iy1 * n1 + ix1).astype(np.intp)
    cell_2 = (iy2 * n2 + ix2).astype(np.intp)
    pair = cell_1 * spec.cells_2 + cell_2

    order = np.argsort(pair, kind="stable").astype(np.intp)
    counts = np.bincount(pair, minlength=spec.total_cells)
    offsets = np.zeros(spec.total_cells + 1, dtype=np.intp)
    np.cumsum(counts, out=offsets[1:])

    grid = JointGrid(spec, corrs, order, offsets, cell_1, cell_2)
    logger.info(
        "Joint grid built: N=%d cells=%d^2 x %d^2 non-empty buckets=%d",
        len(corrs),
        n1,
        n2,
        int(np.count_nonzero(counts)),
    )
    return grid


def corrs_in_cell_pair(grid: JointGrid, c1: CellIndex, c2: CellIndex) -> List[Correspondence]:
    """p 落在 c1、q 落在 c2 的点对；越界或空桶返回空列表。"""
    return [grid.data[int(i)] for i in grid.ids_in_pair(c1, c2)]


def upper_bound_count(grid: JointGrid, selected: Iterable[CellPair]) -> int:
    """所选单元对中的点对总数，是任何产生该选择的模型内点数的上界。"""
    n1 = grid.spec.cells_per_axis_1
    n2 = grid.spec.cells_per_axis_2
    total = 0
    for c1, c2 in set(selected):
        if 0 <= c1[0] < n1 and 0 <= c1[1] < n1 and 0 <= c2[0] < n2 and 0 <= c2[1] < n2:
            total += int(grid.pair_counts[flat_index(c1, n1), flat_index(c2, n2)])
    return total


def mask_to_pairs(grid: JointGrid, mask: np.ndarray) -> List[CellPair]:
    """掩码 -> 单元对列表（联合编号升序）。"""
    n1 = grid.spec.cells_per_axis_1
    n2 = grid.spec.cells_per_axis_2
    out: List[CellPair] = []
    for f1, f2 in zip(*np.nonzero(np.asarray(mask, dtype=bool))):
        out.append((unflat_index(int(f1), n1), unflat_index(int(f2), n2)))
    return out
