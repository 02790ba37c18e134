"""
单元投影的保守包围与单元对选择。

- 单应：四个角点投影的 AABB（直线映射为直线），网格顶点只投影一次
- 极线几何：图像 1 单元的极线族与图像 2 单元（按 ε 膨胀）是否相交
- 径向单应：边界上 Chebyshev 采样 + Bézier 控制点 AABB + 插值误差界
- 可逆情形：H⁻¹ 回投的包含测试（可选细化）

所有选择均为保守的：残差小于 ε 的点对所在单元对必然被选中。
数值退化时整行回退为全选，并计入 fallbacks。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from ..core.errors import PreconditionError
from ..core.residuals import verification_matrix
from ..core.types import (
    Aabb2,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    Model,
    RadialHomography,
    project_lifted,
)
from .partition import CellPair, JointGrid, mask_to_pairs, positions_from_spans
from .polyapprox import chebyshev_parameters, interpolation_operator, lagrange_error_bound

logger = logging.getLogger(__name__)

# 分母 |h3ᵀx| 低于该值视为经过无穷远
W_TOL = 1e-12
# 浮点舍入余量（相对坐标量级）
SLACK_REL = 1e-9
DEFAULT_BOUND_NODES = 4

_FULL_BOX = Aabb2(-math.inf, -math.inf, math.inf, math.inf)


# ---------------------------------------------------------------------------
# 数据结构
# ---------------------------------------------------------------------------


class CellRanges(NamedTuple):
    """每个图像 1 单元选中的图像 2 单元下标矩形（闭区间，lo > hi 为空），各形状 (n1²,)。"""

    ix_lo: np.ndarray
    ix_hi: np.ndarray
    iy_lo: np.ndarray
    iy_hi: np.ndarray


@dataclass
class CellSelection:
    """
    被保留的单元对。

    starts / lengths：所选非空桶在网格排序数组中的连续区间，联合编号升序；
    candidate_count 为区间内的点对总数。
    mask 形状 (n1², n2²)，按平铺编号索引，由单元矩形得到的选择在首次访问时才展开。
    """

    starts: np.ndarray
    lengths: np.ndarray
    fallbacks: int = 0
    grid: Optional[JointGrid] = field(default=None, repr=False)
    ranges: Optional[CellRanges] = field(default=None, repr=False)
    _mask: Optional[np.ndarray] = field(default=None, repr=False)
    candidate_count: int = field(init=False)

    def __post_init__(self) -> None:
        self.candidate_count = int(self.lengths.sum())

    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            if self.grid is None or self.ranges is None:
                raise PreconditionError("selection is not attached to a grid")
            self._mask = ranges_to_mask(self.grid, self.ranges)
        return self._mask

    def positions(self) -> np.ndarray:
        """候选点对在网格排序数组中的位置。"""
        return positions_from_spans(self.starts, self.lengths)

    @property
    def pairs(self) -> List[CellPair]:
        if self.grid is None:
            raise PreconditionError("selection is not attached to a grid")
        return mask_to_pairs(self.grid, self.mask)

    @property
    def selected_pairs(self) -> int:
        return int(np.count_nonzero(self.mask))


@dataclass(frozen=True)
class AngleInterval:
    """
    无向直线角度区间，角度取值 [0, π)。

    wraps 为 True 时区间为 [lo, π) ∪ [0, hi]；full 为 True 表示覆盖全部方向。
    """

    lo: float
    hi: float
    wraps: bool = False
    full: bool = False

    @classmethod
    def whole(cls) -> "AngleInterval":
        return cls(0.0, math.pi, wraps=False, full=True)

    @property
    def width(self) -> float:
        if self.full:
            return math.pi
        return (self.hi - self.lo) % math.pi if self.wraps else self.hi - self.lo

    def contains(self, angle: float, tol: float = 0.0) -> bool:
        if self.full:
            return True
        offset = (angle - self.lo) % math.pi
        return offset <= self.width + tol or offset >= math.pi - tol


# ---------------------------------------------------------------------------
# 单应
# ---------------------------------------------------------------------------


def bound_homography_cell(
    H: Homography, cell: Aabb2, eps: float, fallback_extent: Optional[Aabb2] = None
) -> Aabb2:
    """四个角点投影的 AABB 按 ε 膨胀；角点经过无穷远或跨越 h3ᵀx = 0 时返回回退范围。"""
    corners = cell.corners()
    Hm = H.H
    w = Hm[2, 0] * corners[:, 0] + Hm[2, 1] * corners[:, 1] + Hm[2, 2]
    if np.any(np.abs(w) < W_TOL) or (w.min() < 0.0 < w.max()):
        logger.debug("Homography cell bound falls back: corner at infinity")
        return (fallback_extent or _FULL_BOX).inflate(eps)
    mapped = project_lifted(Hm, corners, np.ones(4))
    return Aabb2.from_points(mapped).inflate(eps)


def invertible_containment(H: Homography, cell: Aabb2, q, margin: float = 0.0) -> bool:
    """H⁻¹ 将 q 映回图像 1 后是否落在按 margin 膨胀的单元内；H 奇异时抛 PreconditionError。"""
    Hi = _safe_inverse(H.H)
    if Hi is None:
        raise PreconditionError("homography is singular; inverse containment not applicable")
    back = project_lifted(Hi, np.asarray(q, dtype=float).reshape(1, 2), np.ones(1))[0]
    if not np.all(np.isfinite(back)):
        return False
    return cell.inflate(margin).contains(back)


def _safe_inverse(M: np.ndarray) -> Optional[np.ndarray]:
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e12:
        return None
    return np.linalg.inv(M)


def containment_margin(H: Homography, cell: Aabb2, eps: float, samples: int = 5) -> float:
    """
    图像 1 中的包含余量 ε · max‖J(H⁻¹)‖₂（在 f(cell) 膨胀 ε 的区域上采样雅可比），再乘 2。

    采样得到的界不严格，因此依赖它的细化不在精确性保证之内。
    """
    Hi = _safe_inverse(H.H)
    if Hi is None:
        return math.inf
    box = bound_homography_cell(H, cell, eps)
    if not all(math.isfinite(v) for v in box.as_tuple()):
        return math.inf
    gx = np.linspace(box.xmin, box.xmax, samples)
    gy = np.linspace(box.ymin, box.ymax, samples)
    X, Y = np.meshgrid(gx, gy)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = Hi[2, 0] * pts[:, 0] + Hi[2, 1] * pts[:, 1] + Hi[2, 2]
    if np.any(np.abs(w) < W_TOL) or (w.min() < 0.0 < w.max()):
        return math.inf
    mapped = project_lifted(Hi, pts, np.ones(len(pts)))
    worst = 0.0
    for k in range(len(pts)):
        J = (Hi[:2, :2] - np.outer(mapped[k], Hi[2, :2])) / w[k]
        worst = max(worst, float(np.linalg.norm(J, 2)))
    return 2.0 * eps * worst


def _index_range(edges: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # 与 partition 的单元赋值使用同一组边界，保证区间端点的单调一致
    n = len(edges) - 1
    i_lo = np.clip(np.searchsorted(edges, lo, side="right") - 1, 0, n - 1)
    i_hi = np.clip(np.searchsorted(edges, hi, side="right") - 1, 0, n - 1)
    valid = (hi >= edges[0]) & (lo <= edges[-1])
    return i_lo, i_hi, valid


def boxes_to_ranges(grid: JointGrid, boxes: np.ndarray) -> CellRanges:
    """
    每个图像 1 单元的包围盒 (n1², 4) -> 图像 2 单元下标矩形。

    NaN 行表示回退：整行选中；与图像 2 范围不相交的行为空矩形。
    """
    n2 = grid.spec.cells_per_axis_2
    xs2, ys2 = grid.edges_2
    fallback = np.any(np.isnan(boxes), axis=1)
    b = np.where(fallback[:, None], 0.0, boxes)
    ix_lo, ix_hi, vx = _index_range(xs2, b[:, 0], b[:, 2])
    iy_lo, iy_hi, vy = _index_range(ys2, b[:, 1], b[:, 3])
    empty = ~(vx & vy) & ~fallback
    return CellRanges(
        ix_lo=np.where(fallback, 0, np.where(empty, 1, ix_lo)),
        ix_hi=np.where(fallback, n2 - 1, np.where(empty, 0, ix_hi)),
        iy_lo=np.where(fallback, 0, iy_lo),
        iy_hi=np.where(fallback, n2 - 1, iy_hi),
    )


def ranges_to_mask(grid: JointGrid, ranges: CellRanges) -> np.ndarray:
    n2 = grid.spec.cells_per_axis_2
    iy2, ix2 = np.divmod(np.arange(n2 * n2), n2)
    return (
        (ix2[None, :] >= ranges.ix_lo[:, None])
        & (ix2[None, :] <= ranges.ix_hi[:, None])
        & (iy2[None, :] >= ranges.iy_lo[:, None])
        & (iy2[None, :] <= ranges.iy_hi[:, None])
    )


def boxes_to_mask(grid: JointGrid, boxes: np.ndarray) -> np.ndarray:
    """每个图像 1 单元的包围盒 (n1², 4) -> 单元对掩码 (n1², n2²)；NaN 行整行选中。"""
    return ranges_to_mask(grid, boxes_to_ranges(grid, boxes))


def _inflate_boxes(boxes: np.ndarray, eps: float) -> np.ndarray:
    scale = np.nanmax(np.abs(boxes), axis=1, initial=1.0)
    d = eps + SLACK_REL * np.maximum(scale, 1.0)
    out = boxes.copy()
    out[:, 0] -= d
    out[:, 1] -= d
    out[:, 2] += d
    out[:, 3] += d
    return out


def _vertex_geometry(grid: JointGrid) -> Tuple[np.ndarray, np.ndarray]:
    """图像 1 网格顶点（齐次，[iy, ix] 行优先）与每个单元四个角点的顶点序号 (n1², 4)。"""

    def build() -> Tuple[np.ndarray, np.ndarray]:
        n = grid.spec.cells_per_axis_1
        xs, ys = grid.edges_1
        VX, VY = np.meshgrid(xs, ys)
        verts = np.column_stack([VX.ravel(), VY.ravel(), np.ones(VX.size)])
        iy, ix = np.divmod(np.arange(n * n), n)
        v0 = iy * (n + 1) + ix
        corners = np.stack([v0, v0 + 1, v0 + n + 1, v0 + n + 2], axis=1)
        return verts, corners

    return grid.derived("vertices_1", build)


def homography_cell_boxes(H: np.ndarray, grid: JointGrid) -> np.ndarray:
    """
    全部图像 1 单元的角点投影 AABB（未膨胀），形状 (n1², 4)；回退行为 NaN。

    共享顶点只投影一次：(n+1)² 次投影。
    """
    verts, corners = _vertex_geometry(grid)
    w = verts @ H[2]
    proj = project_lifted(H, verts, verts[:, 2])
    corner_w = w[corners]
    corner_p = proj[corners]  # (n1², 4, 2)
    bad = (
        np.any(np.abs(corner_w) < W_TOL, axis=1)
        | ((corner_w.min(axis=1) < 0.0) & (corner_w.max(axis=1) > 0.0))
        | ~np.all(np.isfinite(corner_p), axis=(1, 2))
    )
    with np.errstate(invalid="ignore"):
        boxes = np.concatenate([corner_p.min(axis=1), corner_p.max(axis=1)], axis=1)
    boxes[bad] = np.nan
    return boxes


def cull_cells_homography(H: Homography, grid: JointGrid, eps: float) -> CellSelection:
    boxes = homography_cell_boxes(H.H, grid)
    return _selection_from_boxes(grid, boxes, eps)


def _selection_from_boxes(grid: JointGrid, boxes: np.ndarray, eps: float) -> CellSelection:
    fallbacks = int(np.count_nonzero(np.any(np.isnan(boxes), axis=1)))
    ranges = boxes_to_ranges(grid, _inflate_boxes(boxes, eps))
    starts, lengths = grid.rect_spans(*ranges)
    return CellSelection(starts=starts, lengths=lengths, fallbacks=fallbacks, grid=grid, ranges=ranges)



# ---------------------------------------------------------------------------
# 极线几何
# ---------------------------------------------------------------------------


def epipolar_angle_interval(F: FundamentalMatrix, cell: Aabb2) -> AngleInterval:
    """
    单元内所有点的极线（无向）角度区间。

    单元内点的极线法向是角点法向的非负组合，因此当角点法向位于一个开半平面内时，
    区间就是角点法向张成的锥；否则（含极点或零法向）返回全区间。
    """
    lines = F.epipolar_lines(cell.corners())
    normals = lines[:, :2]
    norms = np.hypot(normals[:, 0], normals[:, 1])
    if np.any(norms < W_TOL * max(1.0, float(np.max(np.abs(lines))))):
        return AngleInterval.whole()
    theta = np.arctan2(normals[:, 1], normals[:, 0])
    rel = (theta - theta[0] + math.pi) % (2.0 * math.pi) - math.pi
    span = float(rel.max() - rel.min())
    if span >= math.pi - 1e-12:
        return AngleInterval.whole()
    lo = float((theta[0] + rel.min()) % math.pi)
    hi = float((theta[0] + rel.max()) % math.pi)
    return AngleInterval(lo=lo, hi=hi, wraps=lo > hi)


def _corner_geometry_2(grid: JointGrid) -> Tuple[np.ndarray, np.ndarray, float]:
    """图像 2 单元角点（齐次，(n2², 4, 3)）、膨胀方向与坐标量级。"""

    def build() -> Tuple[np.ndarray, np.ndarray, float]:
        r = grid.rects_2
        one = np.ones(len(r))
        corners = np.stack(
            [
                np.column_stack([r[:, 0], r[:, 1], one]),
                np.column_stack([r[:, 2], r[:, 1], one]),
                np.column_stack([r[:, 2], r[:, 3], one]),
                np.column_stack([r[:, 0], r[:, 3], one]),
            ],
            axis=1,
        )
        outward = np.array([[-1.0, -1.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [-1.0, 1.0, 0.0]])
        scale = max(1.0, max(abs(v) for v in grid.spec.extent_2.as_tuple()))
        return corners, np.broadcast_to(outward, corners.shape), scale

    return grid.derived("corners_2", build)


def cull_cells_epipolar(F: FundamentalMatrix, grid: JointGrid, eps: float) -> CellSelection:
    """
    对每个 (C1, C2)：C2 按 ε 膨胀后，若存在 C1 中某点的极线与之相交则保留。

    C1 中任意点的极线是角点极线的凸组合，于是极线族与膨胀盒相交等价于
    16 个值 s_i(y_j) = l_iᵀ[y_j; 1]（i 为 C1 角点，j 为膨胀盒角点）不全同号：
    - 某条角点极线穿过膨胀盒（同一行内异号，覆盖角点距离与极端直线两种情形）
    - 各角点极线分居膨胀盒两侧（行间异号）
    极点落在 C1 内时组合可为零向量，同样判为不全同号，自然整行保留。
    """
    n1 = grid.spec.cells_per_axis_1
    n2 = grid.spec.cells_per_axis_2
    verts, corner_index = _vertex_geometry(grid)
    # (n1², 4, 3)：每个 C1 的四条角点极线；行归一化不改变符号，只改善量级
    lines = (verts @ F.F.T)[corner_index]
    scale = np.max(np.abs(lines), axis=-1, keepdims=True)
    lines = lines / np.where(scale > 0.0, scale, 1.0)

    corners2, outward, extent_scale = _corner_geometry_2(grid)
    inflated = corners2 + (eps + SLACK_REL * extent_scale) * outward
    S = (lines.reshape(-1, 3) @ inflated.reshape(-1, 3).T).reshape(n1 * n1, 4, n2 * n2, 4)
    all_pos = np.all(S > 0.0, axis=(1, 3))
    all_neg = np.all(S < 0.0, axis=(1, 3))
    mask = ~(all_pos | all_neg)
    starts, lengths = grid.mask_spans(mask)
    return CellSelection(starts=starts, lengths=lengths, fallbacks=0, grid=grid, _mask=mask)


# ---------------------------------------------------------------------------
# 一般映射（径向单应）
# ---------------------------------------------------------------------------


def _quadratic_range(c0, c1, c2) -> Tuple[np.ndarray, np.ndarray]:
    """c0 + c1 t + c2 t² 在 t ∈ [0, 1] 上的精确值域（逐元素）。"""
    c0, c1, c2 = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in (c0, c1, c2)))
    v0 = c0
    v1 = c0 + c1 + c2
    lo = np.minimum(v0, v1)
    hi = np.maximum(v0, v1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ts = np.where(c2 != 0.0, -c1 / (2.0 * c2), -1.0)
    inside = (ts > 0.0) & (ts < 1.0)
    vt = c0 + c1 * ts + c2 * ts * ts
    lo = np.where(inside, np.minimum(lo, vt), lo)
    hi = np.where(inside, np.maximum(hi, vt), hi)
    return lo, hi


def _edge_coefficients(H: np.ndarray, lam: float, A: np.ndarray, B: np.ndarray):
    """
    边 x(t) = A + t(B − A) 上 h_rᵀ g(x(t), λ) 的二次多项式系数，返回 3 组 (c0, c1, c2)，各形状 (E,)。
    """
    d = B - A
    a2 = np.sum(A * A, axis=1)
    ad = np.sum(A * d, axis=1)
    d2 = np.sum(d * d, axis=1)
    out = []
    for r in range(3):
        h1, h2, h3 = H[r]
        c0 = h1 * A[:, 0] + h2 * A[:, 1] + h3 * (1.0 + lam * a2)
        c1 = h1 * d[:, 0] + h2 * d[:, 1] + h3 * (2.0 * lam * ad)
        c2 = h3 * lam * d2
        out.append((c0, c1, c2))
    return out


def radial_edge_derivative_bound(H: np.ndarray, lam: float, A, B, k: int) -> np.ndarray:
    """
    f_rad 沿边 (参数 t ∈ [0,1]) 的 k 阶导数上界（两个坐标取大者），形状 (E,)。

    N(t)/D(t) 的 N、D 均为二次式。取复圆盘半径 ρ 使 |D| 在圆盘上不低于 min|D| 的一半，
    由 Cauchy 估计 |f^{(k)}| ≤ k! · max|N| / (0.5 · min|D| · ρ^k)。
    分母在边上变号或过小时返回 inf。
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    coeffs = _edge_coefficients(H, lam, A, B)
    d0, d1, d2 = coeffs[2]
    dlo, dhi = _quadratic_range(d0, d1, d2)
    same_sign = (dlo > W_TOL) | (dhi < -W_TOL)
    dmin = np.where(dlo > 0.0, dlo, -dhi)
    # |D'(t)| = |d1 + 2 d2 t| 在端点取最大
    dp = np.maximum(np.abs(d1), np.abs(d1 + 2.0 * d2))
    target = 0.5 * dmin
    a = np.abs(d2)
    # 解 a ρ² + dp ρ = target 的正根，再截到 1
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(
            a > 0.0,
            2.0 * target / (dp + np.sqrt(dp * dp + 4.0 * a * target)),
            np.where(dp > 0.0, target / dp, 1.0),
        )
    rho = np.minimum(rho, 1.0)
    m_num = np.zeros_like(dmin)
    for c0, c1, c2 in coeffs[:2]:
        nlo, nhi = _quadratic_range(c0, c1, c2)
        nmax = np.maximum(np.abs(nlo), np.abs(nhi))
        npmax = np.maximum(np.abs(c1), np.abs(c1 + 2.0 * c2))
        m_num = np.maximum(m_num, nmax + npmax * rho + np.abs(c2) * rho * rho)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        M = math.factorial(k) * m_num / (target * rho ** k)
    M = np.where(same_sign & (rho > 0.0) & np.isfinite(M), M, np.inf)
    return M


def bound_general(
    f: Callable[[np.ndarray], np.ndarray],
    cell: Aabb2,
    k: int,
    eps: float,
    M_estimator: Callable[[np.ndarray, np.ndarray, int], np.ndarray],
    fallback_extent: Optional[Aabb2] = None,
) -> Aabb2:
    """
    一般映射下单元的保守包围。

    对四条边各取 k 个 Chebyshev 参数采样 f，插值为 k−1 次 Bézier 曲线，
    取控制点 AABB 并按 ε 与 Lagrange 插值误差界膨胀，四条边取并。
    M_estimator(A, B, k) 返回各边 k 阶导数上界；失败或非有限时回退。
    """
    if not 2 <= k <= 11:
        raise PreconditionError(f"bound_general needs 2 <= k <= 11 nodes, got {k}")
    c = cell.corners()
    A = c
    B = np.roll(c, -1, axis=0)
    try:
        M = np.asarray(M_estimator(A, B, k), dtype=float).reshape(-1)
    except Exception as exc:  # noqa: BLE001
        logger.warning("Derivative bound estimation failed (%s); using fallback extent", exc)
        return (fallback_extent or _FULL_BOX).inflate(eps)
    if M.size == 1:
        M = np.repeat(M, 4)
    if not np.all(np.isfinite(M)) or np.any(M < 0.0):
        return (fallback_extent or _FULL_BOX).inflate(eps)

    ts = chebyshev_parameters(k)
    op = interpolation_operator(ts)
    box = Aabb2.empty()
    for e in range(4):
        pts = A[e] + ts[:, None] * (B[e] - A[e])
        samples = np.asarray(f(pts), dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(samples)):
            return (fallback_extent or _FULL_BOX).inflate(eps)
        controls = op @ samples
        err = lagrange_error_bound(k, 0.0, 1.0, float(M[e]))
        box = box.union(Aabb2.from_points(controls).inflate(err))
    return box.inflate(eps)


def _radial_cell_valid(model: RadialHomography, rects: np.ndarray) -> np.ndarray:
    """
    单元内分母 h3ᵀg 不变号且除法模型单调（映射单射），逐单元判断。

    分母是 u、v 的二元二次式，其在矩形上的值域由角点、各边驻点与内部驻点确定。
    """
    H = model.H
    lam = model.lambda1
    a, b, c = H[2]
    x0, y0, x1, y1 = rects[:, 0], rects[:, 1], rects[:, 2], rects[:, 3]

    def D(u, v):
        return a * u + b * v + c * (1.0 + lam * (u * u + v * v))

    cand = [D(x0, y0), D(x1, y0), D(x1, y1), D(x0, y1)]
    if lam * c != 0.0:
        us = -a / (2.0 * c * lam)
        vs = -b / (2.0 * c * lam)
        in_u = (us > x0) & (us < x1)
        in_v = (vs > y0) & (vs < y1)
        for yy in (y0, y1):
            cand.append(np.where(in_u, D(us, yy), cand[0]))
        for xx in (x0, x1):
            cand.append(np.where(in_v, D(xx, vs), cand[0]))
        cand.append(np.where(in_u & in_v, D(us, vs), cand[0]))
    vals = np.stack(cand, axis=0)
    lo = vals.min(axis=0)
    hi = vals.max(axis=0)
    sign_ok = (lo > W_TOL) | (hi < -W_TOL)

    r2max = np.maximum(x0 * x0, x1 * x1) + np.maximum(y0 * y0, y1 * y1)
    if lam > 0.0:
        mono_ok = lam * r2max < 1.0
    elif lam < 0.0:
        mono_ok = 1.0 + lam * r2max > 0.0
    else:
        mono_ok = np.ones_like(sign_ok)
    return sign_ok & mono_ok


def _edge_geometry(grid: JointGrid, k: int):
    """
    图像 1 网格边的端点 A、B，各边 k 个 Chebyshev 采样点（展平）及其 r²，插值算子与单元的四条边序号。

    水平边 [iy, ix]：(xs[ix], ys[iy]) -> (xs[ix+1], ys[iy])，共 n(n+1) 条；
    竖直边 [iy, ix]：(xs[ix], ys[iy]) -> (xs[ix], ys[iy+1])，共 (n+1)n 条。
    """

    def build():
        n = grid.spec.cells_per_axis_1
        xs, ys = grid.edges_1
        hx0, hy = np.meshgrid(xs[:-1], ys)
        hx1, _ = np.meshgrid(xs[1:], ys)
        vx, vy0 = np.meshgrid(xs, ys[:-1])
        _, vy1 = np.meshgrid(xs, ys[1:])
        A = np.concatenate([np.column_stack([hx0.ravel(), hy.ravel()]), np.column_stack([vx.ravel(), vy0.ravel()])])
        B = np.concatenate([np.column_stack([hx1.ravel(), hy.ravel()]), np.column_stack([vx.ravel(), vy1.ravel()])])
        n_h = n * (n + 1)

        ts = chebyshev_parameters(k)
        flat = (A[:, None, :] + ts[None, :, None] * (B - A)[:, None, :]).reshape(-1, 2)
        r2 = flat[:, 0] ** 2 + flat[:, 1] ** 2

        iy, ix = np.divmod(np.arange(n * n), n)
        bottom = iy * n + ix
        top = (iy + 1) * n + ix
        left = n_h + iy * (n + 1) + ix
        right = left + 1
        cell_edges = np.stack([bottom, top, left, right], axis=1)  # (n², 4)
        return A, B, flat, r2, interpolation_operator(ts), cell_edges

    return grid.derived(("edges_1", k), build)


def radial_cell_boxes(model: RadialHomography, grid: JointGrid, k: int = DEFAULT_BOUND_NODES) -> np.ndarray:
    """
    全部图像 1 单元在 f_rad 下的保守 AABB（含插值误差，未加 ε），形状 (n1², 4)；回退行为 NaN。

    每条网格边只采样一次，采样点随网格缓存。
    """
    H = model.H
    lam = model.lambda1
    A, B, flat, r2, op, cell_edges = _edge_geometry(grid, k)

    samples = project_lifted(H, flat, 1.0 + lam * r2).reshape(len(A), k, 2)
    controls = np.einsum("ij,ejd->eid", op, samples)
    M = radial_edge_derivative_bound(H, lam, A, B, k)
    err = lagrange_error_bound(k, 0.0, 1.0, 1.0) * M
    with np.errstate(invalid="ignore"):
        e_lo = controls.min(axis=1) - err[:, None]
        e_hi = controls.max(axis=1) + err[:, None]
    edge_bad = ~(np.all(np.isfinite(e_lo), axis=1) & np.all(np.isfinite(e_hi), axis=1))

    with np.errstate(invalid="ignore"):
        lo = e_lo[cell_edges].min(axis=1)
        hi = e_hi[cell_edges].max(axis=1)
    boxes = np.concatenate([lo, hi], axis=1)
    bad = np.any(edge_bad[cell_edges], axis=1) | ~_radial_cell_valid(model, grid.rects_1)
    boxes[bad] = np.nan
    return boxes


def cull_cells_radial(model: RadialHomography, grid: JointGrid, eps: float, k: int = DEFAULT_BOUND_NODES) -> CellSelection:
    return _selection_from_boxes(grid, radial_cell_boxes(model, grid, k), eps)


# ---------------------------------------------------------------------------
# 分派
# ---------------------------------------------------------------------------


def cull_cells(model: Model, grid: JointGrid, eps: float, bound_nodes: int = DEFAULT_BOUND_NODES) -> CellSelection:
    """按模型类型选择保守包围方式，返回保留的单元对。"""
    if isinstance(model, Homography):
        selection = cull_cells_homography(model, grid, eps)
    elif isinstance(model, (FundamentalMatrix, EssentialSetup)):
        F = model if isinstance(model, FundamentalMatrix) else FundamentalMatrix(verification_matrix(model))
        selection = cull_cells_epipolar(F, grid, eps)
    elif isinstance(model, RadialHomography):
        selection = cull_cells_radial(model, grid, eps, bound_nodes)
    else:
        raise PreconditionError(f"unsupported model type: {type(model).__name__}")
    if selection.fallbacks:
        logger.debug("Cell culling used %d conservative fallbacks", selection.fallbacks)
    return selection


def inverse_refine(H: Homography, grid: JointGrid, positions: np.ndarray, eps: float) -> np.ndarray:
    """
    可选细化：丢弃 H⁻¹q 落在其图像 1 单元（按 containment_margin 膨胀）之外的候选。

    返回保留的位置；H 奇异时原样返回。
    """
    Hi = _safe_inverse(H.H)
    if Hi is None or positions.size == 0:
        return positions
    rects = grid.rects_1
    margins = np.array(
        [containment_margin(H, Aabb2(*rects[c]), eps) for c in range(len(rects))]
    )
    cells = grid.cell_1[grid.order[positions]]
    back = project_lifted(Hi, grid.q_sorted[positions], np.ones(len(positions)))
    m = margins[cells]
    r = rects[cells]
    keep = (
        ~np.isfinite(m)
        | (
            np.all(np.isfinite(back), axis=1)
            & (back[:, 0] >= r[:, 0] - m)
            & (back[:, 0] <= r[:, 2] + m)
            & (back[:, 1] >= r[:, 1] - m)
            & (back[:, 1] <= r[:, 3] + m)
        )
    )
    return positions[keep]
