"""
模型求解器。

- homography_4pt / homography_dlt：Hartley 归一化 DLT
- fundamental_7pt：7 点法，闭式三次方程 det(αF1 + (1−α)F2) = 0
- fundamental_8pt：归一化 8 点法 + 秩 2 投影
- essential_8pt：内参归一化坐标上的 8 点法 + 本质流形投影
- f_from_e：F = K2⁻ᵀ E K1⁻¹

所有输出矩阵归一化到单位 Frobenius 范数，并把绝对值最大的元素调整为正，保证同一样本输出逐位相同。
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.errors import DegenerateConfigurationError, NumericalError, PreconditionError
from ..core.types import (
    Correspondence,
    CorrespondenceSet,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    Model,
    ModelFamily,
    RadialHomography,
    normalize_frobenius,
    undistort_points,
)

logger = logging.getLogger(__name__)

# 归一化三角形面积低于该值视为共线
COLLINEAR_TOL = 1e-9
# 设计矩阵奇异值相对阈值
RANK_TOL = 1e-12


@dataclass(frozen=True)
class MinimalSample:
    """最小样本：点对标识符列表。"""

    indices: Tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.indices)) != len(self.indices):
            raise PreconditionError(f"sample indices must be distinct: {self.indices}")

    @property
    def size(self) -> int:
        return len(self.indices)


# ---------------------------------------------------------------------------
# 公共工具
# ---------------------------------------------------------------------------


def _split(sample, q=None) -> Tuple[np.ndarray, np.ndarray]:
    if q is not None:
        return np.asarray(sample, dtype=float).reshape(-1, 2), np.asarray(q, dtype=float).reshape(-1, 2)
    if isinstance(sample, CorrespondenceSet):
        return np.asarray(sample.p), np.asarray(sample.q)
    items: Sequence[Correspondence] = list(sample)
    p = np.array([c.p for c in items], dtype=float).reshape(-1, 2)
    qq = np.array([c.q for c in items], dtype=float).reshape(-1, 2)
    return p, qq


def _canonical_sign(M: np.ndarray) -> np.ndarray:
    M = normalize_frobenius(M)
    flat = M.ravel()
    if flat[int(np.argmax(np.abs(flat)))] < 0.0:
        M = -M
    return M


def hartley_normalization(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    质心移到原点、到原点平均距离缩放为 √2。

    返回 (归一化后的点, 3×3 变换 T)；所有点重合时抛 DegenerateConfigurationError。
    """
    centroid = x.mean(axis=0)
    d = np.hypot(x[:, 0] - centroid[0], x[:, 1] - centroid[1])
    mean_d = float(d.mean()) if len(d) else 0.0
    if not np.isfinite(mean_d) or mean_d <= 1e-300:
        raise DegenerateConfigurationError("points are coincident; cannot normalize")
    s = np.sqrt(2.0) / mean_d
    T = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return (x - centroid) * s, T


def _has_collinear_triple(x: np.ndarray) -> bool:
    for i, j, k in itertools.combinations(range(len(x)), 3):
        a = x[j] - x[i]
        b = x[k] - x[i]
        if abs(a[0] * b[1] - a[1] * b[0]) * 0.5 < COLLINEAR_TOL:
            return True
    return False


def _null_vector(A: np.ndarray, rank_index: int) -> np.ndarray:
    _, s, vt = np.linalg.svd(A)
    if s[rank_index] < RANK_TOL * s[0]:
        raise DegenerateConfigurationError("design matrix is rank deficient")
    return vt[-1]


def _enforce_rank2(F: np.ndarray) -> np.ndarray:
    U, s, Vt = np.linalg.svd(F)
    s[2] = 0.0
    return U @ np.diag(s) @ Vt


# ---------------------------------------------------------------------------
# 单应
# ---------------------------------------------------------------------------


def _homography_design(pn: np.ndarray, qn: np.ndarray) -> np.ndarray:
    n = len(pn)
    A = np.zeros((2 * n, 9))
    x, y = pn[:, 0], pn[:, 1]
    u, v = qn[:, 0], qn[:, 1]
    A[0::2, 0] = -x
    A[0::2, 1] = -y
    A[0::2, 2] = -1.0
    A[0::2, 6] = u * x
    A[0::2, 7] = u * y
    A[0::2, 8] = u
    A[1::2, 3] = -x
    A[1::2, 4] = -y
    A[1::2, 5] = -1.0
    A[1::2, 6] = v * x
    A[1::2, 7] = v * y
    A[1::2, 8] = v
    return A


def _solve_homography(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pn, T1 = hartley_normalization(p)
    qn, T2 = hartley_normalization(q)
    h = _null_vector(_homography_design(pn, qn), 7)
    Hn = h.reshape(3, 3)
    return _canonical_sign(np.linalg.solve(T2, Hn @ T1))


def homography_4pt(sample, q=None) -> List[Homography]:
    """4 点单应；任意 3 个源点或目标点共线时返回空列表。"""
    p, q = _split(sample, q)
    if len(p) != 4:
        raise PreconditionError(f"homography_4pt needs exactly 4 correspondences, got {len(p)}")
    try:
        pn, _ = hartley_normalization(p)
        qn, _ = hartley_normalization(q)
    except DegenerateConfigurationError:
        return []
    if _has_collinear_triple(pn) or _has_collinear_triple(qn):
        return []
    try:
        return [Homography(_solve_homography(p, q))]
    except (DegenerateConfigurationError, np.linalg.LinAlgError):
        return []


def homography_dlt(points, q=None) -> Homography:
    """≥4 点的代数最小二乘 DLT；秩亏时抛 DegenerateConfigurationError。"""
    p, q = _split(points, q)
    if len(p) < 4:
        raise PreconditionError(f"homography_dlt needs at least 4 correspondences, got {len(p)}")
    try:
        return Homography(_solve_homography(p, q))
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfigurationError(f"homography DLT failed: {exc}") from exc


# ---------------------------------------------------------------------------
# 基础矩阵
# ---------------------------------------------------------------------------


def _epipolar_design(pn: np.ndarray, qn: np.ndarray) -> np.ndarray:
    # 行对应 qᵀ F p = 0 中 F 的行优先展开
    x1, y1 = pn[:, 0], pn[:, 1]
    x2, y2 = qn[:, 0], qn[:, 1]
    ones = np.ones(len(pn))
    return np.column_stack([x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, ones])


def _cubic_coefficients(F1: np.ndarray, F2: np.ndarray) -> np.ndarray:
    # det(αF1 + (1−α)F2) 是 α 的三次多项式，由 4 个取值精确确定
    alphas = np.array([0.0, 1.0, -1.0, 2.0])
    values = np.array([np.linalg.det(a * F1 + (1.0 - a) * F2) for a in alphas])
    V = np.vander(alphas, 4)
    return np.linalg.solve(V, values)


def fundamental_7pt(sample, q=None) -> List[FundamentalMatrix]:
    """7 点法，返回 1 至 3 个解；零空间维数大于 2 时返回空列表。"""
    p, q = _split(sample, q)
    if len(p) != 7:
        raise PreconditionError(f"fundamental_7pt needs exactly 7 correspondences, got {len(p)}")
    try:
        pn, T1 = hartley_normalization(p)
        qn, T2 = hartley_normalization(q)
    except DegenerateConfigurationError:
        return []
    A = _epipolar_design(pn, qn)
    _, s, vt = np.linalg.svd(A)
    if s[6] < RANK_TOL * s[0]:
        return []
    F1 = vt[-1].reshape(3, 3)
    F2 = vt[-2].reshape(3, 3)

    coeffs = _cubic_coefficients(F1, F2)
    scale = np.max(np.abs(coeffs))
    if scale == 0.0:
        return []
    roots = np.roots(coeffs / scale)
    out: List[FundamentalMatrix] = []
    seen: List[float] = []
    for r in roots:
        if abs(r.imag) > 1e-8 * (1.0 + abs(r.real)):
            continue
        a = float(r.real)
        if any(abs(a - b) <= 1e-12 * (1.0 + abs(a)) for b in seen):
            continue
        seen.append(a)
        Fn = a * F1 + (1.0 - a) * F2
        F = T2.T @ Fn @ T1
        if not np.all(np.isfinite(F)) or np.linalg.norm(F) == 0.0:
            continue
        out.append(FundamentalMatrix(_canonical_sign(_enforce_rank2(normalize_frobenius(F)))))
    return out


def _fundamental_normalized(pn: np.ndarray, qn: np.ndarray) -> np.ndarray:
    f = _null_vector(_epipolar_design(pn, qn), 7)
    return _enforce_rank2(f.reshape(3, 3))


def fundamental_8pt(points, q=None) -> FundamentalMatrix:
    """归一化 8 点法（≥8 点）；设计矩阵秩亏时抛 DegenerateConfigurationError。"""
    p, q = _split(points, q)
    if len(p) < 8:
        raise PreconditionError(f"fundamental_8pt needs at least 8 correspondences, got {len(p)}")
    pn, T1 = hartley_normalization(p)
    qn, T2 = hartley_normalization(q)
    F = T2.T @ _fundamental_normalized(pn, qn) @ T1
    return FundamentalMatrix(_canonical_sign(_enforce_rank2(normalize_frobenius(F))))


# ---------------------------------------------------------------------------
# 本质矩阵
# ---------------------------------------------------------------------------


def _calibrate(x: np.ndarray, K: np.ndarray) -> np.ndarray:
    xh = np.column_stack([x, np.ones(len(x))])
    y = np.linalg.solve(K, xh.T).T
    return y[:, :2] / y[:, 2:3]


def project_to_essential(E: np.ndarray) -> np.ndarray:
    """投影到本质流形：奇异值替换为 ((s1+s2)/2, (s1+s2)/2, 0)。"""
    U, s, Vt = np.linalg.svd(E)
    m = 0.5 * (s[0] + s[1])
    return U @ np.diag([m, m, 0.0]) @ Vt


def essential_8pt(points, q=None, K1: Optional[np.ndarray] = None, K2: Optional[np.ndarray] = None) -> EssentialSetup:
    """像素坐标点对 + 内参 -> EssentialSetup。"""
    p, q = _split(points, q)
    if K1 is None or K2 is None:
        raise PreconditionError("essential_8pt requires both intrinsic matrices")
    if len(p) < 8:
        raise PreconditionError(f"essential_8pt needs at least 8 correspondences, got {len(p)}")
    try:
        pc = _calibrate(p, np.asarray(K1, dtype=float))
        qc = _calibrate(q, np.asarray(K2, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular intrinsics: {exc}") from exc
    pn, T1 = hartley_normalization(pc)
    qn, T2 = hartley_normalization(qc)
    E = T2.T @ _fundamental_normalized(pn, qn) @ T1
    E = _canonical_sign(project_to_essential(normalize_frobenius(E)))
    return EssentialSetup(E, K1, K2)


def f_from_e(setup: EssentialSetup) -> FundamentalMatrix:
    """F = K2⁻ᵀ E K1⁻¹，归一化；内参奇异时抛 NumericalError。"""
    for name in ("K1", "K2"):
        K = getattr(setup, name)
        if abs(np.linalg.det(K)) < 1e-300 or np.linalg.cond(K) > 1e15:
            raise NumericalError(f"{name} is singular")
    return setup.fundamental()


# ---------------------------------------------------------------------------
# 按模型族分派
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelContext:
    """
    估计所需的外部参数。

    本质矩阵族需要 K1、K2；径向单应族需要 λ1、λ2（由外部给定，不做估计）。
    """

    family: ModelFamily
    K1: Optional[np.ndarray] = None
    K2: Optional[np.ndarray] = None
    lambda1: float = 0.0
    lambda2: float = 0.0

    @property
    def sample_size(self) -> int:
        return self.family.sample_size


def estimate_minimal(ctx: ModelContext, p: np.ndarray, q: np.ndarray) -> List[Model]:
    """最小样本求解；退化样本返回空列表。"""
    family = ctx.family
    if family is ModelFamily.HOMOGRAPHY:
        return list(homography_4pt(p, q))
    if family is ModelFamily.FUNDAMENTAL:
        return list(fundamental_7pt(p, q))
    if family is ModelFamily.ESSENTIAL:
        try:
            return [essential_8pt(p, q, ctx.K1, ctx.K2)]
        except (DegenerateConfigurationError, np.linalg.LinAlgError):
            return []
    if family is ModelFamily.RADIAL_HOMOGRAPHY:
        pu = undistort_points(p, ctx.lambda1)
        qu = undistort_points(q, ctx.lambda2)
        if not (np.all(np.isfinite(pu)) and np.all(np.isfinite(qu))):
            return []
        return [RadialHomography(h.H, ctx.lambda1, ctx.lambda2) for h in homography_4pt(pu, qu)]
    raise PreconditionError(f"unsupported model family: {family}")


def estimate_nonminimal(ctx: ModelContext, p: np.ndarray, q: np.ndarray) -> Model:
    """非最小样本最小二乘拟合（局部优化使用）；失败时抛 NumericalError 子类。"""
    family = ctx.family
    try:
        if family is ModelFamily.HOMOGRAPHY:
            return homography_dlt(p, q)
        if family is ModelFamily.FUNDAMENTAL:
            return fundamental_8pt(p, q)
        if family is ModelFamily.ESSENTIAL:
            return essential_8pt(p, q, ctx.K1, ctx.K2)
        if family is ModelFamily.RADIAL_HOMOGRAPHY:
            pu = undistort_points(p, ctx.lambda1)
            qu = undistort_points(q, ctx.lambda2)
            if not (np.all(np.isfinite(pu)) and np.all(np.isfinite(qu))):
                raise DegenerateConfigurationError("points outside the division model domain")
            H = homography_dlt(pu, qu)
            return RadialHomography(H.H, ctx.lambda1, ctx.lambda2)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"non-minimal fit failed: {exc}") from exc
    raise PreconditionError(f"unsupported model family: {family}")
