"""
领域类型。

- Correspondence / CorrespondenceSet：点对（单条 / 列式批量）
- Aabb2：轴对齐矩形，既用于图像范围也用于保守包围盒
- Homography / FundamentalMatrix / EssentialSetup / RadialHomography：四类模型
- Score：模型质量记录

所有类型构造后不可变；批量计算统一走 numpy 列式数组。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DataError

Point2 = Tuple[float, float]


def _frozen_array(values, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise DataError(f"expected array of shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


def normalize_frobenius(M: np.ndarray) -> np.ndarray:
    """将矩阵缩放到单位 Frobenius 范数（零矩阵原样返回）。"""
    norm = np.linalg.norm(M)
    if norm == 0.0 or not np.isfinite(norm):
        return np.array(M, dtype=float)
    return np.asarray(M, dtype=float) / norm


def project_lifted(H: np.ndarray, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """
    投影提升点 [u, v, z]：返回 (h1ᵀy / h3ᵀy, h2ᵀy / h3ᵀy)。

    |h3ᵀy| < 1e-12 的点视为映射到无穷远，返回 inf。
    """
    u = x[:, 0]
    v = x[:, 1]
    w = H[2, 0] * u + H[2, 1] * v + H[2, 2] * z
    nu = H[0, 0] * u + H[0, 1] * v + H[0, 2] * z
    nv = H[1, 0] * u + H[1, 1] * v + H[1, 2] * z
    bad = np.abs(w) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.stack([nu / w, nv / w], axis=1)
    out[bad] = np.inf
    return out


# ---------------------------------------------------------------------------
# 点对
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Correspondence:
    """单条点对 (p, q)，可选匹配质量分数（PROSAC 排序用）。"""

    p: Point2
    q: Point2
    score: Optional[float] = None

    def __post_init__(self) -> None:
        coords = (*self.p, *self.q)
        if len(coords) != 4 or not all(math.isfinite(float(c)) for c in coords):
            raise DataError(f"correspondence coordinates must be finite: p={self.p} q={self.q}")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise DataError(f"score must be in [0, 1], got {self.score}")

    def as_joint(self) -> Tuple[float, float, float, float]:
        """联合 4 维空间中的点。"""
        return (float(self.p[0]), float(self.p[1]), float(self.q[0]), float(self.q[1]))


class CorrespondenceSet:
    """
    列式点对集合。

    p、q 为 (N, 2) 只读数组，scores 为 (N,) 或 None。
    标识符即行号（0..N-1），网格与验证统一以行号引用点对。
    """

    __slots__ = ("p", "q", "scores")

    def __init__(self, p, q, scores=None) -> None:
        p_arr = np.array(p, dtype=float).reshape(-1, 2)
        q_arr = np.array(q, dtype=float).reshape(-1, 2)
        if p_arr.shape != q_arr.shape:
            raise DataError(f"p and q must have the same length ({len(p_arr)} != {len(q_arr)})")
        if not (np.all(np.isfinite(p_arr)) and np.all(np.isfinite(q_arr))):
            raise DataError("correspondence coordinates must be finite")
        s_arr = None
        if scores is not None:
            s_arr = np.array(scores, dtype=float).reshape(-1)
            if s_arr.shape[0] != p_arr.shape[0]:
                raise DataError("scores length does not match correspondences")
            if np.any(~np.isfinite(s_arr)) or np.any(s_arr < 0.0) or np.any(s_arr > 1.0):
                raise DataError("scores must be finite and in [0, 1]")
            s_arr.setflags(write=False)
        p_arr.setflags(write=False)
        q_arr.setflags(write=False)
        self.p = p_arr
        self.q = q_arr
        self.scores = s_arr

    @classmethod
    def from_correspondences(cls, corrs: Iterable[Correspondence]) -> "CorrespondenceSet":
        items = list(corrs)
        p = [c.p for c in items]
        q = [c.q for c in items]
        scores = None
        if items and all(c.score is not None for c in items):
            scores = [c.score for c in items]
        return cls(np.reshape(p, (-1, 2)), np.reshape(q, (-1, 2)), scores)

    def __len__(self) -> int:
        return int(self.p.shape[0])

    def __getitem__(self, idx: int) -> Correspondence:
        score = None if self.scores is None else float(self.scores[idx])
        return Correspondence(
            p=(float(self.p[idx, 0]), float(self.p[idx, 1])),
            q=(float(self.q[idx, 0]), float(self.q[idx, 1])),
            score=score,
        )

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, ids: Sequence[int]) -> "CorrespondenceSet":
        ids = np.asarray(ids, dtype=np.intp)
        scores = None if self.scores is None else self.scores[ids]
        return CorrespondenceSet(self.p[ids], self.q[ids], scores)

    def to_list(self) -> List[Correspondence]:
        return [self[i] for i in range(len(self))]

    def ranking(self) -> np.ndarray:
        """按分数降序的稳定排序；无分数时返回原顺序。"""
        if self.scores is None:
            return np.arange(len(self), dtype=np.intp)
        return np.argsort(-self.scores, kind="stable").astype(np.intp)


# ---------------------------------------------------------------------------
# 轴对齐矩形
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Aabb2:
    """轴对齐矩形；xmin > xmax 或 ymin > ymax 表示空盒。"""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def empty(cls) -> "Aabb2":
        return cls(math.inf, math.inf, -math.inf, -math.inf)

    @classmethod
    def from_points(cls, points) -> "Aabb2":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if pts.shape[0] == 0:
            return cls.empty()
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))

    @property
    def is_empty(self) -> bool:
        return self.xmin > self.xmax or self.ymin > self.ymax

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def is_degenerate(self) -> bool:
        return self.is_empty or not (self.width > 0.0 and self.height > 0.0)

    def corners(self) -> np.ndarray:
        """四个角点，逆时针：(xmin,ymin) (xmax,ymin) (xmax,ymax) (xmin,ymax)。"""
        return np.array(
            [
                [self.xmin, self.ymin],
                [self.xmax, self.ymin],
                [self.xmax, self.ymax],
                [self.xmin, self.ymax],
            ]
        )

    def inflate(self, d: float) -> "Aabb2":
        if self.is_empty:
            return self
        return Aabb2(self.xmin - d, self.ymin - d, self.xmax + d, self.ymax + d)

    def union(self, other: "Aabb2") -> "Aabb2":
        if self.is_empty:
            return other
        if other.is_empty:
            return self
        return Aabb2(
            min(self.xmin, other.xmin),
            min(self.ymin, other.ymin),
            max(self.xmax, other.xmax),
            max(self.ymax, other.ymax),
        )

    def intersects(self, other: "Aabb2") -> bool:
        """闭区间相交测试。"""
        if self.is_empty or other.is_empty:
            return False
        return (
            self.xmin <= other.xmax
            and other.xmin <= self.xmax
            and self.ymin <= other.ymax
            and other.ymin <= self.ymax
        )

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def contains_box(self, other: "Aabb2", tol: float = 0.0) -> bool:
        if other.is_empty:
            return True
        return (
            self.xmin - tol <= other.xmin
            and self.ymin - tol <= other.ymin
            and other.xmax <= self.xmax + tol
            and other.ymax <= self.ymax + tol
        )

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)


# ---------------------------------------------------------------------------
# 模型
# ---------------------------------------------------------------------------


class ModelFamily(str, Enum):
    """模型族，取值与 CLI 的 --model 参数一致。"""

    HOMOGRAPHY = "h"
    FUNDAMENTAL = "f"
    ESSENTIAL = "e"
    RADIAL_HOMOGRAPHY = "rh"

    @property
    def sample_size(self) -> int:
        return _SAMPLE_SIZES[self]

    @property
    def default_eps_r(self) -> float:
        """早期拒绝系数的默认值：单应 1.6，其余 1.2。"""
        return 1.6 if self is ModelFamily.HOMOGRAPHY else 1.2


_SAMPLE_SIZES = {
    ModelFamily.HOMOGRAPHY: 4,
    ModelFamily.FUNDAMENTAL: 7,
    ModelFamily.ESSENTIAL: 8,
    ModelFamily.RADIAL_HOMOGRAPHY: 4,
}


@dataclass(frozen=True, eq=False)
class Homography:
    """单应矩阵 H（尺度无关）。"""

    H: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "H", _frozen_array(self.H, (3, 3)))

    @property
    def family(self) -> ModelFamily:
        return ModelFamily.HOMOGRAPHY

    def normalized(self) -> "Homography":
        return Homography(normalize_frobenius(self.H))

    def map_points(self, x: np.ndarray) -> np.ndarray:
        """f_hom：齐次投影后的图像 2 坐标；分母为 0 的点返回 inf。"""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        return project_lifted(self.H, x, np.ones(len(x)))


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    """基础矩阵 F（尺度无关）。"""

    F: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "F", _frozen_array(self.F, (3, 3)))

    @property
    def family(self) -> ModelFamily:
        return ModelFamily.FUNDAMENTAL

    def normalized(self) -> "FundamentalMatrix":
        return FundamentalMatrix(normalize_frobenius(self.F))

    def epipolar_lines(self, x: np.ndarray) -> np.ndarray:
        """图像 1 点在图像 2 中的极线 l2 = F [x; 1]，形状 (N, 3)。"""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        xh = np.column_stack([x, np.ones(len(x))])
        return xh @ self.F.T


@dataclass(frozen=True, eq=False)
class EssentialSetup:
    """本质矩阵 E 与两台相机内参 K1、K2（像素）。"""

    E: np.ndarray
    K1: np.ndarray
    K2: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "E", _frozen_array(self.E, (3, 3)))
        object.__setattr__(self, "K1", _frozen_array(self.K1, (3, 3)))
        object.__setattr__(self, "K2", _frozen_array(self.K2, (3, 3)))
        for name in ("K1", "K2"):
            K = getattr(self, name)
            if np.any(np.abs(np.tril(K, -1)) > 0.0) or np.any(np.diag(K) <= 0.0):
                raise DataError(f"{name} must be upper-triangular with positive diagonal")

    @property
    def family(self) -> ModelFamily:
        return ModelFamily.ESSENTIAL

    def fundamental(self) -> "FundamentalMatrix":
        """F = K2^-T E K1^-1，归一化到单位 Frobenius 范数。"""
        K1_inv = np.linalg.inv(self.K1)
        K2_inv = np.linalg.inv(self.K2)
        return FundamentalMatrix(normalize_frobenius(K2_inv.T @ self.E @ K1_inv))


@dataclass(frozen=True, eq=False)
class RadialHomography:
    """带一参数除法模型畸变的单应：(H, λ1, λ2)，坐标已以主点为中心。"""

    H: np.ndarray
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "H", _frozen_array(self.H, (3, 3)))
        object.__setattr__(self, "lambda1", float(self.lambda1))
        object.__setattr__(self, "lambda2", float(self.lambda2))

    @property
    def family(self) -> ModelFamily:
        return ModelFamily.RADIAL_HOMOGRAPHY

    def normalized(self) -> "RadialHomography":
        return RadialHomography(normalize_frobenius(self.H), self.lambda1, self.lambda2)

    def is_well_defined(self, radius: float) -> bool:
        """1 + λ r² > 0 对所有不超过 radius 的半径成立。"""
        r2 = radius * radius
        return all(1.0 + lam * r2 > 0.0 for lam in (self.lambda1, self.lambda2))

    def map_points(self, x: np.ndarray) -> np.ndarray:
        """f_rad(x) = [h1ᵀg(x) / h3ᵀg(x), h2ᵀg(x) / h3ᵀg(x)]；分母为 0 的点返回 inf。"""
        x = np.asarray(x, dtype=float).reshape(-1, 2)
        g = division_lift(x, self.lambda1)
        return project_lifted(self.H, x, g[:, 2])


Model = Union[Homography, FundamentalMatrix, EssentialSetup, RadialHomography]


def family_of(model: Model) -> ModelFamily:
    return model.family


# ---------------------------------------------------------------------------
# 除法模型
# ---------------------------------------------------------------------------


def division_lift(x: np.ndarray, lam: float) -> np.ndarray:
    """g(x, λ) = [u, v, 1 + λ(u² + v²)]，形状 (N, 3)。"""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    r2 = x[:, 0] ** 2 + x[:, 1] ** 2
    return np.column_stack([x, 1.0 + lam * r2])


def undistort_points(x: np.ndarray, lam: float) -> np.ndarray:
    """畸变点 -> 无畸变点：x / (1 + λ|x|²)；模型无定义处返回 inf。"""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    denom = 1.0 + lam * (x[:, 0] ** 2 + x[:, 1] ** 2)
    bad = denom <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x / denom[:, None]
    out[bad] = np.inf
    return out


def distort_points(y: np.ndarray, lam: float) -> np.ndarray:
    """
    无畸变点 -> 畸变点（除法模型的径向闭式逆）。

    r_u = r_d / (1 + λ r_d²)  =>  λ r_u r_d² - r_d + r_u = 0，取 r_u -> 0 时连续的根。
    无实根时返回 nan。
    """
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    if lam == 0.0:
        return y.copy()
    ru = np.hypot(y[:, 0], y[:, 1])
    disc = 1.0 - 4.0 * lam * ru * ru
    rd = np.full_like(ru, np.nan)
    ok = disc >= 0.0
    small = ok & (ru < 1e-300)
    rd[small] = 0.0
    big = ok & ~small
    # 有理化写法：r_d = 2 r_u / (1 + sqrt(disc))，避免相消误差
    rd[big] = 2.0 * ru[big] / (1.0 + np.sqrt(disc[big]))
    scale = np.ones_like(ru)
    nz = big & (ru > 0.0)
    scale[nz] = rd[nz] / ru[nz]
    scale[~ok] = np.nan
    return y * scale[:, None]


# ---------------------------------------------------------------------------
# 模型质量
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Score:
    """
    模型质量。

    loss 越小越好：RANSAC 计数模式下 loss = -inlier_count，MSAC 模式下为截断二次损失之和。
    """

    inlier_count: int = 0
    loss: float = 0.0
    evaluated_points: int = 0

    @classmethod
    def worst(cls) -> "Score":
        return cls(inlier_count=0, loss=math.inf, evaluated_points=0)

    def is_better_than(self, other: Optional["Score"]) -> bool:
        """严格更优；平局保留已有模型。"""
        if other is None:
            return True
        return self.loss < other.loss

    def to_dict(self) -> dict:
        return {
            "inlier_count": int(self.inlier_count),
            "loss": float(self.loss),
            "evaluated_points": int(self.evaluated_points),
        }
