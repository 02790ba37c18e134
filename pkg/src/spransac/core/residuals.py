"""
残差函数。

批量版本（*_residuals）在 numpy 数组上工作，是验证阶段的热路径；
单点版本（residual_*）接受 Correspondence，便于测试与交互使用。
退化情形（点映射到无穷远、极线系数为零）统一返回 +inf。
"""

from __future__ import annotations

import numpy as np

from .types import (
    Correspondence,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    Model,
    RadialHomography,
    division_lift,
    project_lifted,
    undistort_points,
)


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, 2)


# ---------------------------------------------------------------------------
# 批量残差
# ---------------------------------------------------------------------------


def homography_residuals(H: np.ndarray, p, q) -> np.ndarray:
    """单向转移误差 ‖f_hom(p) − q‖₂。"""
    p = _as_points(p)
    q = _as_points(q)
    mapped = project_lifted(H, p, np.ones(len(p)))
    d = np.hypot(mapped[:, 0] - q[:, 0], mapped[:, 1] - q[:, 1])
    d[~np.isfinite(d)] = np.inf
    return d


def epipolar_residuals(F: np.ndarray, p, q) -> np.ndarray:
    """图像 2 中 q 到极线 F[p;1] 的距离。"""
    p = _as_points(p)
    q = _as_points(q)
    a = F[0, 0] * p[:, 0] + F[0, 1] * p[:, 1] + F[0, 2]
    b = F[1, 0] * p[:, 0] + F[1, 1] * p[:, 1] + F[1, 2]
    c = F[2, 0] * p[:, 0] + F[2, 1] * p[:, 1] + F[2, 2]
    norm = np.hypot(a, b)
    bad = norm == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(a * q[:, 0] + b * q[:, 1] + c) / norm
    d[bad] = np.inf
    return d


def radial_residuals(H: np.ndarray, lambda1: float, lambda2: float, p, q) -> np.ndarray:
    """在无畸变的图像 2 坐标中比较 f_rad(p) 与去畸变后的 q。"""
    p = _as_points(p)
    q = _as_points(q)
    g = division_lift(p, lambda1)
    mapped = project_lifted(H, p, g[:, 2])
    q_u = undistort_points(q, lambda2)
    d = np.hypot(mapped[:, 0] - q_u[:, 0], mapped[:, 1] - q_u[:, 1])
    d[~np.isfinite(d)] = np.inf
    return d


def sampson_residuals(F: np.ndarray, p, q) -> np.ndarray:
    """
    Sampson 距离（一阶几何误差近似）。

    只在传统验证中可选使用：空间划分的剔除不对它保守。
    """
    p = _as_points(p)
    q = _as_points(q)
    ph = np.column_stack([p, np.ones(len(p))])
    qh = np.column_stack([q, np.ones(len(q))])
    Fp = ph @ F.T
    Ftq = qh @ F
    num = np.einsum("ij,ij->i", qh, Fp)
    den = Fp[:, 0] ** 2 + Fp[:, 1] ** 2 + Ftq[:, 0] ** 2 + Ftq[:, 1] ** 2
    bad = den == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.abs(num) / np.sqrt(den)
    d[bad] = np.inf
    return d


def verification_matrix(model: Model) -> np.ndarray:
    """本质矩阵在验证前换算为像素坐标下的基础矩阵，其余模型取自身矩阵。"""
    if isinstance(model, EssentialSetup):
        return model.fundamental().F
    if isinstance(model, FundamentalMatrix):
        return model.F
    return model.H


def model_residuals(model: Model, p, q, sampson: bool = False) -> np.ndarray:
    """按模型类型分派的批量残差。"""
    if isinstance(model, Homography):
        return homography_residuals(model.H, p, q)
    if isinstance(model, RadialHomography):
        return radial_residuals(model.H, model.lambda1, model.lambda2, p, q)
    if isinstance(model, (FundamentalMatrix, EssentialSetup)):
        F = verification_matrix(model)
        if sampson:
            return sampson_residuals(F, p, q)
        return epipolar_residuals(F, p, q)
    raise TypeError(f"unsupported model type: {type(model).__name__}")


# ---------------------------------------------------------------------------
# 单点残差
# ---------------------------------------------------------------------------


def residual_homography(H: Homography, c: Correspondence) -> float:
    return float(homography_residuals(H.H, [c.p], [c.q])[0])


def residual_epipolar(F: FundamentalMatrix, c: Correspondence) -> float:
    return float(epipolar_residuals(F.F, [c.p], [c.q])[0])


def residual_radial(M: RadialHomography, c: Correspondence) -> float:
    return float(radial_residuals(M.H, M.lambda1, M.lambda2, [c.p], [c.q])[0])
