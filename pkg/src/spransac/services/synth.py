"""
合成数据生成。

每个数据集由随机的良态真值模型、round(N·ratio) 个内点（加高斯噪声）与两图范围内均匀分布的外点组成，
之后整体随机打乱。同一 seed 生成完全相同的数据。

匹配分数（PROSAC 排序用）：内点为 1 − 归一化残差 + 噪声，外点为 [0, 1] 均匀分布，均截断到 [0, 1]。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..core.errors import ConfigurationError
from ..core.residuals import model_residuals
from ..core.types import (
    Aabb2,
    CorrespondenceSet,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    Model,
    ModelFamily,
    RadialHomography,
    distort_points,
    normalize_frobenius,
    undistort_points,
)
from .solvers import homography_4pt

logger = logging.getLogger(__name__)

DEFAULT_EXTENT = Aabb2(0.0, 0.0, 1000.0, 1000.0)
# 角点扰动幅度（相对图像尺寸）
CORNER_JITTER = 0.15
# 径向畸变强度 k = λ·R²（R 为半对角线）
RADIAL_STRENGTH = (-0.4, 0.0)
SCORE_NOISE = 0.1


@dataclass(frozen=True)
class SyntheticDataset:
    data: CorrespondenceSet
    model: Model
    family: ModelFamily
    inlier_mask: np.ndarray
    extent_1: Aabb2
    extent_2: Aabb2
    seed: int
    K1: Optional[np.ndarray] = None
    K2: Optional[np.ndarray] = None

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier_mask))


# ---------------------------------------------------------------------------
# 真值模型
# ---------------------------------------------------------------------------


def _random_homography(src: np.ndarray, extent: Aabb2, rng: np.random.Generator) -> Homography:
    """源四角点随机扰动后求单应，扰动幅度有限保证良态。"""
    scale = np.array([extent.width, extent.height])
    for _ in range(32):
        dst = src + rng.uniform(-CORNER_JITTER, CORNER_JITTER, size=(4, 2)) * scale
        solutions = homography_4pt(src, dst)
        if solutions:
            return Homography(normalize_frobenius(solutions[0].H))
    raise ConfigurationError("could not generate a non-degenerate ground-truth homography")


def _rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    kx = _skew(axis)
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def _skew(t: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])


def default_intrinsics(extent: Aabb2) -> np.ndarray:
    """焦距取图像宽度，主点取范围中心。"""
    cx = 0.5 * (extent.xmin + extent.xmax)
    cy = 0.5 * (extent.ymin + extent.ymax)
    f = max(extent.width, extent.height)
    return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])


def _two_view_inliers(
    p: np.ndarray, K: np.ndarray, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """由图像 1 点反投影到随机深度，经随机相对位姿投影到图像 2；返回 (q, E, 是否成功)。"""
    R = _rotation(rng.normal(size=3), rng.uniform(0.02, 0.2))
    t = rng.normal(size=3)
    t /= np.linalg.norm(t)
    depth = rng.uniform(4.0, 8.0, size=len(p))
    rays = np.column_stack([p, np.ones(len(p))]) @ np.linalg.inv(K).T
    X = rays * depth[:, None]
    Xc = X @ R.T + t
    proj = Xc @ K.T
    q = proj[:, :2] / proj[:, 2:3]
    E = _skew(t) @ R
    return q, E, Xc[:, 2] > 0.0


# ---------------------------------------------------------------------------
# 生成
# ---------------------------------------------------------------------------


def _inlier_scores(residuals: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    norm = residuals / (3.0 * sigma) if sigma > 0.0 else np.zeros_like(residuals)
    return np.clip(1.0 - 0.5 * np.clip(norm, 0.0, 1.0) + rng.normal(0.0, SCORE_NOISE, size=len(residuals)), 0.0, 1.0)


def synth_generate(
    family: "ModelFamily | str",
    n: int,
    inlier_ratio: float,
    noise_sigma: float = 0.0,
    extent: Optional[Aabb2] = None,
    seed: int = 0,
) -> SyntheticDataset:
    """
    生成合成点对。

    径向单应的坐标以主点为中心：未指定 extent 时使用以原点为中心、与默认范围同尺寸的矩形。
    """
    try:
        family = ModelFamily(family)
    except ValueError as exc:
        raise ConfigurationError(f"unknown model family: {family}") from exc
    if not 0.0 < inlier_ratio <= 1.0:
        raise ConfigurationError(f"inlier ratio must be in (0, 1], got {inlier_ratio}")
    if noise_sigma < 0.0:
        raise ConfigurationError(f"noise sigma must be non-negative, got {noise_sigma}")
    if n < family.sample_size:
        raise ConfigurationError(f"need at least {family.sample_size} correspondences for {family.value}, got {n}")
    if extent is None:
        extent = DEFAULT_EXTENT
        if family is ModelFamily.RADIAL_HOMOGRAPHY:
            extent = Aabb2(-500.0, -500.0, 500.0, 500.0)
    if extent.is_degenerate:
        raise ConfigurationError("synthetic extent must have positive width and height")

    rng = np.random.default_rng(seed)
    n_in = int(round(n * inlier_ratio))
    n_out = n - n_in
    lo = np.array([extent.xmin, extent.ymin])
    hi = np.array([extent.xmax, extent.ymax])
    K1 = K2 = None

    if family is ModelFamily.HOMOGRAPHY:
        model = _random_homography(extent.corners(), extent, rng)
        p_in = rng.uniform(lo, hi, size=(n_in, 2))
        q_in = model.map_points(p_in)
        extent_2 = Aabb2.from_points(model.map_points(extent.corners()))
    elif family in (ModelFamily.FUNDAMENTAL, ModelFamily.ESSENTIAL):
        K1 = K2 = default_intrinsics(extent)
        for _ in range(32):
            p_in = rng.uniform(lo, hi, size=(n_in, 2))
            q_in, E, in_front = _two_view_inliers(p_in, K1, rng)
            if np.all(in_front):
                break
        else:
            raise ConfigurationError("could not generate a two-view configuration with all points in front")
        setup = EssentialSetup(normalize_frobenius(E), K1, K2)
        model = setup if family is ModelFamily.ESSENTIAL else setup.fundamental()
        extent_2 = extent.union(Aabb2.from_points(q_in)) if n_in else extent
    else:
        r_max2 = max(extent.xmin ** 2, extent.xmax ** 2) + max(extent.ymin ** 2, extent.ymax ** 2)
        lam1 = rng.uniform(*RADIAL_STRENGTH) / r_max2
        lam2 = rng.uniform(*RADIAL_STRENGTH) / r_max2
        corners_u = undistort_points(extent.corners(), lam1)
        H = _random_homography(corners_u, Aabb2.from_points(corners_u), rng)
        model = RadialHomography(H.H, lam1, lam2)
        p_in = rng.uniform(lo, hi, size=(n_in, 2))
        q_in = distort_points(model.map_points(p_in), lam2)
        border = np.concatenate([np.linspace(extent.corners()[i], extent.corners()[(i + 1) % 4], 64) for i in range(4)])
        extent_2 = Aabb2.from_points(distort_points(model.map_points(border), lam2))
        if n_in:
            extent_2 = extent_2.union(Aabb2.from_points(q_in))

    if noise_sigma > 0.0 and n_in:
        q_in = q_in + rng.normal(0.0, noise_sigma, size=q_in.shape)
    lo2 = np.array([extent_2.xmin, extent_2.ymin])
    hi2 = np.array([extent_2.xmax, extent_2.ymax])
    p_out = rng.uniform(lo, hi, size=(n_out, 2))
    q_out = rng.uniform(lo2, hi2, size=(n_out, 2))

    r_in = model_residuals(model, p_in, q_in) if n_in else np.empty(0)
    scores = np.concatenate([_inlier_scores(r_in, noise_sigma, rng), rng.uniform(0.0, 1.0, size=n_out)])
    p = np.vstack([p_in, p_out])
    q = np.vstack([q_in, q_out])
    mask = np.concatenate([np.ones(n_in, dtype=bool), np.zeros(n_out, dtype=bool)])

    perm = rng.permutation(n)
    data = CorrespondenceSet(p[perm], q[perm], scores[perm])
    logger.debug("Synthesized %s dataset: N=%d inliers=%d sigma=%.3g seed=%d", family.value, n, n_in, noise_sigma, seed)
    return SyntheticDataset(
        data=data,
        model=model,
        family=family,
        inlier_mask=mask[perm],
        extent_1=extent,
        extent_2=extent_2,
        seed=seed,
        K1=K1,
        K2=K2,
    )
