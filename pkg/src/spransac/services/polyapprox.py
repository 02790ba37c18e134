"""
多项式逼近与包围工具。

- Chebyshev 节点与 Lagrange 插值误差界
- Bernstein 基、de Casteljau 求值、Bézier 插值
- Hermite 端点数据 -> Bézier 控制点
- 二元 Taylor 多项式与余项界、Hermite 插值误差界

Bézier 曲线位于其控制点的凸包内，控制点 AABB 因而是曲线的保守包围盒，
这是一般映射下单元边界包围（bounding.bound_general）的基础。
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Tuple

import numpy as np

from ..core.errors import NumericalError, PreconditionError
from ..core.types import Aabb2

# 插值次数上限（10 次以内 Bernstein 系统条件数可接受）
MAX_INTERP_NODES = 11
MAX_CONDITION = 1e12


# ---------------------------------------------------------------------------
# Chebyshev 节点
# ---------------------------------------------------------------------------


def chebyshev_nodes(a: float, b: float, k: int) -> np.ndarray:
    """x_l = (a+b)/2 + (b−a)/2 · cos((2l−1)π/(2k))，l = 1..k，严格递减。"""
    if not a < b:
        raise PreconditionError(f"chebyshev_nodes requires a < b, got a={a} b={b}")
    if k < 1:
        raise PreconditionError(f"chebyshev_nodes requires k >= 1, got {k}")
    l = np.arange(1, k + 1)
    return 0.5 * (a + b) + 0.5 * (b - a) * np.cos((2 * l - 1) * np.pi / (2 * k))


# ---------------------------------------------------------------------------
# Bernstein / Bézier
# ---------------------------------------------------------------------------


def bernstein_basis(n: int, t) -> np.ndarray:
    """B_i^n(t) = C(n,i) tⁱ (1−t)^{n−i}，返回形状 (len(t), n+1)。"""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    i = np.arange(n + 1)
    binom = np.array([math.comb(n, int(j)) for j in i], dtype=float)
    return binom * t[:, None] ** i * (1.0 - t[:, None]) ** (n - i)


def bernstein_matrix(params, degree: int) -> np.ndarray:
    """插值系统矩阵：第 r 行为参数 t_r 处的全部 Bernstein 基函数值。"""
    return bernstein_basis(degree, params)


@dataclass(frozen=True, eq=False)
class BezierCurve:
    """Bernstein 基下的多项式曲线，control_points 形状 (n+1, d)。"""

    control_points: np.ndarray

    def __post_init__(self) -> None:
        cp = np.array(self.control_points, dtype=float)
        if cp.ndim == 1:
            cp = cp[:, None]
        if cp.shape[0] < 2:
            raise PreconditionError("a Bezier curve needs degree >= 1")
        if not np.all(np.isfinite(cp)):
            raise NumericalError("Bezier control points must be finite")
        cp.setflags(write=False)
        object.__setattr__(self, "control_points", cp)

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.control_points.shape[1]

    def evaluate(self, t) -> np.ndarray:
        """de Casteljau，t 可为标量或数组；返回形状 (len(t), d)。"""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pts = np.broadcast_to(self.control_points, (len(t),) + self.control_points.shape).copy()
        tt = t[:, None]
        for r in range(self.degree):
            pts = (1.0 - tt[:, :, None]) * pts[:, :-1, :] + tt[:, :, None] * pts[:, 1:, :]
        return pts[:, 0, :]

    def derivative(self) -> "BezierCurve":
        """速端曲线 n·Δb_i；一次曲线的导数返回重复控制点的常值曲线。"""
        diffs = self.degree * np.diff(self.control_points, axis=0)
        if diffs.shape[0] == 1:
            diffs = np.vstack([diffs, diffs])
        return BezierCurve(diffs)

    def control_aabb(self) -> Aabb2:
        if self.dim != 2:
            raise PreconditionError("control_aabb is defined for planar curves")
        return Aabb2.from_points(self.control_points)


def bernstein_eval(curve: BezierCurve, t: float) -> np.ndarray:
    """单点求值（de Casteljau）；t 必须在 [0, 1] 内。"""
    if not 0.0 <= t <= 1.0:
        raise PreconditionError(f"bernstein_eval requires t in [0, 1], got {t}")
    return curve.evaluate(t)[0]


@lru_cache(maxsize=32)
def _interpolation_operator(params: Tuple[float, ...]) -> np.ndarray:
    M = bernstein_matrix(np.array(params), len(params) - 1)
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise NumericalError(f"Bernstein interpolation system is ill-conditioned (cond={cond:.3g})")
    inv = np.linalg.inv(M)
    inv.setflags(write=False)
    return inv


def interpolation_operator(params) -> np.ndarray:
    """
    Bernstein 插值矩阵的逆：control_points = op @ samples。

    对相同参数集缓存，供批量包围计算复用。
    """
    params = tuple(float(t) for t in np.asarray(params, dtype=float).ravel())
    k = len(params)
    if k < 2 or k > MAX_INTERP_NODES:
        raise PreconditionError(f"interpolation needs 2..{MAX_INTERP_NODES} parameters, got {k}")
    if any(not 0.0 <= t <= 1.0 for t in params):
        raise PreconditionError("interpolation parameters must lie in [0, 1]")
    if len(set(params)) != k:
        raise PreconditionError("interpolation parameters must be distinct")
    return _interpolation_operator(params)


def interpolate_bezier(samples, params) -> BezierCurve:
    """k 个样本在参数 t_1..t_k 处插值得到 k−1 次 Bézier 曲线。"""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    op = interpolation_operator(params)
    if samples.shape[0] != op.shape[0]:
        raise PreconditionError("samples and params must have the same length")
    return BezierCurve(op @ samples)


def chebyshev_parameters(k: int) -> np.ndarray:
    """[0, 1] 上的 k 个 Chebyshev 节点，升序。"""
    return chebyshev_nodes(0.0, 1.0, k)[::-1].copy()


# ---------------------------------------------------------------------------
# Hermite -> Bézier
# ---------------------------------------------------------------------------


def _ratio_factorial(n: int, j: int) -> float:
    # n! / (n−j)!
    return float(math.perm(n, j))


def hermite_to_bezier(
    endpoint_values: Sequence,
    endpoint_derivatives: Sequence[Sequence],
    n: int,
) -> BezierCurve:
    """
    由两端点的值与各阶导数构造 n 次 Bézier 曲线。

    endpoint_derivatives = (t=0 处的 [1 阶, 2 阶, ...], t=1 处的 [1 阶, 2 阶, ...])。
    约束控制点由 b^{(j)}(0) = n!/(n−j)! Δʲb₀ 及其在 t=1 处的对称式逐阶求出；
    其余内部控制点在两侧最后一个约束控制点之间线性插值。
    """
    b0 = np.atleast_1d(np.asarray(endpoint_values[0], dtype=float))
    bn = np.atleast_1d(np.asarray(endpoint_values[1], dtype=float))
    d0 = [np.atleast_1d(np.asarray(d, dtype=float)) for d in endpoint_derivatives[0]]
    d1 = [np.atleast_1d(np.asarray(d, dtype=float)) for d in endpoint_derivatives[1]]
    r0, r1 = len(d0), len(d1)
    if n < r0 + r1 + 1:
        raise PreconditionError(
            f"degree {n} cannot satisfy {r0} + {r1} endpoint derivative constraints (need n >= {r0 + r1 + 1})"
        )

    cp = np.full((n + 1, b0.shape[0]), np.nan)
    cp[0] = b0
    cp[n] = bn
    for j in range(1, r0 + 1):
        # Δʲb₀ = Σ_i (−1)^{j−i} C(j,i) b_i
        target = d0[j - 1] / _ratio_factorial(n, j)
        acc = sum(((-1) ** (j - i)) * math.comb(j, i) * cp[i] for i in range(j))
        cp[j] = target - acc
    for j in range(1, r1 + 1):
        # ∇ʲb_n = Σ_i (−1)^i C(j,i) b_{n−i}
        target = d1[j - 1] / _ratio_factorial(n, j)
        acc = sum(((-1) ** i) * math.comb(j, i) * cp[n - i] for i in range(j))
        cp[n - j] = ((-1) ** j) * (target - acc)

    lo, hi = r0, n - r1
    for i in range(lo + 1, hi):
        s = (i - lo) / (hi - lo)
        cp[i] = (1.0 - s) * cp[lo] + s * cp[hi]
    return BezierCurve(cp)


# ---------------------------------------------------------------------------
# 误差界
# ---------------------------------------------------------------------------


def lagrange_error_bound(k: int, a: float, b: float, M: float) -> float:
    """
    k 个 Chebyshev 节点插值的最大误差上界：((b−a)/2)^k · M / (2^{k−1} · k!)。

    M 为 k 阶导数在 [a, b] 上的绝对值上界。
    """
    if k < 1:
        raise PreconditionError(f"lagrange_error_bound requires k >= 1, got {k}")
    if not a < b:
        raise PreconditionError(f"lagrange_error_bound requires a < b, got a={a} b={b}")
    if M < 0.0:
        raise PreconditionError("derivative bound must be non-negative")
    return ((b - a) / 2.0) ** k * M / (2.0 ** (k - 1) * math.factorial(k))


def hermite_error_bound(k: int, a: float, b: float, M: float) -> float:
    """k 阶两点 Hermite 插值误差上界：M · ((b−a)/2)^{2k+2} / (2k+2)!。"""
    if k < 0 or not a < b or M < 0.0:
        raise PreconditionError(f"invalid hermite_error_bound arguments k={k} a={a} b={b} M={M}")
    return M * ((b - a) / 2.0) ** (2 * k + 2) / math.factorial(2 * k + 2)


@dataclass(frozen=True)
class TaylorPolynomial2D:
    """二元 Taylor 多项式 T_{k,x0}；coefficients[(i, j)] = ∂^{i+j}f / ∂xⁱ∂yʲ (x0) / (i! j!)。"""

    x0: Tuple[float, float]
    order: int
    coefficients: Tuple[Tuple[Tuple[int, int], float], ...]

    def evaluate(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        hx = pts[:, 0] - self.x0[0]
        hy = pts[:, 1] - self.x0[1]
        out = np.zeros(len(pts))
        for (i, j), c in self.coefficients:
            out += c * hx ** i * hy ** j
        return out

    def remainder_bound(self, M: float, h) -> float:
        """余项上界 M / (k+1)! · ‖h‖₁^{k+1}。"""
        h1 = float(np.sum(np.abs(np.asarray(h, dtype=float))))
        return M / math.factorial(self.order + 1) * h1 ** (self.order + 1)


def taylor_approx_2d(partial: Callable[[int, int], float], x0, k: int) -> TaylorPolynomial2D:
    """partial(i, j) 返回 f 在 x0 处的 ∂^{i+j}f / ∂xⁱ∂yʲ；k 不超过 4。"""
    if not 0 <= k <= 4:
        raise PreconditionError(f"taylor_approx_2d supports orders 0..4, got {k}")
    coeffs = []
    for total in range(k + 1):
        for i in range(total, -1, -1):
            j = total - i
            c = float(partial(i, j)) / (math.factorial(i) * math.factorial(j))
            coeffs.append(((i, j), c))
    return TaylorPolynomial2D((float(x0[0]), float(x0[1])), k, tuple(coeffs))
