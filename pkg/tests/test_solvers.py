"""
solvers 测试：4 点 / DLT 单应、7 点 / 8 点基础矩阵、本质矩阵。
"""

import numpy as np
import pytest

from src.spransac.core.errors import DegenerateConfigurationError, PreconditionError
from src.spransac.core.residuals import epipolar_residuals, homography_residuals, model_residuals
from src.spransac.core.types import EssentialSetup, Homography, ModelFamily, normalize_frobenius
from src.spransac.services.solvers import (
    MinimalSample,
    ModelContext,
    essential_8pt,
    estimate_minimal,
    estimate_nonminimal,
    f_from_e,
    fundamental_7pt,
    fundamental_8pt,
    homography_4pt,
    homography_dlt,
)

K = np.array([[800.0, 0.0, 500.0], [0.0, 800.0, 400.0], [0.0, 0.0, 1.0]])


def _skew(t):
    return np.array([[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]])


def _two_view(rng, n):
    """返回 (p, q, E)：同一组三维点在两台内参为 K 的相机中的投影。"""
    angle = 0.1
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    kx = _skew(axis)
    R = np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * kx @ kx
    t = np.array([1.0, 0.2, 0.1])
    X = np.column_stack([rng.uniform(-2, 2, n), rng.uniform(-2, 2, n), rng.uniform(5, 9, n)])
    x1 = X @ K.T
    x2 = (X @ R.T + t) @ K.T
    return x1[:, :2] / x1[:, 2:], x2[:, :2] / x2[:, 2:], _skew(t) @ R


def _random_h(rng):
    return np.eye(3) + np.array([[0.1, 0.05, 5.0], [-0.05, 0.1, -3.0], [1e-4, 2e-4, 0.0]]) * rng.uniform(-1, 1, (3, 3))


def _same_up_to_sign(a, b):
    a = normalize_frobenius(a)
    b = normalize_frobenius(b)
    return min(np.max(np.abs(a - b)), np.max(np.abs(a + b)))


class TestMinimalSample:
    def test_distinct_indices(self):
        with pytest.raises(PreconditionError):
            MinimalSample((1, 2, 2, 3))

    def test_size(self):
        assert MinimalSample((0, 1, 2, 3)).size == 4


class TestHomographySolvers:
    def test_identity_from_unit_square(self):
        sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        (H,) = homography_4pt(sq, sq)
        assert _same_up_to_sign(H.H, np.eye(3)) < 1e-9

    def test_recovers_random_homography(self, rng):
        for _ in range(50):
            H = _random_h(rng)
            p = rng.uniform(0, 100, size=(4, 2))
            q = Homography(H).map_points(p)
            sols = homography_4pt(p, q)
            if not sols:
                continue
            assert _same_up_to_sign(sols[0].H, H) <= 1e-7

    def test_collinear_source_is_empty(self):
        p = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [0.0, 5.0]])
        q = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert homography_4pt(p, q) == []

    def test_dlt_noiseless(self, rng):
        H = _random_h(rng)
        p = rng.uniform(0, 100, size=(20, 2))
        q = Homography(H).map_points(p)
        assert _same_up_to_sign(homography_dlt(p, q).H, H) <= 1e-7

    def test_dlt_identity(self, rng):
        p = rng.uniform(0, 100, size=(10, 2))
        assert _same_up_to_sign(homography_dlt(p, p).H, np.eye(3)) < 1e-9

    def test_dlt_coincident_points(self):
        p = np.ones((6, 2))
        with pytest.raises(DegenerateConfigurationError):
            homography_dlt(p, p)

    def test_dlt_needs_four_points(self):
        with pytest.raises(PreconditionError):
            homography_dlt(np.zeros((3, 2)), np.zeros((3, 2)))

    def test_deterministic(self, rng):
        p = rng.uniform(0, 100, size=(4, 2))
        q = rng.uniform(0, 100, size=(4, 2))
        a = homography_4pt(p, q)
        b = homography_4pt(p, q)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert np.array_equal(x.H, y.H)


class TestFundamentalSolvers:
    def test_seven_point_recovers_held_out(self, rng):
        for _ in range(20):
            p, q, _ = _two_view(rng, 107)
            sols = fundamental_7pt(p[:7], q[:7])
            assert 1 <= len(sols) <= 3
            best = min(np.max(epipolar_residuals(F.F, p[7:], q[7:])) for F in sols)
            assert best <= 1e-6

    def test_seven_point_rank_two(self, rng):
        p, q, _ = _two_view(rng, 7)
        for F in fundamental_7pt(p, q):
            assert abs(np.linalg.det(F.F)) <= 1e-8

    def test_seven_point_coincident_is_empty(self):
        p = np.full((7, 2), 3.0)
        assert fundamental_7pt(p, p) == []

    def test_eight_point(self, rng):
        p, q, _ = _two_view(rng, 60)
        F = fundamental_8pt(p[:8], q[:8])
        assert abs(np.linalg.det(F.F)) <= 1e-8
        assert np.max(epipolar_residuals(F.F, p, q)) <= 1e-6

    def test_eight_point_precondition(self):
        with pytest.raises(PreconditionError):
            fundamental_8pt(np.zeros((7, 2)), np.zeros((7, 2)))


class TestEssential:
    def test_identity_intrinsics(self):
        E = _skew(np.array([1.0, 0.0, 0.0]))
        F = f_from_e(EssentialSetup(E, np.eye(3), np.eye(3)))
        np.testing.assert_allclose(F.F, normalize_frobenius(E))

    def test_projection_oracle(self, rng):
        p, q, E = _two_view(rng, 50)
        setup = EssentialSetup(E, K, K)
        assert np.max(model_residuals(setup, p, q)) <= 1e-6
        scaled = EssentialSetup(2.0 * E, K, K)
        np.testing.assert_allclose(model_residuals(scaled, p, q), model_residuals(setup, p, q), atol=1e-12)

    def test_essential_8pt_manifold(self, rng):
        p, q, _ = _two_view(rng, 30)
        setup = essential_8pt(p, q, K, K)
        s = np.linalg.svd(setup.E, compute_uv=False)
        assert s[0] == pytest.approx(s[1], rel=1e-6)
        assert s[2] <= 1e-12
        assert np.max(model_residuals(setup, p, q)) <= 1e-6

    def test_essential_requires_intrinsics(self, rng):
        p, q, _ = _two_view(rng, 8)
        with pytest.raises(PreconditionError):
            essential_8pt(p, q)


class TestDispatch:
    def test_minimal_homography(self, rng, mild_homography):
        p = rng.uniform(0, 100, size=(4, 2))
        models = estimate_minimal(ModelContext(ModelFamily.HOMOGRAPHY), p, mild_homography.map_points(p))
        assert len(models) == 1
        assert np.max(homography_residuals(models[0].H, p, mild_homography.map_points(p))) < 1e-8

    def test_nonminimal_radial_keeps_lambdas(self, rng):
        p = rng.uniform(-100, 100, size=(10, 2))
        ctx = ModelContext(ModelFamily.RADIAL_HOMOGRAPHY, lambda1=-1e-6, lambda2=-2e-6)
        model = estimate_nonminimal(ctx, p, p)
        assert model.lambda1 == -1e-6
        assert model.lambda2 == -2e-6
