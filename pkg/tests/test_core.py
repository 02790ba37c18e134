"""
core 测试：点对、矩形、模型类型与残差。
"""

import math

import numpy as np
import pytest

from src.spransac.core.errors import DataError
from src.spransac.core.residuals import (
    epipolar_residuals,
    homography_residuals,
    model_residuals,
    radial_residuals,
    residual_epipolar,
    residual_homography,
    residual_radial,
    sampson_residuals,
)
from src.spransac.core.types import (
    Aabb2,
    Correspondence,
    CorrespondenceSet,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    RadialHomography,
    Score,
    distort_points,
    division_lift,
    undistort_points,
)

RECTIFIED_F = FundamentalMatrix(np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]))


class TestCorrespondence:
    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            Correspondence((0.0, math.nan), (1.0, 1.0))

    def test_rejects_score_out_of_range(self):
        with pytest.raises(DataError):
            Correspondence((0.0, 0.0), (1.0, 1.0), score=1.5)

    def test_set_round_trips_items(self):
        items = [Correspondence((1.0, 2.0), (3.0, 4.0), 0.9), Correspondence((5.0, 6.0), (7.0, 8.0), 0.1)]
        cs = CorrespondenceSet.from_correspondences(items)
        assert len(cs) == 2
        assert cs[0] == items[0]
        assert cs.to_list() == items

    def test_ranking_is_stable_descending(self):
        cs = CorrespondenceSet(np.zeros((4, 2)), np.zeros((4, 2)), [0.5, 0.9, 0.5, 0.1])
        assert cs.ranking().tolist() == [1, 0, 2, 3]

    def test_ranking_without_scores_is_identity(self):
        cs = CorrespondenceSet(np.zeros((3, 2)), np.zeros((3, 2)))
        assert cs.ranking().tolist() == [0, 1, 2]

    def test_arrays_are_read_only(self):
        cs = CorrespondenceSet(np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(ValueError):
            cs.p[0, 0] = 1.0


class TestAabb2:
    def test_union_and_contains(self):
        a = Aabb2(0.0, 0.0, 1.0, 1.0)
        b = Aabb2(2.0, -1.0, 3.0, 0.5)
        u = a.union(b)
        assert u.as_tuple() == (0.0, -1.0, 3.0, 1.0)
        assert u.contains((2.5, 0.0))
        assert not a.intersects(b)

    def test_empty_box(self):
        e = Aabb2.empty()
        assert e.is_empty
        assert e.union(Aabb2(0.0, 0.0, 1.0, 1.0)).as_tuple() == (0.0, 0.0, 1.0, 1.0)
        assert not e.intersects(Aabb2(0.0, 0.0, 1.0, 1.0))

    def test_inflate(self):
        box = Aabb2(0.0, 0.0, 1.0, 2.0).inflate(0.5)
        assert box.as_tuple() == (-0.5, -0.5, 1.5, 2.5)

    def test_from_points(self):
        box = Aabb2.from_points([[1.0, 5.0], [-2.0, 3.0]])
        assert box.as_tuple() == (-2.0, 3.0, 1.0, 5.0)


class TestHomographyResidual:
    def test_identity_unit_offset(self):
        assert residual_homography(Homography(np.eye(3)), Correspondence((5.0, 5.0), (5.0, 6.0))) == pytest.approx(1.0)

    def test_exact_scale_map(self):
        H = Homography(np.diag([2.0, 2.0, 1.0]))
        assert residual_homography(H, Correspondence((3.0, 4.0), (6.0, 8.0))) == pytest.approx(0.0, abs=1e-12)

    def test_projective_substitution(self):
        H = Homography(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.01, 0.0, 1.0]]))
        assert residual_homography(H, Correspondence((10.0, 10.0), (9.0909, 9.0909))) <= 1e-4

    def test_point_at_infinity_is_inf(self):
        H = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        assert homography_residuals(H, [[0.0, 3.0]], [[1.0, 1.0]])[0] == math.inf

    def test_zero_on_mapped_points(self, mild_homography, rng):
        p = rng.uniform(0, 100, size=(50, 2))
        q = mild_homography.map_points(p)
        assert np.max(homography_residuals(mild_homography.H, p, q)) < 1e-9


class TestEpipolarResidual:
    def test_on_line(self):
        assert residual_epipolar(RECTIFIED_F, Correspondence((3.0, 4.0), (9.0, 4.0))) == pytest.approx(0.0)

    def test_vertical_offset(self):
        assert residual_epipolar(RECTIFIED_F, Correspondence((3.0, 4.0), (9.0, 7.0))) == pytest.approx(3.0)

    def test_matches_line_distance_oracle(self, rng):
        F = rng.normal(size=(3, 3))
        p = rng.uniform(-50, 50, size=(1000, 2))
        q = rng.uniform(-50, 50, size=(1000, 2))
        got = epipolar_residuals(F, p, q)
        for i in range(0, 1000, 97):
            a, b, c = F @ np.array([p[i, 0], p[i, 1], 1.0])
            expected = abs(a * q[i, 0] + b * q[i, 1] + c) / math.sqrt(a * a + b * b)
            assert got[i] == pytest.approx(expected, rel=1e-10)

    def test_scale_invariant(self, rng):
        F = rng.normal(size=(3, 3))
        p = rng.uniform(-50, 50, size=(100, 2))
        q = rng.uniform(-50, 50, size=(100, 2))
        np.testing.assert_allclose(epipolar_residuals(F, p, q), epipolar_residuals(-7.5 * F, p, q), rtol=1e-10)

    def test_degenerate_line_is_inf(self):
        F = np.zeros((3, 3))
        F[2, 2] = 1.0
        assert epipolar_residuals(F, [[1.0, 1.0]], [[0.0, 0.0]])[0] == math.inf

    def test_sampson_zero_on_line(self):
        assert sampson_residuals(RECTIFIED_F.F, [[3.0, 4.0]], [[9.0, 4.0]])[0] == pytest.approx(0.0)


class TestDivisionModel:
    def test_lift(self):
        np.testing.assert_allclose(division_lift([[1.0, 2.0]], 0.1)[0], [1.0, 2.0, 1.5])

    def test_distort_undistort_round_trip(self, rng):
        lam = -0.3 / 500.0 ** 2
        y = rng.uniform(-400, 400, size=(200, 2))
        np.testing.assert_allclose(undistort_points(distort_points(y, lam), lam), y, atol=1e-8)

    def test_undistort_outside_domain_is_inf(self):
        out = undistort_points([[10.0, 0.0]], -0.02)
        assert np.all(np.isinf(out))

    def test_radial_reduces_to_homography(self, mild_homography, rng):
        p = rng.uniform(0, 100, size=(30, 2))
        q = rng.uniform(0, 100, size=(30, 2))
        np.testing.assert_array_equal(
            radial_residuals(mild_homography.H, 0.0, 0.0, p, q),
            homography_residuals(mild_homography.H, p, q),
        )

    def test_radial_single_point(self):
        M = RadialHomography(np.eye(3), 0.0, 0.0)
        assert residual_radial(M, Correspondence((1.0, 1.0), (1.0, 2.0))) == pytest.approx(1.0)

    def test_noiseless_synthetic_radial(self, rng):
        lam1, lam2 = -0.2 / 500.0 ** 2, -0.1 / 500.0 ** 2
        M = RadialHomography(np.array([[1.0, 0.05, 4.0], [-0.02, 1.0, -3.0], [1e-5, 0.0, 1.0]]), lam1, lam2)
        p = rng.uniform(-300, 300, size=(100, 2))
        q = distort_points(M.map_points(p), lam2)
        assert np.max(model_residuals(M, p, q)) <= 1e-8


class TestModels:
    def test_essential_requires_upper_triangular_k(self):
        K_bad = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(DataError):
            EssentialSetup(np.eye(3), K_bad, np.eye(3))

    def test_essential_with_identity_k_is_f(self):
        E = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        F = EssentialSetup(E, np.eye(3), np.eye(3)).fundamental()
        np.testing.assert_allclose(F.F, E / np.linalg.norm(E))

    def test_model_residuals_dispatch_essential(self):
        E = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
        setup = EssentialSetup(E, np.eye(3), np.eye(3))
        r = model_residuals(setup, [[3.0, 4.0]], [[9.0, 7.0]])
        assert r[0] == pytest.approx(3.0)

    def test_radial_well_defined(self):
        M = RadialHomography(np.eye(3), -0.5, 0.0)
        assert M.is_well_defined(1.0)
        assert not M.is_well_defined(2.0)


class TestScore:
    def test_ties_keep_incumbent(self):
        a = Score(inlier_count=5, loss=-5.0, evaluated_points=10)
        b = Score(inlier_count=5, loss=-5.0, evaluated_points=8)
        assert not b.is_better_than(a)
        assert a.is_better_than(None)

    def test_lower_loss_wins(self):
        assert Score(6, -6.0, 10).is_better_than(Score(5, -5.0, 10))
        assert Score(0, 0.0, 0).is_better_than(Score.worst())
