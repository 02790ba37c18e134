"""
verify 测试：计数、早期拒绝、SPRT 以及划分策略与传统策略的逐元素一致性。
"""

import math

import numpy as np
import pytest

from src.spransac.core.errors import ConfigurationError
from src.spransac.core.residuals import model_residuals
from src.spransac.core.types import Correspondence, CorrespondenceSet, Homography, ModelFamily, Score
from src.spransac.services.engine import RansacConfig, RansacEngine
from src.spransac.services.partition import GridSpec, build_grid
from src.spransac.services.solvers import estimate_minimal
from src.spransac.services.synth import synth_generate
from src.spransac.services.verify import (
    EvaluationOrder,
    RejectReason,
    Scoring,
    SprtDecision,
    SprtParams,
    Strategy,
    VerifyConfig,
    count_inliers,
    early_reject,
    msac_loss_floor,
    prefilter,
    sprt_verify,
    verify,
)

IDENTITY = Homography(np.eye(3))


def _engine_for(ds, strategy="grid", cells=4) -> RansacEngine:
    extra = {}
    if ds.family is ModelFamily.RADIAL_HOMOGRAPHY:
        extra = {"lambda1": ds.model.lambda1, "lambda2": ds.model.lambda2}
    if ds.family is ModelFamily.ESSENTIAL:
        extra = {"K1": ds.K1, "K2": ds.K2}
    config = RansacConfig(
        model_family=ds.family,
        strategy=strategy,
        cells_per_axis_1=cells,
        extent_1=ds.extent_1,
        extent_2=None if ds.family is ModelFamily.RADIAL_HOMOGRAPHY else ds.extent_2,
        eps_r=1.0,
        **extra,
    )
    return RansacEngine(config)


def _candidate_models(ds, rng, count=30):
    """由随机最小样本（一半取自真值内点）求得的模型，外加真值模型。"""
    engine = _engine_for(ds)
    ctx = engine.config.model_context()
    m = ds.family.sample_size
    inliers = np.flatnonzero(ds.inlier_mask)
    models = [ds.model]
    for k in range(count):
        pool = inliers if k % 2 == 0 else np.arange(len(ds.data))
        idx = rng.choice(pool, size=m, replace=False)
        models.extend(estimate_minimal(ctx, ds.data.p[idx], ds.data.q[idx]))
    return models


class TestEarlyReject:
    def test_strictly_fewer_candidates(self):
        assert early_reject(99, 100, 1.0)

    def test_equal_is_kept(self):
        assert not early_reject(100, 100, 1.0)

    def test_factor_applies(self):
        assert early_reject(110, 100, 1.2)


class TestCountInliers:
    def test_empty(self):
        score = count_inliers(IDENTITY, [], 1.0)
        assert (score.inlier_count, score.loss, score.evaluated_points) == (0, 0.0, 0)

    def test_identity_example(self):
        corrs = [Correspondence((0.0, 0.0), (0.0, 0.0)), Correspondence((0.0, 0.0), (5.0, 0.0))]
        score = count_inliers(IDENTITY, corrs, 1.0)
        assert score.inlier_count == 1
        assert score.loss == -1.0
        assert score.evaluated_points == 2

    def test_msac_truncated_loss(self):
        corrs = [Correspondence((0.0, 0.0), (0.5, 0.0)), Correspondence((0.0, 0.0), (5.0, 0.0))]
        score = count_inliers(IDENTITY, corrs, 1.0, scoring="msac")
        assert score.inlier_count == 1
        assert score.loss == pytest.approx(0.25 + 1.0)

    def test_matches_brute_force(self, make_random_set, square_extent, mild_homography):
        data = make_random_set(500, square_extent)
        eps = 15.0
        score = count_inliers(mild_homography, data, eps)
        brute = 0
        for c in data:
            mapped = mild_homography.map_points(np.array(c.p))[0]
            if math.hypot(mapped[0] - c.q[0], mapped[1] - c.q[1]) < eps:
                brute += 1
        assert score.inlier_count == brute

    def test_non_positive_threshold(self):
        with pytest.raises(ConfigurationError):
            count_inliers(IDENTITY, [], 0.0)


class TestSprtParams:
    def test_step_factors(self):
        params = SprtParams(epsilon_good=0.5, delta_bad=0.05)
        assert params.outlier_step == pytest.approx(1.9)
        assert params.inlier_step == pytest.approx(0.1)

    def test_wald_threshold(self):
        assert SprtParams(alpha=0.05, beta=0.05).threshold_A == pytest.approx(19.0)

    @pytest.mark.parametrize("kwargs", [{"epsilon_good": 0.01, "delta_bad": 0.1}, {"alpha": 0.0}, {"threshold_A": 0.5}])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            SprtParams(**kwargs)

    def test_adapted_updates_epsilon(self):
        adapted = SprtParams().adapted(0.3)
        assert adapted.epsilon_good == pytest.approx(0.3)
        assert adapted.delta_bad == 0.01
        assert adapted.threshold_A == pytest.approx(19.0)


class TestSprtVerify:
    def _corrs(self, offsets):
        p = np.zeros((len(offsets), 2))
        q = np.column_stack([np.asarray(offsets, dtype=float), np.zeros(len(offsets))])
        return CorrespondenceSet(p, q)

    def test_immediate_reject_on_outlier(self):
        params = SprtParams(threshold_A=1.0 + 1e-9)
        decision, score = sprt_verify(IDENTITY, self._corrs([5.0, 0.0, 0.0]), params, 1.0)
        assert decision is SprtDecision.REJECT
        assert score.evaluated_points == 1

    def test_all_inliers_accepted(self):
        decision, score = sprt_verify(IDENTITY, self._corrs([0.0] * 200), SprtParams(), 1.0)
        assert decision is SprtDecision.ACCEPT
        assert score.inlier_count == 200
        assert score.evaluated_points == 200

    def test_outliers_rejected_early(self):
        decision, score = sprt_verify(IDENTITY, self._corrs([5.0] * 500), SprtParams(), 1.0)
        assert decision is SprtDecision.REJECT
        assert score.evaluated_points < 500

    def test_infinite_threshold_matches_traditional(self, h_dataset, rng):
        data = h_dataset.data
        cfg = VerifyConfig(threshold=2.0)
        order = EvaluationOrder(len(data), 5)
        params = SprtParams(threshold_A=math.inf)
        for model in _candidate_models(h_dataset, rng, 10):
            trad = verify(model, data, None, Strategy.TRADITIONAL, None, cfg)
            seq = verify(model, data, None, Strategy.SPRT, None, cfg, params, order)
            assert not seq.rejected
            assert np.array_equal(seq.inlier_ids, trad.inlier_ids)
            assert seq.score.inlier_count == trad.score.inlier_count


class TestEvaluationOrder:
    def test_rank_inverts_permutation(self):
        order = EvaluationOrder(50, 3)
        assert sorted(order.perm.tolist()) == list(range(50))
        assert np.array_equal(order.rank[order.perm], np.arange(50))

    def test_seeded(self):
        assert np.array_equal(EvaluationOrder(30, 9).perm, EvaluationOrder(30, 9).perm)


class TestPrefilter:
    def test_huge_eps_keeps_everything(self, make_random_set, square_extent, mild_homography):
        data = make_random_set(300, square_extent)
        grid = build_grid(data, GridSpec(4, 4, square_extent, square_extent))
        pre = prefilter(mild_homography, grid, 1e7)
        assert pre.upper_bound == len(data)
        assert sorted(pre.ids.tolist()) == list(range(len(data)))

    def test_exact_identity_inliers(self, rng, square_extent):
        p = rng.uniform(0.0, 100.0, size=(200, 2))
        data = CorrespondenceSet(p, p.copy())
        grid = build_grid(data, GridSpec(4, 4, square_extent, square_extent))
        pre = prefilter(IDENTITY, grid, 1.0)
        assert pre.upper_bound == len(data)
        assert count_inliers(IDENTITY, pre.candidates, 1.0).inlier_count == len(data)

    def test_inliers_among_candidates(self, h_dataset, rng):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        data = h_dataset.data
        for model in _candidate_models(h_dataset, rng, 20):
            pre = prefilter(model, grid, 2.0)
            inliers = np.flatnonzero(model_residuals(model, data.p, data.q) < 2.0)
            assert set(inliers.tolist()) <= set(pre.ids.tolist())


class TestStrategyEquality:
    @pytest.mark.parametrize("fixture", ["h_dataset", "f_dataset", "rh_dataset"])
    def test_partition_matches_traditional(self, fixture, request, rng):
        ds = request.getfixturevalue(fixture)
        grid = _engine_for(ds).prepare_grid(ds.data)
        cfg = VerifyConfig(threshold=2.0, eps_r=1.0)
        for model in _candidate_models(ds, rng):
            trad = verify(model, ds.data, None, Strategy.TRADITIONAL, None, cfg)
            part = verify(model, ds.data, grid, Strategy.PARTITION, None, cfg)
            assert np.array_equal(part.inlier_ids, trad.inlier_ids)
            assert part.score.inlier_count == trad.score.inlier_count
            assert part.stats.evaluated_points + part.stats.culled_points == len(ds.data)

    def test_essential_partition_matches_traditional(self, rng):
        ds = synth_generate("e", 300, 0.3, 0.5, seed=21)
        grid = _engine_for(ds).prepare_grid(ds.data)
        cfg = VerifyConfig(threshold=2.0)
        for model in _candidate_models(ds, rng, 10):
            trad = verify(model, ds.data, None, "trad", None, cfg)
            part = verify(model, ds.data, grid, "grid", None, cfg)
            assert np.array_equal(part.inlier_ids, trad.inlier_ids)

    def test_msac_loss_bitwise_equal(self, h_dataset, rng):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        cfg = VerifyConfig(threshold=2.0, scoring=Scoring.MSAC)
        for model in _candidate_models(h_dataset, rng, 10):
            trad = verify(model, h_dataset.data, None, Strategy.TRADITIONAL, None, cfg)
            part = verify(model, h_dataset.data, grid, Strategy.PARTITION, None, cfg)
            assert part.score.loss == trad.score.loss

    def test_partition_sprt_never_evaluates_more_than_sprt(self):
        ds = synth_generate("h", 2000, 0.1, 0.5, seed=17)
        engine = _engine_for(ds)
        grid = engine.prepare_grid(ds.data)
        ctx = engine.config.model_context()
        cfg = VerifyConfig(threshold=2.0)
        order = EvaluationOrder(len(ds.data), 3)
        params = SprtParams()
        rng = np.random.default_rng(29)
        totals = {"sprt": 0, "grid-sprt": 0}
        rejected = 0
        for _ in range(100):
            idx = rng.choice(len(ds.data), size=4, replace=False)
            for model in estimate_minimal(ctx, ds.data.p[idx], ds.data.q[idx]):
                alone = verify(model, ds.data, grid, Strategy.SPRT, None, cfg, params, order)
                combined = verify(model, ds.data, grid, Strategy.PARTITION_SPRT, None, cfg, params, order)
                assert combined.rejected == alone.rejected
                assert combined.stats.evaluated_points <= alone.stats.evaluated_points
                # 同一扫描前缀中，只有未被剔除的点对计算残差
                scanned = order.perm[: alone.stats.evaluated_points]
                candidates = prefilter(model, grid, 2.0).ids
                assert combined.stats.evaluated_points == int(np.count_nonzero(np.isin(scanned, candidates)))
                if not alone.rejected:
                    assert np.array_equal(combined.inlier_ids, alone.inlier_ids)
                    assert combined.score.inlier_count == alone.score.inlier_count
                totals["sprt"] += alone.stats.evaluated_points
                totals["grid-sprt"] += combined.stats.evaluated_points
                rejected += int(alone.rejected)
        assert rejected > 0
        assert totals["grid-sprt"] < totals["sprt"]

    def test_partition_sprt_accepts_ground_truth_like_sprt(self, h_dataset):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        cfg = VerifyConfig(threshold=2.0, scoring=Scoring.MSAC)
        order = EvaluationOrder(len(h_dataset.data), 1)
        params = SprtParams(epsilon_good=0.3, threshold_A=1e6)
        alone = verify(h_dataset.model, h_dataset.data, grid, Strategy.SPRT, None, cfg, params, order)
        combined = verify(h_dataset.model, h_dataset.data, grid, Strategy.PARTITION_SPRT, None, cfg, params, order)
        assert not alone.rejected and not combined.rejected
        assert combined.score.loss == alone.score.loss
        assert combined.score.evaluated_points == combined.stats.evaluated_points < len(h_dataset.data)

    @pytest.mark.parametrize("fixture", ["h_dataset", "f_dataset"])
    def test_finer_grid_evaluates_fewer_points(self, fixture, request, rng):
        ds = request.getfixturevalue(fixture)
        models = _candidate_models(ds, rng, 20)
        cfg = VerifyConfig(threshold=2.0)
        totals = []
        for cells in (1, 2, 4, 8):
            grid = _engine_for(ds, cells=cells).prepare_grid(ds.data)
            totals.append(
                sum(verify(m, ds.data, grid, Strategy.PARTITION, None, cfg).stats.evaluated_points for m in models)
            )
        assert totals[0] <= len(models) * len(ds.data)
        assert totals == sorted(totals, reverse=True)
        assert totals[-1] < 0.9 * totals[0]


class TestVerifyPartition:
    def test_low_bound_rejected_without_evaluation(self, h_dataset):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        cfg = VerifyConfig(threshold=2.0, eps_r=1.0)
        best = Score(inlier_count=len(h_dataset.data) + 1, loss=-(len(h_dataset.data) + 1.0), evaluated_points=0)
        out = verify(h_dataset.model, h_dataset.data, grid, Strategy.PARTITION, best, cfg)
        assert out.rejected
        assert out.stats.evaluated_points == 0
        assert out.stats.early_rejections == 1

    def test_new_best_never_rejected(self, h_dataset):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        cfg = VerifyConfig(threshold=2.0, eps_r=1.0)
        best = Score(inlier_count=h_dataset.inlier_count // 2, loss=-1.0, evaluated_points=0)
        out = verify(h_dataset.model, h_dataset.data, grid, Strategy.PARTITION, best, cfg)
        assert not out.rejected

    def test_msac_early_rejection_keeps_lower_loss_model(self, h_dataset):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        cfg = VerifyConfig(threshold=2.0, scoring=Scoring.MSAC, eps_r=1.0)
        model = h_dataset.model
        upper = prefilter(model, grid, 2.0).upper_bound
        trad = verify(model, h_dataset.data, None, Strategy.TRADITIONAL, None, cfg)
        # 内点更多但损失更高的当前最优：计数规则会拒绝，MSAC 下该模型仍是新的最优
        best = Score(inlier_count=upper + 1, loss=trad.score.loss + 1.0, evaluated_points=0)
        assert trad.score.is_better_than(best)
        for strategy in (Strategy.PARTITION, Strategy.PARTITION_SPRT):
            out = verify(model, h_dataset.data, grid, strategy, best, cfg, SprtParams(epsilon_good=0.3, threshold_A=1e6))
            assert not out.rejected
            assert out.stats.early_rejections == 0
            assert out.score.loss == trad.score.loss
            assert np.array_equal(out.inlier_ids, trad.inlier_ids)

    def test_msac_early_rejection_uses_loss_floor(self, h_dataset):
        grid = _engine_for(h_dataset).prepare_grid(h_dataset.data)
        cfg = VerifyConfig(threshold=2.0, scoring=Scoring.MSAC, eps_r=1.0)
        model = h_dataset.model
        n = len(h_dataset.data)
        upper = prefilter(model, grid, 2.0).upper_bound
        floor = msac_loss_floor(n, upper, 2.0)
        assert floor == pytest.approx((n - upper) * 4.0)
        best = Score(inlier_count=upper + 1, loss=floor, evaluated_points=0)
        trad = verify(model, h_dataset.data, None, Strategy.TRADITIONAL, None, cfg)
        assert not trad.score.is_better_than(best)
        out = verify(model, h_dataset.data, grid, Strategy.PARTITION, best, cfg)
        assert out.rejected
        assert out.reason is RejectReason.EARLY
        assert out.stats.evaluated_points == 0

    def test_culls_on_low_inlier_ratio(self):
        ds = synth_generate("h", 1000, 0.1, 0.5, seed=4)
        grid = _engine_for(ds).prepare_grid(ds.data)
        out = verify(ds.model, ds.data, grid, Strategy.PARTITION, None, VerifyConfig(threshold=2.0))
        assert out.stats.evaluated_points < len(ds.data)
        assert out.stats.culled_points > 0

    def test_grid_required(self, h_dataset):
        with pytest.raises(ConfigurationError):
            verify(h_dataset.model, h_dataset.data, None, Strategy.PARTITION, None, VerifyConfig(threshold=2.0))

    def test_eps_r_below_one(self):
        with pytest.raises(ConfigurationError):
            VerifyConfig(threshold=2.0, eps_r=0.9)

    @pytest.mark.parametrize("alias,expected", [("traditional", Strategy.TRADITIONAL), ("partition_sprt", Strategy.PARTITION_SPRT), ("GRID", Strategy.PARTITION)])
    def test_strategy_aliases(self, alias, expected):
        assert Strategy.parse(alias) is expected
