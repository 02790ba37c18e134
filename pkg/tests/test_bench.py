"""
bench 测试：扫描展开、行计数、计数器关系、确定性与 CSV 格式。
"""

import numpy as np
import pandas as pd
import pytest
from joblib import parallel_backend

from src.spransac.core.errors import ConfigurationError, DataError
from src.spransac.services import bench
from src.spransac.services.bench import (
    BENCH_COLUMNS,
    TIMING_COLUMNS,
    BenchSweep,
    read_bench_csv,
    run_bench,
    summarize,
    sweep_points,
    write_bench_csv,
)


def _small_sweep(**kwargs) -> BenchSweep:
    params = dict(
        families=["h"],
        strategies=["grid", "grid-sprt"],
        cells_per_axis=[2, 3, 4],
        fixed_iterations=[15],
        seeds=[0],
        n_points=300,
        inlier_ratio=0.3,
        noise_sigma=0.5,
        warmup=False,
    )
    params.update(kwargs)
    return BenchSweep(**params)


def _non_timing(df: pd.DataFrame) -> pd.DataFrame:
    return df.drop(columns=list(TIMING_COLUMNS)).reset_index(drop=True)


class TestSweepPoints:
    def test_baseline_first(self):
        points = sweep_points(_small_sweep())
        assert len(points) == 7
        assert (points[0].strategy, points[0].cells) == ("trad", 0)
        assert [p.index for p in points] == list(range(7))

    def test_non_grid_strategies_ignore_cells(self):
        points = sweep_points(_small_sweep(strategies=["sprt", "trad"], seeds=[0, 1]))
        assert [(p.strategy, p.cells, p.seed) for p in points] == [
            ("trad", 0, 0),
            ("sprt", 0, 0),
            ("trad", 0, 1),
            ("sprt", 0, 1),
        ]

    @pytest.mark.parametrize(
        "kwargs",
        [{"families": ["x"]}, {"strategies": ["fast"]}, {"cells_per_axis": [0]}, {"seeds": []}, {"fixed_iterations": [-1]}],
    )
    def test_invalid_sweep(self, kwargs):
        with pytest.raises(ConfigurationError):
            _small_sweep(**kwargs)


class TestRunBench:
    def test_rows_and_columns(self):
        df = run_bench(_small_sweep())
        assert list(df.columns) == list(BENCH_COLUMNS)
        assert len(df) == 7
        assert (df["error"] == "").all()
        assert (df["models_verified"] > 0).all()

    def test_partition_counters_bounded(self):
        df = run_bench(_small_sweep(strategies=["grid"]))
        grid_rows = df[df["strategy"] == "grid"]
        assert (grid_rows["evaluated_points"] <= grid_rows["N"] * grid_rows["models_verified"]).all()
        trad = df[df["strategy"] == "trad"].iloc[0]
        assert trad["evaluated_points"] == trad["N"] * trad["models_verified"]

    def test_exact_mode_same_inliers(self):
        df = run_bench(_small_sweep(strategies=["grid"], eps_r=1.0))
        assert df["inliers_found"].nunique() == 1

    def test_baseline_relative_time_is_one(self):
        df = run_bench(_small_sweep(strategies=["grid"], cells_per_axis=[2]))
        trad = df[df["strategy"] == "trad"]
        assert trad["rel_total"].to_numpy() == pytest.approx(1.0)
        assert np.isfinite(df["rel_total"]).all()

    def test_deterministic_non_timing_columns(self):
        sweep = _small_sweep(families=["h", "f"], strategies=["grid", "sprt"], cells_per_axis=[2])
        a = run_bench(sweep)
        b = run_bench(sweep)
        pd.testing.assert_frame_equal(_non_timing(a), _non_timing(b))

    def test_parallel_matches_sequential(self):
        sweep = _small_sweep(strategies=["grid"], cells_per_axis=[2, 3])
        sequential = run_bench(sweep)
        with parallel_backend("threading"):
            parallel = run_bench(_small_sweep(strategies=["grid"], cells_per_axis=[2, 3], jobs=2))
        pd.testing.assert_frame_equal(_non_timing(sequential), _non_timing(parallel))

    def test_failures_recorded(self, monkeypatch):
        def broken(*args, **kwargs):
            raise RuntimeError("synthetic failure")

        monkeypatch.setattr(bench, "_dataset", broken)
        df = run_bench(_small_sweep(strategies=["grid"], cells_per_axis=[2]))
        assert len(df) == 2
        assert df["error"].str.contains("synthetic failure").all()
        assert df["rel_total"].isna().all()

    def test_summary_groups(self):
        df = run_bench(_small_sweep(strategies=["grid"], cells_per_axis=[2, 3]))
        summary = summarize(df)
        assert len(summary) == 3
        assert {"t_r_ms", "t_v_ms", "total_ms"} <= set(summary.columns)


class TestBenchCsv:
    def test_header_and_line_endings(self, tmp_path):
        df = run_bench(_small_sweep(strategies=["grid"], cells_per_axis=[2]))
        path = write_bench_csv(df, tmp_path / "out" / "bench.csv")
        raw = path.read_bytes()
        assert b"\r\n" not in raw
        assert raw.decode("utf-8").splitlines()[0] == ",".join(BENCH_COLUMNS)

    def test_read_back(self, tmp_path):
        df = run_bench(_small_sweep(strategies=["grid"], cells_per_axis=[2]))
        back = read_bench_csv(write_bench_csv(df, tmp_path / "bench.csv"))
        assert list(back.columns) == list(BENCH_COLUMNS)
        assert back["evaluated_points"].tolist() == df["evaluated_points"].tolist()
        assert (back["error"] == "").all()

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "partial.csv"
        path.write_text("model_family,strategy\nh,grid\n", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            read_bench_csv(path)

    def test_zero_byte_file_reads_as_empty_table(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_bytes(b"")
        back = read_bench_csv(path)
        assert list(back.columns) == list(BENCH_COLUMNS)
        assert len(back) == 0

    def test_header_only_file_reads_as_empty_table(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text(",".join(BENCH_COLUMNS) + "\n", encoding="utf-8")
        back = read_bench_csv(path)
        assert list(back.columns) == list(BENCH_COLUMNS)
        assert len(back) == 0

    def test_missing_file_is_data_error(self, tmp_path):
        with pytest.raises(DataError):
            read_bench_csv(tmp_path / "absent.csv")
