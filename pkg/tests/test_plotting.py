"""
plotting 测试：序列构造、CDF、空图警告与 SVG 输出的确定性。
"""

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import pytest

from src.spransac.core.errors import ConfigurationError
from src.spransac.services.bench import BENCH_COLUMNS, write_bench_csv
from src.spransac.services.plotting import build_figure, emit_svg, empirical_cdf


def _row(strategy, cells, iters, total_ms, rel_total, evaluated=100, family="h", seed=0):
    row = {c: 0 for c in BENCH_COLUMNS}
    row.update(
        model_family=family,
        strategy=strategy,
        cells_per_axis=cells,
        fixed_iterations=iters,
        N=1000,
        inlier_ratio=0.1,
        evaluated_points=evaluated,
        models_verified=iters,
        total_ms=total_ms,
        rel_total=rel_total,
        seed=seed,
        error="",
    )
    return row


def _frame(rows) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=list(BENCH_COLUMNS))


@pytest.fixture
def two_point_frame() -> pd.DataFrame:
    return _frame(
        [
            _row("trad", 0, 10, 2.0, 1.0, evaluated=10000),
            _row("grid", 4, 10, 1.0, 0.5, evaluated=4000),
            _row("trad", 0, 100, 20.0, 1.0, evaluated=100000),
            _row("grid", 4, 100, 8.0, 0.4, evaluated=30000),
        ]
    )


def _data_lines(fig):
    ax = fig.axes[0]
    return [line for line in ax.get_lines() if not line.get_label().startswith("_")]


class TestEmpiricalCdf:
    def test_three_values(self):
        x, y = empirical_cdf([3.0, 1.0, 2.0])
        assert x.tolist() == [1.0, 2.0, 3.0]
        assert y == pytest.approx([1 / 3, 2 / 3, 1.0])

    def test_empty(self):
        x, y = empirical_cdf([])
        assert x.size == 0 and y.size == 0


class TestBuildFigure:
    def test_single_series_two_points(self, two_point_frame):
        fig = build_figure(two_point_frame, "relative_time_vs_iters")
        try:
            lines = _data_lines(fig)
            assert len(lines) == 1
            assert lines[0].get_xydata().tolist() == [[10.0, 0.5], [100.0, 0.4]]
            assert lines[0].get_label() == "grid [256]"
            assert fig.axes[0].get_xscale() == "log"
        finally:
            plt.close(fig)

    def test_points_verified_has_baseline_series(self, two_point_frame):
        fig = build_figure(two_point_frame, "points_verified")
        try:
            labels = sorted(line.get_label() for line in _data_lines(fig))
            assert labels == ["grid [256]", "trad"]
        finally:
            plt.close(fig)

    def test_cdf_reaches_one(self):
        df = _frame([_row("trad", 0, 10, t, 1.0, seed=s) for s, t in enumerate([1.0, 2.0, 3.0])])
        fig = build_figure(df, "cdf_times")
        try:
            (line,) = _data_lines(fig)
            assert line.get_drawstyle() == "steps-post"
            assert line.get_xdata().tolist() == [1.0, 2.0, 3.0]
            assert line.get_ydata()[-1] == pytest.approx(1.0)
        finally:
            plt.close(fig)

    def test_axis_ranges_contain_data(self, two_point_frame):
        fig = build_figure(two_point_frame, "points_verified")
        try:
            ax = fig.axes[0]
            xmin, xmax = ax.get_xlim()
            ymin, ymax = ax.get_ylim()
            for line in _data_lines(fig):
                xy = line.get_xydata()
                assert np.all((xy[:, 0] >= xmin) & (xy[:, 0] <= xmax))
                assert np.all((xy[:, 1] >= ymin) & (xy[:, 1] <= ymax))
        finally:
            plt.close(fig)

    def test_empty_frame_warns(self):
        fig = build_figure(_frame([]), "cdf_times")
        try:
            texts = [t.get_text() for t in fig.axes[0].texts]
            assert "warning: no data" in texts
            assert _data_lines(fig) == []
        finally:
            plt.close(fig)

    def test_failed_rows_ignored(self):
        row = _row("grid", 4, 10, 1.0, 0.5)
        row["error"] = "RuntimeError: boom"
        fig = build_figure(_frame([row]), "relative_time_vs_iters")
        try:
            assert "warning: no data" in [t.get_text() for t in fig.axes[0].texts]
        finally:
            plt.close(fig)

    def test_unknown_kind(self, two_point_frame):
        with pytest.raises(ConfigurationError):
            build_figure(two_point_frame, "pie")


class TestEmitSvg:
    def test_deterministic_document(self, two_point_frame, tmp_path):
        csv = write_bench_csv(two_point_frame, tmp_path / "bench.csv")
        first = emit_svg(csv, "relative_time_vs_iters", tmp_path / "a.svg")
        second = emit_svg(csv, "relative_time_vs_iters", tmp_path / "b.svg")
        assert first == second
        assert "<svg" in first
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_empty_chart_document(self, tmp_path):
        svg = emit_svg(_frame([]), "points_verified")
        assert "warning: no data" in svg

    def test_zero_byte_csv_renders_warning(self, tmp_path):
        csv = tmp_path / "empty.csv"
        csv.write_bytes(b"")
        svg = emit_svg(csv, "relative_time_vs_iters", tmp_path / "empty.svg")
        assert "warning: no data" in svg
        assert (tmp_path / "empty.svg").exists()
