"""
服务层包。

提供以下服务模块：
- partition: 联合点对空间的均匀网格划分
- solvers: 最小 / 非最小模型求解器
- polyapprox: Chebyshev / Bernstein / Hermite / Taylor 逼近与误差界
- bounding: 单元映射的保守包围与剔除
- verify: 传统 / 划分 / SPRT / 划分+SPRT 验证
- sampling: PROSAC 采样与终止条件
- engine: LO-RANSAC 主循环
- synth / matches_io / bench / plotting: 合成数据、文件读写、基准扫描与绘图
"""

from .partition import (
    GridSpec,
    JointGrid,
    build_grid,
    cell_of,
    cell_rects,
    corrs_in_cell_pair,
    default_grid_spec,
    mask_to_pairs,
    upper_bound_count,
)

from .solvers import (
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

from .polyapprox import (
    BezierCurve,
    TaylorPolynomial2D,
    bernstein_eval,
    chebyshev_nodes,
    hermite_error_bound,
    hermite_to_bezier,
    interpolate_bezier,
    lagrange_error_bound,
    taylor_approx_2d,
)

from .bounding import (
    AngleInterval,
    CellSelection,
    bound_general,
    bound_homography_cell,
    cull_cells,
    cull_cells_epipolar,
    epipolar_angle_interval,
    invertible_containment,
)

from .verify import (
    EvaluationOrder,
    Scoring,
    SprtDecision,
    SprtParams,
    Strategy,
    VerifyConfig,
    VerifyOutcome,
    VerifyStats,
    count_inliers,
    early_reject,
    prefilter,
    sprt_verify,
    verify,
)

from .sampling import (
    ProsacSampler,
    prosac_sample,
    termination_iters,
)

from .engine import (
    RansacConfig,
    RansacEngine,
    RansacResult,
    local_optimize,
    ransac,
)

from .synth import SyntheticDataset, synth_generate

from .matches_io import (
    MatchesFile,
    model_from_dict,
    model_to_dict,
    parse_matches,
    write_matches,
)

from .bench import (
    BENCH_COLUMNS,
    BenchRow,
    BenchSweep,
    run_bench,
    write_bench_csv,
)

from .plotting import PLOT_KINDS, build_figure, emit_svg

__all__ = [
    # partition
    "GridSpec",
    "JointGrid",
    "build_grid",
    "cell_of",
    "cell_rects",
    "corrs_in_cell_pair",
    "default_grid_spec",
    "mask_to_pairs",
    "upper_bound_count",
    # solvers
    "MinimalSample",
    "ModelContext",
    "essential_8pt",
    "estimate_minimal",
    "estimate_nonminimal",
    "f_from_e",
    "fundamental_7pt",
    "fundamental_8pt",
    "homography_4pt",
    "homography_dlt",
    # polyapprox
    "BezierCurve",
    "TaylorPolynomial2D",
    "bernstein_eval",
    "chebyshev_nodes",
    "hermite_error_bound",
    "hermite_to_bezier",
    "interpolate_bezier",
    "lagrange_error_bound",
    "taylor_approx_2d",
    # bounding
    "AngleInterval",
    "CellSelection",
    "bound_general",
    "bound_homography_cell",
    "cull_cells",
    "cull_cells_epipolar",
    "epipolar_angle_interval",
    "invertible_containment",
    # verify
    "EvaluationOrder",
    "Scoring",
    "SprtDecision",
    "SprtParams",
    "Strategy",
    "VerifyConfig",
    "VerifyOutcome",
    "VerifyStats",
    "count_inliers",
    "early_reject",
    "prefilter",
    "sprt_verify",
    "verify",
    # sampling
    "ProsacSampler",
    "prosac_sample",
    "termination_iters",
    # engine
    "RansacConfig",
    "RansacEngine",
    "RansacResult",
    "local_optimize",
    "ransac",
    # synth / matches_io / bench / plotting
    "SyntheticDataset",
    "synth_generate",
    "MatchesFile",
    "model_from_dict",
    "model_to_dict",
    "parse_matches",
    "write_matches",
    "BENCH_COLUMNS",
    "BenchRow",
    "BenchSweep",
    "run_bench",
    "write_bench_csv",
    "PLOT_KINDS",
    "build_figure",
    "emit_svg",
]
