"""
命令行入口。

子命令：
    synth     生成合成匹配文件（附真值模型 JSON）
    estimate  对匹配文件运行鲁棒估计
    bench     运行基准扫描并写出 CSV
    plot      由基准 CSV 生成 SVG 图

退出码：0 成功，1 用法/配置错误，2 数据错误，3 数值失败。
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .config import build_ransac_config, load_config
from .core.errors import EXIT_OK, EXIT_USAGE, SpransacError, exit_code_for
from .core.types import Aabb2, ModelFamily
from .services.bench import BENCH_COLUMNS, BenchSweep, run_bench, summarize, write_bench_csv
from .services.engine import RansacEngine
from .services.matches_io import (
    model_to_dict,
    parse_matches,
    read_model_json,
    write_matches,
    write_model_json,
)
from .services.plotting import PLOT_KINDS, emit_svg
from .services.synth import synth_generate
from .services.verify import Strategy

logger = logging.getLogger(__name__)

FAMILY_CHOICES = [f.value for f in ModelFamily]
STRATEGY_CHOICES = [s.value for s in Strategy]


class _Parser(argparse.ArgumentParser):
    """用法错误以退出码 1 结束。"""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------


def _truth_path(out: Path) -> Path:
    return out.with_suffix(".truth.json")


def cmd_synth(args: argparse.Namespace) -> int:
    extent = None
    if args.extent:
        w, h = args.extent
        # 径向模型坐标以主点为中心
        extent = Aabb2(-w / 2, -h / 2, w / 2, h / 2) if args.model == "rh" else Aabb2(0.0, 0.0, w, h)
    print(f"[*] Generating {args.n} correspondences (family={args.model}, ratio={args.ratio}, sigma={args.sigma})")
    ds = synth_generate(args.model, args.n, args.ratio, args.sigma, extent=extent, seed=args.seed)
    out = Path(args.out)
    write_matches(out, ds.data, ds.extent_1, ds.extent_2)
    truth = args.truth or _truth_path(out)
    write_model_json(truth, ds.model, {"inliers": ds.inlier_count, "seed": args.seed})
    print(f"[+] Wrote {out} ({ds.inlier_count} inliers) and ground truth {truth}")
    return EXIT_OK


def _model_extras(args: argparse.Namespace, family: ModelFamily) -> Dict[str, Any]:
    extra: Dict[str, Any] = {}
    truth: Dict[str, Any] = read_model_json(args.truth) if args.truth else {}
    if family is ModelFamily.ESSENTIAL:
        extra["K1"] = truth.get("K1")
        extra["K2"] = truth.get("K2")
    if family is ModelFamily.RADIAL_HOMOGRAPHY:
        extra["lambda1"] = args.lambda1 if args.lambda1 is not None else float(truth.get("lambda1", 0.0))
        extra["lambda2"] = args.lambda2 if args.lambda2 is not None else float(truth.get("lambda2", 0.0))
    return extra


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg = load_config(
        {
            "MODEL_FAMILY": args.model,
            "STRATEGY": args.strategy,
            "CELLS_PER_AXIS": args.cells,
            "CELLS_PER_AXIS_2": args.cells2,
            "THRESHOLD": args.threshold,
            "EPS_R": args.eps_r,
            "FIXED_ITERATIONS": args.iters,
            "CONFIDENCE": args.confidence,
            "MAX_ITERATIONS": args.max_iters,
            "SEED": args.seed,
            "SCORING": args.scoring,
            "LO_ENABLED": False if args.no_lo else None,
        }
    )
    family = ModelFamily(cfg["MODEL_FAMILY"])
    matches = parse_matches(args.matches)
    # 文件中的图像 2 范围处于畸变坐标系，径向模型的网格建在去畸变坐标上
    radial = family is ModelFamily.RADIAL_HOMOGRAPHY
    config = build_ransac_config(
        cfg,
        extent_1=matches.declared_extent_1,
        extent_2=None if radial else matches.declared_extent_2,
        **_model_extras(args, family),
    )
    result = RansacEngine(config).run(matches.data)

    summary: Dict[str, Any] = {
        "family": family.value,
        "strategy": config.strategy.value,
        "N": len(matches.data),
        **result.to_dict(),
        "model": model_to_dict(result.best_model) if result.found else None,
    }
    if args.inliers_out:
        path = Path(args.inliers_out)
        path.write_text("".join(f"{i}\n" for i in result.inlier_ids.tolist()), encoding="utf-8")
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK

    if not result.found:
        print(f"[-] No model found after {result.iterations_run} iterations")
        return EXIT_OK
    stats = result.stats
    print(f"[+] {family.value} model: {result.inlier_ids.size}/{len(matches.data)} inliers, {result.iterations_run} iterations")
    print(f"[*] Evaluated points: {stats.evaluated_points}, models verified: {stats.models_verified}, "
          f"early rejections: {stats.early_rejections}, SPRT rejections: {stats.sprt_rejections}")
    print(f"[*] t_r={stats.cell_rejection_time * 1000:.3f} ms  t_v={stats.verification_time * 1000:.3f} ms  "
          f"total={result.wall_time * 1000:.3f} ms")
    matrix = summary["model"].get("H", summary["model"].get("F", summary["model"].get("E")))
    print(np.array2string(np.asarray(matrix), precision=6, suppress_small=True))
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = load_config({"BENCH_JOBS": args.jobs})
    sweep = BenchSweep(
        families=args.families,
        strategies=args.strategies,
        cells_per_axis=args.cells,
        fixed_iterations=args.iters,
        seeds=args.seeds,
        n_points=args.n,
        inlier_ratio=args.ratio,
        noise_sigma=args.sigma,
        threshold=args.threshold,
        eps_r=args.eps_r,
        lo_enabled=not args.no_lo,
        warmup=not args.no_warmup,
        jobs=cfg["BENCH_JOBS"],
    )
    print(f"[*] Running benchmark sweep ({len(args.families)} families, {len(args.strategies)} strategies)")
    df = run_bench(sweep)
    out = write_bench_csv(df, args.out)
    print(summarize(df).to_string(index=False))
    failed = int((df["error"] != "").sum())
    if failed:
        print(f"[-] {failed} sweep points failed (see the error column)")
    print(f"[+] Wrote {len(df)} rows to {out}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    emit_svg(args.csv, args.kind, args.out)
    print(f"[+] Wrote {args.kind} chart to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# 参数解析
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spransac", description="Robust model estimation with partitioned verification")
    parser.add_argument("-v", "--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic matches file")
    p.add_argument("--model", choices=FAMILY_CHOICES, default="h")
    p.add_argument("--n", type=int, default=1000, help="number of correspondences")
    p.add_argument("--ratio", type=float, default=0.3, help="inlier ratio in (0, 1]")
    p.add_argument("--sigma", type=float, default=0.0, help="inlier noise sigma (pixels)")
    p.add_argument("--extent", type=float, nargs=2, metavar=("W", "H"), help="image-1 extent")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="matches file to write")
    p.add_argument("--truth", help="ground-truth JSON path (default: <out>.truth.json)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("estimate", help="estimate a model from a matches file")
    p.add_argument("matches", help="matches file (x1 y1 x2 y2 [score] per line)")
    p.add_argument("--model", choices=FAMILY_CHOICES)
    p.add_argument("--strategy", choices=STRATEGY_CHOICES)
    p.add_argument("--cells", type=int, help="cells per axis (image 1)")
    p.add_argument("--cells2", type=int, help="cells per axis (image 2, default: same as image 1)")
    p.add_argument("--threshold", type=float, help="inlier threshold (pixels)")
    p.add_argument("--eps-r", dest="eps_r", type=float, help="early rejection factor (>= 1)")
    p.add_argument("--iters", type=int, help="fixed iteration count (disables confidence termination)")
    p.add_argument("--confidence", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--scoring", choices=["ransac", "msac"])
    p.add_argument("--seed", type=int)
    p.add_argument("--no-lo", dest="no_lo", action="store_true", help="disable local optimization")
    p.add_argument("--truth", help="JSON with intrinsics (e) or distortion parameters (rh)")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--inliers-out", dest="inliers_out", help="write inlier ids, one per line")
    p.add_argument("--json", action="store_true", help="print a JSON summary")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser(
        "bench",
        help="run a benchmark sweep and write a CSV",
        epilog="CSV columns (fixed order): " + ", ".join(BENCH_COLUMNS),
    )
    p.add_argument("--families", nargs="+", choices=FAMILY_CHOICES, default=["h"])
    p.add_argument("--strategies", nargs="+", choices=STRATEGY_CHOICES, default=["grid"])
    p.add_argument("--cells", nargs="+", type=int, default=[2, 3, 4])
    p.add_argument("--iters", nargs="+", type=int, default=[100, 1000])
    p.add_argument("--seeds", nargs="+", type=int, default=[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--ratio", type=float, default=0.1)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--threshold", type=float, default=2.0)
    p.add_argument("--eps-r", dest="eps_r", type=float, default=1.0)
    p.add_argument("--jobs", type=int, help="parallel sweep points (joblib)")
    p.add_argument("--no-lo", dest="no_lo", action="store_true")
    p.add_argument("--no-warmup", dest="no_warmup", action="store_true")
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render a benchmark CSV as SVG")
    p.add_argument("csv", help="benchmark CSV")
    p.add_argument("--kind", choices=list(PLOT_KINDS), default="relative_time_vs_iters")
    p.add_argument("--out", required=True, help="SVG path")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = "DEBUG" if args.verbose else load_config()["LOG_LEVEL"]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpransacError as exc:
        print(f"[-] {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
