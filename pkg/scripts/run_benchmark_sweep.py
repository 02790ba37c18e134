#!/usr/bin/env python3
"""
完整基准扫描：
- 模型族 h / f / rh，策略 grid 与 grid-sprt（基线 trad 自动加入）
- 每轴单元数 2..8，固定迭代次数 10^0..10^4
- 输出：
  <output-dir>/YYMMDD_HHMMSS_bench.csv
  <output-dir>/YYMMDD_HHMMSS_<kind>.svg（每种图一张）
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime
from pathlib import Path

_project_root = Path(__file__).resolve().parents[1]
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from src.spransac.config import load_config  # noqa: E402
from src.spransac.services.bench import BenchSweep, run_bench, summarize, write_bench_csv  # noqa: E402
from src.spransac.services.plotting import PLOT_KINDS, emit_svg  # noqa: E402

DEFAULT_OUTPUT_DIR = Path("results")
ITERATIONS = [1, 10, 100, 1000, 10000]


def run_sweep(output_dir: Path, families, seeds: int, n_points: int, ratio: float, quick: bool) -> Path:
    cfg = load_config()
    sweep = BenchSweep(
        families=families,
        strategies=["grid", "grid-sprt"],
        cells_per_axis=[2, 4] if quick else list(range(2, 9)),
        fixed_iterations=ITERATIONS[:3] if quick else ITERATIONS,
        seeds=list(range(seeds)),
        n_points=n_points,
        inlier_ratio=ratio,
        jobs=cfg["BENCH_JOBS"],
    )
    print(f"[*] Sweep: families={families} seeds={seeds} N={n_points} ratio={ratio} jobs={sweep.jobs}")
    df = run_bench(sweep)

    stamp = datetime.now().strftime("%y%m%d_%H%M%S")
    output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_bench_csv(df, output_dir / f"{stamp}_bench.csv")
    print(f"[+] Wrote {len(df)} rows to {csv_path}")

    print("\n[*] Summary:")
    print(summarize(df).to_string(index=False))
    failed = int((df["error"] != "").sum())
    if failed:
        print(f"[-] {failed} sweep points failed")

    print("\n[*] Generating plots...")
    for kind in PLOT_KINDS:
        svg_path = output_dir / f"{stamp}_{kind}.svg"
        emit_svg(df, kind, svg_path)
        print(f"[+] {svg_path}")
    return csv_path


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--output-dir", type=Path, default=DEFAULT_OUTPUT_DIR)
    parser.add_argument("--families", nargs="+", default=["h", "f", "rh"])
    parser.add_argument("--seeds", type=int, default=3, help="number of random datasets per configuration")
    parser.add_argument("--n", type=int, default=2000, help="correspondences per dataset")
    parser.add_argument("--ratio", type=float, default=0.1, help="inlier ratio")
    parser.add_argument("--quick", action="store_true", help="small sweep for smoke testing")
    args = parser.parse_args()

    run_sweep(args.output_dir, args.families, args.seeds, args.n, args.ratio, args.quick)


if __name__ == "__main__":
    main()
