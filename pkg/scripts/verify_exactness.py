#!/usr/bin/env python3
"""
精确性校验：在合成数据上比较划分验证与全量验证给出的分数。

对每个模型族生成数据集，从随机最小样本求出候选模型，
分别以 trad / grid / grid-sprt（SPRT 阈值设为无穷大）验证并比较内点数与损失。
eps_r = 1 时二者必须完全一致；任何差异都会被列出，脚本以非零状态退出。
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

_project_root = Path(__file__).resolve().parents[1]
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from src.spransac.core.errors import NumericalError  # noqa: E402
from src.spransac.services.engine import RansacConfig, RansacEngine  # noqa: E402
from src.spransac.services.solvers import estimate_minimal  # noqa: E402
from src.spransac.services.synth import synth_generate  # noqa: E402
from src.spransac.services.verify import SprtParams, Strategy, verify  # noqa: E402

STRATEGIES = (Strategy.PARTITION, Strategy.PARTITION_SPRT)


def check_family(family: str, n: int, ratio: float, models: int, cells: int, seed: int) -> List[dict]:
    ds = synth_generate(family, n, ratio, 0.5, seed=seed)
    config = RansacConfig(
        model_family=family,
        strategy=Strategy.PARTITION,
        cells_per_axis_1=cells,
        eps_r=1.0,
        seed=seed,
        K1=ds.K1,
        K2=ds.K2,
        lambda1=getattr(ds.model, "lambda1", 0.0),
        lambda2=getattr(ds.model, "lambda2", 0.0),
    )
    engine = RansacEngine(config)
    grid = engine.prepare_grid(ds.data)
    ctx = config.model_context()
    vcfg = config.verify_config()
    sprt = SprtParams(threshold_A=float("inf"))
    rng = np.random.default_rng(seed)

    rows = []
    checked = 0
    while checked < models:
        idx = np.sort(rng.choice(n, size=config.sample_size, replace=False))
        try:
            candidates = estimate_minimal(ctx, ds.data.p[idx], ds.data.q[idx])
        except NumericalError:
            continue
        for model in candidates:
            reference = verify(model, ds.data, None, Strategy.TRADITIONAL, None, vcfg).score
            for strategy in STRATEGIES:
                score = verify(model, ds.data, grid, strategy, None, vcfg, sprt=sprt).score
                rows.append(
                    {
                        "family": family,
                        "strategy": strategy.value,
                        "model": checked,
                        "trad_inliers": reference.inlier_count,
                        "inliers": score.inlier_count,
                        "match": score.inlier_count == reference.inlier_count and score.loss == reference.loss,
                    }
                )
            checked += 1
    return rows


def main() -> int:
    parser = argparse.ArgumentParser(description="Check that partitioned verification scores equal full scans")
    parser.add_argument("--families", nargs="+", default=["h", "f", "e", "rh"])
    parser.add_argument("--n", type=int, default=2000)
    parser.add_argument("--ratio", type=float, default=0.2)
    parser.add_argument("--models", type=int, default=200, help="candidate models per family")
    parser.add_argument("--cells", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rows = []
    for family in args.families:
        print(f"[*] Checking {args.models} models for family {family}...")
        rows.extend(check_family(family, args.n, args.ratio, args.models, args.cells, args.seed))
    df = pd.DataFrame(rows)

    print("\n[*] Agreement per family/strategy:")
    print(df.groupby(["family", "strategy"])["match"].agg(["sum", "count"]).to_string())
    mismatches = df[~df["match"]]
    if len(mismatches):
        print(f"\n[-] {len(mismatches)} mismatching scores:")
        print(mismatches.head(20).to_string(index=False))
        return 1
    print("\n[+] All partitioned scores equal the full scan.")
    return 0


if __name__ == "__main__":
    sys.exit(main())
