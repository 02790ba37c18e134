"""
配置模块。

优先级：显式覆盖（CLI 参数） > 环境变量 > 默认值。
"""

import os
from typing import Any, Dict, Mapping, Optional

import numpy as np

from .core.errors import ConfigurationError
from .core.types import ModelFamily
from .services.engine import RansacConfig
from .services.verify import Scoring, SprtParams, Strategy


# ---------------------------------------------------------------------------
# 默认配置
# ---------------------------------------------------------------------------

DEFAULT_CONFIG: Dict[str, Any] = {
    # 模型与阈值
    "MODEL_FAMILY": "h",
    "THRESHOLD": 2.0,
    "CONFIDENCE": 0.99,
    "MAX_ITERATIONS": 5000,
    # 0 表示按置信度终止
    "FIXED_ITERATIONS": 0,
    # 验证策略与网格
    "STRATEGY": "trad",
    "CELLS_PER_AXIS": 4,
    # 0 表示与图像 1 相同
    "CELLS_PER_AXIS_2": 0,
    # 0 表示按模型族取默认值（h: 1.6，其余 1.2）
    "EPS_R": 0.0,
    "SEED": 0,
    "SCORING": "ransac",
    # 局部优化
    "LO_ENABLED": True,
    "LO_ROUNDS": 4,
    # 一般映射包围的每边 Chebyshev 节点数
    "BOUND_NODES": 4,
    # SPRT
    "SPRT_EPSILON": 0.1,
    "SPRT_DELTA": 0.01,
    "SPRT_ALPHA": 0.05,
    "SPRT_BETA": 0.05,
    # 可选行为
    "PARALLEL_SOLUTIONS": False,
    "INVERSE_REFINEMENT": False,
    "SAMPSON": False,
    "PROSAC_GROWTH_MAX": 200000,
    # 基准扫描并行度
    "BENCH_JOBS": 1,
    "LOG_LEVEL": "INFO",
}


# ---------------------------------------------------------------------------
# 环境变量映射
# ---------------------------------------------------------------------------

ENV_MAPPING: Dict[str, str] = {f"SPRANSAC_{key}": key for key in DEFAULT_CONFIG}


# ---------------------------------------------------------------------------
# 配置加载
# ---------------------------------------------------------------------------


def _coerce(key: str, value: Any) -> Any:
    default_val = DEFAULT_CONFIG[key]
    try:
        if isinstance(default_val, bool):
            if isinstance(value, str):
                return value.lower() in ("true", "1", "yes")
            return bool(value)
        if isinstance(default_val, float):
            return float(value)
        if isinstance(default_val, int):
            return int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid value for {key}: {value!r}") from exc
    return str(value)


def load_config(overrides: Optional[Mapping[str, Any]] = None, environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    """
    合并默认值、环境变量与显式覆盖。

    覆盖项中值为 None 的键被忽略；未知键抛 ConfigurationError。
    """
    environ = os.environ if environ is None else environ
    config: Dict[str, Any] = dict(DEFAULT_CONFIG)

    for env_key, config_key in ENV_MAPPING.items():
        env_val = environ.get(env_key)
        if env_val is not None:
            config[config_key] = _coerce(config_key, env_val)

    for key, value in (overrides or {}).items():
        if key not in DEFAULT_CONFIG:
            raise ConfigurationError(f"unknown configuration key: {key}")
        if value is not None:
            config[key] = _coerce(key, value)
    return config


def build_ransac_config(cfg: Mapping[str, Any], **extra: Any) -> RansacConfig:
    """由配置字典构建 RansacConfig；extra 传入不走配置层的字段（范围、内参、畸变参数）。"""
    try:
        family = ModelFamily(cfg["MODEL_FAMILY"])
        strategy = Strategy.parse(cfg["STRATEGY"])
        scoring = Scoring.parse(cfg["SCORING"])
        sprt = SprtParams(
            epsilon_good=cfg["SPRT_EPSILON"],
            delta_bad=cfg["SPRT_DELTA"],
            alpha=cfg["SPRT_ALPHA"],
            beta=cfg["SPRT_BETA"],
        )
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    for key in ("K1", "K2"):
        if extra.get(key) is not None:
            extra[key] = np.asarray(extra[key], dtype=float)
    return RansacConfig(
        model_family=family,
        threshold=cfg["THRESHOLD"],
        confidence=cfg["CONFIDENCE"],
        max_iterations=cfg["MAX_ITERATIONS"],
        fixed_iterations=cfg["FIXED_ITERATIONS"] or None,
        strategy=strategy,
        cells_per_axis_1=cfg["CELLS_PER_AXIS"],
        cells_per_axis_2=cfg["CELLS_PER_AXIS_2"] or None,
        eps_r=cfg["EPS_R"] or None,
        sprt=sprt,
        seed=cfg["SEED"],
        scoring=scoring,
        lo_enabled=cfg["LO_ENABLED"],
        lo_rounds=cfg["LO_ROUNDS"],
        bound_nodes=cfg["BOUND_NODES"],
        parallel_solutions=cfg["PARALLEL_SOLUTIONS"],
        inverse_refinement=cfg["INVERSE_REFINEMENT"],
        sampson=cfg["SAMPSON"],
        prosac_growth_max=cfg["PROSAC_GROWTH_MAX"],
        **extra,
    )
