"""
spransac：基于联合点对空间划分的鲁棒几何模型估计。
"""

import logging
from typing import Any, Mapping, Optional

logger = logging.getLogger(__name__)


def create_estimator(overrides: Optional[Mapping[str, Any]] = None, **extra: Any):
    """
    估计器工厂。

    初始化流程：
    1. 加载配置（默认值 <- 环境变量 <- overrides）
    2. 构建并校验 RansacConfig
    3. 返回 RansacEngine
    """
    # 延迟导入以避免循环依赖
    from .config import build_ransac_config, load_config
    from .services.engine import RansacEngine

    cfg = load_config(overrides)
    engine = RansacEngine(build_ransac_config(cfg, **extra))
    logger.info(
        "Estimator initialized: family=%s strategy=%s",
        engine.config.model_family.value,
        engine.config.strategy.value,
    )
    return engine


__all__ = ["create_estimator"]
