"""
异常定义。

所有库内异常均继承自 SpransacError，CLI 根据异常类型映射退出码：
- ConfigurationError -> 1
- DataError -> 2
- NumericalError -> 3
"""

from __future__ import annotations

from typing import Optional


# ---------------------------------------------------------------------------
# 异常
# ---------------------------------------------------------------------------


class SpransacError(Exception):
    """库通用异常。"""


class ConfigurationError(SpransacError):
    """配置或参数非法（如未知策略、缺少网格、阈值非正）。"""


class DataError(SpransacError):
    """输入数据非法（坐标非有限、分数越界、匹配文件格式错误）。"""

    def __init__(self, message: str, line_no: Optional[int] = None) -> None:
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NumericalError(SpransacError):
    """数值失败（病态插值系统、秩亏的设计矩阵）。"""


class DegenerateConfigurationError(NumericalError):
    """退化样本：共线、重合点、零空间维数过高。"""


class PreconditionError(SpransacError, ValueError):
    """调用方违反操作前置条件。"""


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def exit_code_for(exc: BaseException) -> int:
    """根据异常类型返回 CLI 退出码。"""
    if isinstance(exc, DataError):
        return EXIT_DATA
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_USAGE
