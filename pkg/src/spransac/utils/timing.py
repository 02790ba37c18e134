"""
计时工具。

Stopwatch 用 time.perf_counter 累加多段耗时，用于区分剔除时间 t_r、验证时间 t_v 与总耗时。
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from typing import Iterator


class Stopwatch:
    """单调时钟秒表，可多次进入累加。"""

    __slots__ = ("elapsed", "laps")

    def __init__(self) -> None:
        self.elapsed = 0.0
        self.laps = 0

    @contextmanager
    def measure(self) -> Iterator["Stopwatch"]:
        start = time.perf_counter()
        try:
            yield self
        finally:
            self.elapsed += time.perf_counter() - start
            self.laps += 1

    @property
    def elapsed_ms(self) -> float:
        return self.elapsed * 1000.0

    def reset(self) -> None:
        self.elapsed = 0.0
        self.laps = 0
