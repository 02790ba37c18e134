from .timing import Stopwatch

__all__ = ["Stopwatch"]
