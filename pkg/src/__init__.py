"""
spransac Python 源码根目录。

当前仅用于标记 src 为可导入包，实际逻辑在 spransac 子包中。
"""
