"""
命令行入口。

运行方式：
1. python -m src.spransac.main <command> ...   （推荐，作为模块运行）
2. python src/spransac/main.py <command> ...   （直接运行）
"""

import sys
from pathlib import Path

# 确保项目根目录在 sys.path 中，以支持直接运行
_project_root = Path(__file__).resolve().parents[2]
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from src.spransac.cli import main


if __name__ == "__main__":
    sys.exit(main())
