"""
匹配文件读写与真值模型 JSON 附属文件。

匹配文件格式（UTF-8，'\\n' 换行）：
    # 注释行
    extent1 <w> <h>                     可选，等价于 [0, w] × [0, h]
    extent2 <xmin> <ymin> <xmax> <ymax> 可选，显式范围
    x1 y1 x2 y2 [score]                 每行一条点对，空白分隔

数值以 %.17g 写出，保证读回后逐位相同。
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..core.errors import DataError
from ..core.types import (
    Aabb2,
    Correspondence,
    CorrespondenceSet,
    EssentialSetup,
    FundamentalMatrix,
    Homography,
    Model,
    RadialHomography,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_EXTENT_KEYS = ("extent1", "extent2")


@dataclass(frozen=True)
class MatchesFile:
    data: CorrespondenceSet
    extent_1: Aabb2
    extent_2: Aabb2
    # 文件头中显式给出的范围（None 表示由点集包围盒推得）
    declared_extent_1: Optional[Aabb2] = None
    declared_extent_2: Optional[Aabb2] = None

    @property
    def correspondences(self) -> List[Correspondence]:
        return self.data.to_list()

    def __len__(self) -> int:
        return len(self.data)


def _fmt(v: float) -> str:
    return "%.17g" % v


def _parse_extent(fields: List[str], line_no: int) -> Aabb2:
    try:
        values = [float(f) for f in fields]
    except ValueError as exc:
        raise DataError(f"invalid extent values {fields!r}", line_no) from exc
    if len(values) == 2:
        box = Aabb2(0.0, 0.0, values[0], values[1])
    elif len(values) == 4:
        box = Aabb2(*values)
    else:
        raise DataError(f"extent needs 2 or 4 values, got {len(values)}", line_no)
    if not all(math.isfinite(v) for v in values) or box.is_degenerate:
        raise DataError(f"degenerate extent {values}", line_no)
    return box


def parse_matches_text(text: str) -> MatchesFile:
    """解析匹配文件内容；保持行序，格式错误时抛 DataError（带行号）。"""
    rows: List[List[float]] = []
    extents: Dict[str, Aabb2] = {}
    with_score: Optional[bool] = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].split()
            if body and body[0] in _EXTENT_KEYS:
                extents[body[0]] = _parse_extent(body[1:], line_no)
            continue
        fields = line.split()
        if fields[0] in _EXTENT_KEYS:
            extents[fields[0]] = _parse_extent(fields[1:], line_no)
            continue
        if len(fields) not in (4, 5):
            raise DataError(f"expected 4 or 5 numeric fields, got {len(fields)}", line_no)
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise DataError(f"non-numeric field in {line!r}", line_no) from exc
        if not all(math.isfinite(v) for v in values):
            raise DataError("non-finite value", line_no)
        has_score = len(values) == 5
        if with_score is None:
            with_score = has_score
        elif with_score != has_score:
            raise DataError("score column must be present on every line or on none", line_no)
        if has_score and not 0.0 <= values[4] <= 1.0:
            raise DataError(f"score must be in [0, 1], got {values[4]}", line_no)
        rows.append(values)

    arr = np.array(rows, dtype=float).reshape(-1, 5 if with_score else 4)
    scores = arr[:, 4] if with_score else None
    data = CorrespondenceSet(arr[:, 0:2], arr[:, 2:4], scores)
    declared_1 = extents.get("extent1")
    declared_2 = extents.get("extent2")
    extent_1 = declared_1 if declared_1 is not None else Aabb2.from_points(data.p)
    extent_2 = declared_2 if declared_2 is not None else Aabb2.from_points(data.q)
    return MatchesFile(data, extent_1, extent_2, declared_1, declared_2)


def parse_matches(path: PathLike) -> MatchesFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read matches file {path}: {exc}") from exc
    parsed = parse_matches_text(text)
    logger.info("Loaded %d correspondences from %s", len(parsed), path)
    return parsed


def _extent_line(key: str, box: Aabb2) -> str:
    if box.xmin == 0.0 and box.ymin == 0.0:
        return f"{key} {_fmt(box.xmax)} {_fmt(box.ymax)}"
    return f"{key} " + " ".join(_fmt(v) for v in box.as_tuple())


def format_matches(data: CorrespondenceSet, extent_1: Optional[Aabb2] = None, extent_2: Optional[Aabb2] = None) -> str:
    lines = ["# x1 y1 x2 y2" + (" score" if data.scores is not None else "")]
    for key, box in zip(_EXTENT_KEYS, (extent_1, extent_2)):
        if box is not None and not box.is_empty:
            lines.append(_extent_line(key, box))
    for i in range(len(data)):
        values = [data.p[i, 0], data.p[i, 1], data.q[i, 0], data.q[i, 1]]
        if data.scores is not None:
            values.append(data.scores[i])
        lines.append(" ".join(_fmt(float(v)) for v in values))
    return "\n".join(lines) + "\n"


def write_matches(
    path: PathLike,
    data: CorrespondenceSet,
    extent_1: Optional[Aabb2] = None,
    extent_2: Optional[Aabb2] = None,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_matches(data, extent_1, extent_2))
    logger.info("Wrote %d correspondences to %s", len(data), path)
    return path


# ---------------------------------------------------------------------------
# 模型 JSON
# ---------------------------------------------------------------------------


def model_to_dict(model: Model) -> Dict[str, Any]:
    if isinstance(model, Homography):
        return {"family": "h", "H": model.H.tolist()}
    if isinstance(model, FundamentalMatrix):
        return {"family": "f", "F": model.F.tolist()}
    if isinstance(model, EssentialSetup):
        return {"family": "e", "E": model.E.tolist(), "K1": model.K1.tolist(), "K2": model.K2.tolist()}
    if isinstance(model, RadialHomography):
        return {"family": "rh", "H": model.H.tolist(), "lambda1": model.lambda1, "lambda2": model.lambda2}
    raise DataError(f"unsupported model type {type(model).__name__}")


def model_from_dict(payload: Dict[str, Any]) -> Model:
    try:
        family = payload["family"]
        if family == "h":
            return Homography(payload["H"])
        if family == "f":
            return FundamentalMatrix(payload["F"])
        if family == "e":
            return EssentialSetup(payload["E"], payload["K1"], payload["K2"])
        if family == "rh":
            return RadialHomography(payload["H"], payload["lambda1"], payload["lambda2"])
    except KeyError as exc:
        raise DataError(f"model description is missing field {exc}") from exc
    raise DataError(f"unknown model family {payload.get('family')!r}")


def write_model_json(path: PathLike, model: Model, extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    payload = model_to_dict(model)
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_model_json(path: PathLike) -> Dict[str, Any]:
    """读取附属文件，返回原始字典（含 family 及可能的 K1/K2/lambda 等字段）。"""
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
