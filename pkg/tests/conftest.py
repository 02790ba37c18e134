"""
测试公共夹具。
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# 确保项目根目录在 sys.path 中，测试统一以 src.spransac 导入
_project_root = Path(__file__).resolve().parents[1]
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from src.spransac.core.types import Aabb2, CorrespondenceSet, Homography  # noqa: E402
from src.spransac.services.synth import synth_generate  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def square_extent() -> Aabb2:
    return Aabb2(0.0, 0.0, 100.0, 100.0)


@pytest.fixture
def mild_homography() -> Homography:
    return Homography(np.array([[1.05, 0.02, 3.0], [-0.03, 0.97, -2.0], [1e-4, -5e-5, 1.0]]))


@pytest.fixture
def h_dataset():
    return synth_generate("h", 400, 0.3, 0.5, seed=7)


@pytest.fixture
def f_dataset():
    return synth_generate("f", 400, 0.3, 0.5, seed=11)


@pytest.fixture
def rh_dataset():
    return synth_generate("rh", 400, 0.3, 0.5, seed=13)


def random_correspondences(rng: np.random.Generator, n: int, extent: Aabb2) -> CorrespondenceSet:
    lo = [extent.xmin, extent.ymin]
    hi = [extent.xmax, extent.ymax]
    return CorrespondenceSet(rng.uniform(lo, hi, size=(n, 2)), rng.uniform(lo, hi, size=(n, 2)))


@pytest.fixture
def make_random_set(rng):
    def _make(n: int, extent: Aabb2) -> CorrespondenceSet:
        return random_correspondences(rng, n, extent)

    return _make
