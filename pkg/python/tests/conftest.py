"""
pytest configuration and fixtures for PXS tests.
"""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Make ``pxs`` (python/) and ``pxstool`` (repository root) importable
# without installing the package.
_PYTHON_DIR = Path(__file__).resolve().parents[1]
_REPO_ROOT = _PYTHON_DIR.parent
for _path in (_REPO_ROOT, _PYTHON_DIR):
    if str(_path) not in sys.path:
        sys.path.insert(0, str(_path))

from pxs.config import PipelineConfig  # noqa: E402
from pxs.frame import CameraIntrinsics, CameraPose, RgbdFrame  # noqa: E402

SCENES_DIR = _REPO_ROOT / "scenes"


def pytest_configure(config):
    """Register custom markers."""
    config.addinivalue_line(
        "markers", "slow: mark test as a slow acceptance test (set PXS_TEST_SLOW=1)"
    )


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless enabled."""
    skip_slow = pytest.mark.skip(reason="slow test (set PXS_TEST_SLOW=1)")
    slow_enabled = os.environ.get("PXS_TEST_SLOW", "0") == "1"

    for item in items:
        if "slow" in item.keywords and not slow_enabled:
            item.add_marker(skip_slow)


@pytest.fixture
def small_intrinsics() -> CameraIntrinsics:
    """80x60 camera with a 60x45 degree field of view."""
    return CameraIntrinsics.from_degrees(60.0, 45.0, 80, 60)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def fast_config() -> PipelineConfig:
    """Thresholds scaled down for 80x60 frames."""
    return PipelineConfig(keep_threshold=20, min_inliers_floor=30, visit_window=10, subset_size=2000)


@pytest.fixture
def scenes_dir() -> Path:
    return SCENES_DIR


def flat_frame(intrinsics: CameraIntrinsics, distance: float = 2.0, pose: CameraPose = None, index: int = 0) -> RgbdFrame:
    """Fronto-parallel wall at ``distance`` filling the whole image."""
    depth = np.full(intrinsics.shape, distance)
    color = np.full(intrinsics.shape + (3,), 128, dtype=np.uint8)
    return RgbdFrame(depth, color, intrinsics, pose or CameraPose.identity(), index)


@pytest.fixture
def wall_frame(small_intrinsics) -> RgbdFrame:
    return flat_frame(small_intrinsics)
