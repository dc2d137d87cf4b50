"""
Recorded RGB-D dataset directories.

Layout::

    <root>/intrinsics.txt    fov_h fov_v res_h res_v depth_scale  (fov in degrees)
    <root>/poses.txt         one row-major 4x4 camera-to-world matrix per line
    <root>/depth/%06d.png    16-bit grayscale, stored units (millimeters by default)
    <root>/color/%06d.png    8-bit RGB
"""
from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Iterator, List, Sequence, Union

import numpy as np
from PIL import Image

from pxs.frame import CameraIntrinsics, CameraPose, RgbdFrame
from pxs.types import PxsDatasetError, PxsIOError, PxsValidationError

logger = logging.getLogger(__name__)

INTRINSICS_FILE = "intrinsics.txt"
POSES_FILE = "poses.txt"
DEPTH_DIR = "depth"
COLOR_DIR = "color"
FRAME_NAME = "{:06d}.png"

PathLike = Union[str, Path]


def read_intrinsics(path: Path) -> CameraIntrinsics:
    if not path.is_file():
        raise PxsDatasetError(f"missing {path}")
    parts = path.read_text().split()
    if len(parts) != 5:
        raise PxsDatasetError(f"{path}: expected 5 values (fov_h fov_v res_h res_v depth_scale)")
    try:
        fov_h, fov_v = float(parts[0]), float(parts[1])
        res_h, res_v = int(parts[2]), int(parts[3])
        depth_scale = float(parts[4])
        return CameraIntrinsics.from_degrees(fov_h, fov_v, res_h, res_v, depth_scale)
    except (ValueError, PxsValidationError) as e:
        raise PxsDatasetError(f"{path}: {e}") from None


def read_poses(path: Path) -> List[CameraPose]:
    if not path.is_file():
        raise PxsDatasetError(f"missing {path}")
    poses = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            values = [float(v) for v in line.split()]
            poses.append(CameraPose.from_matrix(values))
        except (ValueError, PxsValidationError) as e:
            raise PxsDatasetError(f"{path}:{lineno}: {e}") from None
    return poses


class Dataset:
    """
    Lazily loaded dataset directory.

    Raises:
        PxsDatasetError: If a required file is missing or the depth, color
            and pose counts disagree. The message names the offending file.
    """

    def __init__(self, root: PathLike):
        self.root = Path(root)
        if not self.root.is_dir():
            raise PxsDatasetError(f"dataset directory not found: {self.root}")
        self.intrinsics = read_intrinsics(self.root / INTRINSICS_FILE)
        self.poses = read_poses(self.root / POSES_FILE)
        for sub in (DEPTH_DIR, COLOR_DIR):
            if not (self.root / sub).is_dir():
                raise PxsDatasetError(f"missing {self.root / sub}")
        self._depth_files = sorted((self.root / DEPTH_DIR).glob("*.png"))
        self._color_files = sorted((self.root / COLOR_DIR).glob("*.png"))
        n_depth, n_color, n_pose = len(self._depth_files), len(self._color_files), len(self.poses)
        if n_depth != n_color:
            raise PxsDatasetError(
                f"{self.root / COLOR_DIR}: {n_color} color frames for {n_depth} depth frames"
            )
        if n_pose != n_depth:
            raise PxsDatasetError(
                f"{self.root / POSES_FILE}: {n_pose} poses for {n_depth} depth frames"
            )
        logger.debug(f"Opened dataset {self.root} with {n_depth} frames")

    def __len__(self) -> int:
        return len(self._depth_files)

    def frame(self, index: int) -> RgbdFrame:
        """Load one frame (depth converted to meters)."""
        if not 0 <= index < len(self):
            raise PxsValidationError(f"frame index {index} outside [0, {len(self)})")
        intr = self.intrinsics
        depth_path, color_path = self._depth_files[index], self._color_files[index]
        try:
            raw = np.asarray(Image.open(depth_path)).astype(np.float64)
            color = np.asarray(Image.open(color_path).convert("RGB"))
        except OSError as e:
            raise PxsDatasetError(f"{depth_path.name}: {e}") from None
        if raw.shape != intr.shape:
            raise PxsDatasetError(f"{depth_path}: shape {raw.shape} does not match intrinsics {intr.shape}")
        if color.shape[:2] != intr.shape:
            raise PxsDatasetError(f"{color_path}: shape {color.shape[:2]} does not match intrinsics {intr.shape}")
        return RgbdFrame(raw * intr.depth_scale, color, intr, self.poses[index], index)

    def __iter__(self) -> Iterator[RgbdFrame]:
        for i in range(len(self)):
            yield self.frame(i)


def load_dataset(root: PathLike) -> Dataset:
    """Open and validate a dataset directory."""
    return Dataset(root)


def write_intrinsics(path: Path, intrinsics: CameraIntrinsics) -> None:
    path.write_text(
        f"{math.degrees(intrinsics.fov_h):.10g} {math.degrees(intrinsics.fov_v):.10g} "
        f"{intrinsics.res_h} {intrinsics.res_v} {intrinsics.depth_scale:.10g}\n"
    )


def write_dataset(root: PathLike, intrinsics: CameraIntrinsics, frames: Sequence[RgbdFrame]) -> Path:
    """
    Write frames in the dataset layout.

    Depth is quantized to the stored units of ``intrinsics.depth_scale`` and
    clipped to the 16-bit range.

    Raises:
        PxsIOError: If the directory cannot be written
    """
    root = Path(root)
    try:
        (root / DEPTH_DIR).mkdir(parents=True, exist_ok=True)
        (root / COLOR_DIR).mkdir(parents=True, exist_ok=True)
        write_intrinsics(root / INTRINSICS_FILE, intrinsics)
        pose_lines = []
        for i, frame in enumerate(frames):
            stored = np.clip(np.rint(frame.depth / intrinsics.depth_scale), 0, 65535).astype(np.uint16)
            Image.fromarray(stored).save(root / DEPTH_DIR / FRAME_NAME.format(i))
            Image.fromarray(np.ascontiguousarray(frame.color, dtype=np.uint8)).save(root / COLOR_DIR / FRAME_NAME.format(i))
            pose_lines.append(" ".join(f"{v:.10g}" for v in frame.pose.matrix().ravel()))
        (root / POSES_FILE).write_text("\n".join(pose_lines) + ("\n" if pose_lines else ""))
    except OSError as e:
        raise PxsIOError(f"cannot write dataset to {root}: {e}") from None
    logger.info(f"Wrote {len(pose_lines)} frame(s) to {root}")
    return root
