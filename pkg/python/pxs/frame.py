"""
RGB-D frames: camera model, depth pre-filtering, normal estimation and the
sensor noise model.

Conventions:
    Camera space is x right, y down, z forward (meters). Depth 0 marks an
    invalid pixel. Poses are camera-to-world rigid transforms. The principal
    point sits at the image center and the outermost pixel centers lie on the
    +/- fov/2 rays, so ``unproject`` and ``project`` are exact inverses.

Thread Safety:
    Every type here is immutable after construction; all functions are pure
    and may be called concurrently.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from pxs.types import PxsDomainError, PxsValidationError

logger = logging.getLogger(__name__)

ORTHONORMAL_TOLERANCE = 1e-6
UNIT_NORMAL_TOLERANCE = 1e-6

# Pre-filter defaults
DEFAULT_SPATIAL_SIGMA = 2.0
DEFAULT_RANGE_LIMIT = 0.20

ArrayLike = Union[np.ndarray, Sequence[float]]


# ============== Camera model ==============


@dataclass(frozen=True)
class CameraIntrinsics:
    """
    Pinhole intrinsics of a depth sensor.

    Attributes:
        fov_h: Horizontal field of view (radians)
        fov_v: Vertical field of view (radians)
        res_h: Image width in pixels
        res_v: Image height in pixels
        depth_scale: Meters per stored depth unit (0.001 for millimeter PNGs)
    """
    fov_h: float
    fov_v: float
    res_h: int
    res_v: int
    depth_scale: float = 0.001

    def __post_init__(self) -> None:
        for name in ("fov_h", "fov_v"):
            value = getattr(self, name)
            if not (0.0 < value < math.pi):
                raise PxsValidationError(f"{name} must be in (0, pi), got {value}")
        if self.res_h < 1 or self.res_v < 1:
            raise PxsValidationError(
                f"resolution must be at least 1x1, got {self.res_h}x{self.res_v}"
            )
        if not self.depth_scale > 0:
            raise PxsValidationError(f"depth_scale must be positive, got {self.depth_scale}")

    @classmethod
    def from_degrees(
        cls,
        fov_h_deg: float,
        fov_v_deg: float,
        res_h: int,
        res_v: int,
        depth_scale: float = 0.001,
    ) -> "CameraIntrinsics":
        """Build intrinsics from fields of view given in degrees."""
        return cls(math.radians(fov_h_deg), math.radians(fov_v_deg), int(res_h), int(res_v), depth_scale)

    @property
    def shape(self) -> Tuple[int, int]:
        """Image shape as (rows, cols)."""
        return (self.res_v, self.res_h)

    @property
    def cx(self) -> float:
        return (self.res_h - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.res_v - 1) / 2.0

    @property
    def fx(self) -> float:
        return max(self.cx, 0.5) / math.tan(self.fov_h / 2.0)

    @property
    def fy(self) -> float:
        return max(self.cy, 0.5) / math.tan(self.fov_v / 2.0)

    @property
    def raw_frame_bytes(self) -> int:
        """Size of one raw 16-bit depth map."""
        return self.res_h * self.res_v * 2


def pixel_area(intrinsics: CameraIntrinsics, z: float) -> float:
    """
    Area covered by one depth pixel at distance ``z``.

    a(z) = tan(fov_h / res_h) * tan(fov_v / res_v) * z^2
    """
    return (
        math.tan(intrinsics.fov_h / intrinsics.res_h)
        * math.tan(intrinsics.fov_v / intrinsics.res_v)
        * z
        * z
    )


@dataclass(frozen=True, eq=False)
class CameraPose:
    """
    Camera-to-world rigid transform.

    Attributes:
        rotation: 3x3 orthonormal matrix with determinant +1
        translation: Camera center in world coordinates (meters)
    """
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=ORTHONORMAL_TOLERANCE):
            raise PxsValidationError("pose rotation is not orthonormal")
        if np.linalg.det(rotation) <= 0.0:
            raise PxsValidationError("pose rotation must have determinant +1")
        if not np.all(np.isfinite(translation)):
            raise PxsValidationError("pose translation must be finite")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike) -> "CameraPose":
        """Build a pose from a 4x4 (or 3x4) row-major matrix."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.size == 16:
            m = m.reshape(4, 4)
        elif m.size == 12:
            m = m.reshape(3, 4)
        else:
            raise PxsValidationError(f"pose matrix must have 12 or 16 entries, got {m.size}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def look_at(
        cls,
        eye: ArrayLike,
        target: ArrayLike,
        up: ArrayLike = (0.0, 0.0, 1.0),
    ) -> "CameraPose":
        """
        Camera at ``eye`` looking at ``target`` with image "up" toward ``up``.
        """
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(forward)
        if norm < 1e-12:
            raise PxsValidationError("look_at target coincides with eye")
        forward /= norm
        up_vec = np.asarray(up, dtype=np.float64)
        right = np.cross(forward, up_vec)
        if np.linalg.norm(right) < 1e-9:
            # Looking straight along up: pick any perpendicular
            right = np.cross(forward, np.array([1.0, 0.0, 0.0]))
            if np.linalg.norm(right) < 1e-9:
                right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        return cls(np.column_stack([right, down, forward]), eye)

    @property
    def origin(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "CameraPose":
        rt = self.rotation.T
        return CameraPose(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points (N,3) or (3,) from camera to world."""
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (N,3) or (3,) from camera to world."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation.T

    def compose(self, other: "CameraPose") -> "CameraPose":
        """Return ``self * other`` (apply ``other`` first)."""
        return CameraPose(self.rotation @ other.rotation, self.apply(other.translation))


# ============== Sensor noise ==============


@dataclass(frozen=True)
class NoiseModel:
    """
    Axial noise model of a structured-light depth sensor.

    sigma_z(z) = a + b * (max(z, z0) - z0)^2  (meters)

    The clamp at the vertex keeps the threshold non-decreasing in z.
    """
    a: float = 0.0012
    b: float = 0.0019
    z0: float = 0.4

    def __post_init__(self) -> None:
        if self.a < 0 or self.b < 0 or self.z0 < 0:
            raise PxsValidationError("noise model coefficients must be non-negative")

    def threshold(self, z: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Noise threshold alpha(z) for a scalar or an array of depths."""
        z_arr = np.asarray(z, dtype=np.float64)
        if np.any(~(z_arr > 0.0)):
            raise PxsDomainError("noise threshold is defined for z > 0 only")
        clamped = np.maximum(z_arr, self.z0)
        out = self.a + self.b * (clamped - self.z0) ** 2
        if out.ndim == 0:
            return float(out)
        return out


DEFAULT_NOISE_MODEL = NoiseModel()


def noise_threshold(z: Union[float, np.ndarray], model: NoiseModel = DEFAULT_NOISE_MODEL) -> Union[float, np.ndarray]:
    """
    Depth difference below which two surfaces are indistinguishable at ``z``.

    Raises:
        PxsDomainError: If any z <= 0
    """
    return model.threshold(z)


# ============== Frames and clouds ==============


@dataclass(frozen=True, eq=False)
class RgbdFrame:
    """
    One timestamped depth + color pair.

    Attributes:
        depth: (res_v, res_h) meters, 0 = invalid
        color: (res_v, res_h, 3) uint8 RGB
        intrinsics: Camera intrinsics
        pose: Camera-to-world pose
        index: Frame number
    """
    depth: np.ndarray
    color: np.ndarray
    intrinsics: CameraIntrinsics
    pose: CameraPose = None  # type: ignore[assignment]
    index: int = 0

    def __post_init__(self) -> None:
        depth = np.asarray(self.depth, dtype=np.float64)
        color = np.asarray(self.color)
        if depth.shape != self.intrinsics.shape:
            raise PxsValidationError(
                f"depth shape {depth.shape} does not match intrinsics {self.intrinsics.shape}"
            )
        if color.shape != self.intrinsics.shape + (3,):
            raise PxsValidationError(
                f"color shape {color.shape} does not match intrinsics {self.intrinsics.shape + (3,)}"
            )
        if not np.all(np.isfinite(depth)) or np.any(depth < 0.0):
            raise PxsValidationError("depth values must be finite and >= 0")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "color", color.astype(np.uint8, copy=False))
        if self.pose is None:
            object.__setattr__(self, "pose", CameraPose.identity())

    @property
    def valid(self) -> np.ndarray:
        return self.depth > 0.0

    def with_depth(self, depth: np.ndarray) -> "RgbdFrame":
        """Copy of this frame carrying a new depth map."""
        return replace(self, depth=depth)


@dataclass(frozen=True, eq=False)
class OrientedPointCloud:
    """
    Oriented samples of one frame.

    Attributes:
        positions: (N,3) points in meters
        normals: (N,3) unit normals
        colors: (N,3) uint8 RGB
        pixel_of: (N,) flat source pixel index (-1 for synthesized points)
    """
    positions: np.ndarray
    normals: np.ndarray
    colors: np.ndarray
    pixel_of: np.ndarray

    def __post_init__(self) -> None:
        positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        colors = np.asarray(self.colors).reshape(-1, 3).astype(np.uint8, copy=False)
        pixel_of = np.asarray(self.pixel_of, dtype=np.int64).reshape(-1)
        n = len(positions)
        if not (len(normals) == len(colors) == len(pixel_of) == n):
            raise PxsValidationError("point cloud arrays must have equal lengths")
        if n:
            if not np.all(np.isfinite(positions)):
                raise PxsValidationError("point positions must be finite")
            norms = np.linalg.norm(normals, axis=1)
            if np.any(np.abs(norms - 1.0) > UNIT_NORMAL_TOLERANCE):
                raise PxsValidationError("point normals must be unit length")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "colors", colors)
        object.__setattr__(self, "pixel_of", pixel_of)

    @classmethod
    def empty(cls) -> "OrientedPointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), np.uint8), np.zeros(0, np.int64))

    def __len__(self) -> int:
        return len(self.positions)

    def subset(self, selector: np.ndarray) -> "OrientedPointCloud":
        """Cloud restricted to a boolean mask or an index array."""
        return OrientedPointCloud(
            self.positions[selector],
            self.normals[selector],
            self.colors[selector],
            self.pixel_of[selector],
        )

    def transformed(self, pose: CameraPose) -> "OrientedPointCloud":
        """Cloud expressed in the pose's target frame (camera to world)."""
        return OrientedPointCloud(
            pose.apply(self.positions),
            pose.rotate(self.normals),
            self.colors,
            self.pixel_of,
        )


# ============== Geometry ==============


def unproject_depth(depth: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-space points (rows, cols, 3) for a whole depth map; invalid pixels give 0."""
    rows, cols = np.indices(depth.shape, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64)
    x = (cols - intrinsics.cx) / intrinsics.fx * z
    y = (rows - intrinsics.cy) / intrinsics.fy * z
    return np.stack([x, y, z], axis=-1)


def pixel_rays(intrinsics: CameraIntrinsics) -> np.ndarray:
    """Camera-space ray directions (rows, cols, 3) with z = 1."""
    return unproject_depth(np.ones(intrinsics.shape), intrinsics)


def project(intrinsics: CameraIntrinsics, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Project camera-space points to continuous pixel coordinates.

    Returns:
        (rows, cols) arrays; points with z <= 0 give NaN
    """
    pts = np.asarray(points, dtype=np.float64)
    z = pts[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        cols = np.where(z > 0, intrinsics.cx + intrinsics.fx * pts[..., 0] / z, np.nan)
        rows = np.where(z > 0, intrinsics.cy + intrinsics.fy * pts[..., 1] / z, np.nan)
    return rows, cols


def unproject(frame: RgbdFrame, pixel: Tuple[int, int]) -> Optional[np.ndarray]:
    """
    Camera-space point seen by one pixel.

    Args:
        frame: Source frame
        pixel: (row, col)

    Returns:
        3-vector, or None when the pixel has no valid depth

    Raises:
        PxsValidationError: If the pixel lies outside the image
    """
    row, col = int(pixel[0]), int(pixel[1])
    rows, cols = frame.intrinsics.shape
    if not (0 <= row < rows and 0 <= col < cols):
        raise PxsValidationError(f"pixel {pixel} outside {rows}x{cols} image")
    z = frame.depth[row, col]
    if z <= 0.0:
        return None
    intr = frame.intrinsics
    return np.array([(col - intr.cx) / intr.fx * z, (row - intr.cy) / intr.fy * z, z])


def _masked_gaussian_average(
    depth: np.ndarray,
    valid: np.ndarray,
    spatial_sigma: float,
    range_limit: Optional[float] = None,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Gaussian-weighted average over a (2r+1)^2 window, r = ceil(3 sigma).

    Neighbors contribute only when valid, within ``range_limit`` of the
    center depth (if given), and carrying the center's label (if given).
    """
    radius = int(math.ceil(3.0 * spatial_sigma))
    rows, cols = depth.shape
    padded = np.pad(depth, radius, mode="constant")
    padded_valid = np.pad(valid, radius, mode="constant")
    padded_labels = None
    if labels is not None:
        padded_labels = np.pad(labels, radius, mode="constant", constant_values=-1)

    num = np.zeros_like(depth)
    den = np.zeros_like(depth)
    inv_two_sigma2 = 1.0 / (2.0 * spatial_sigma * spatial_sigma)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            weight = math.exp(-(dx * dx + dy * dy) * inv_two_sigma2)
            window = (slice(radius + dy, radius + dy + rows), slice(radius + dx, radius + dx + cols))
            neighbor = padded[window]
            ok = padded_valid[window] & valid
            if range_limit is not None:
                ok &= np.abs(neighbor - depth) <= range_limit
            if padded_labels is not None:
                ok &= padded_labels[window] == labels
            num += np.where(ok, weight * neighbor, 0.0)
            den += np.where(ok, weight, 0.0)

    out = np.zeros_like(depth)
    np.divide(num, den, out=out, where=valid & (den > 0.0))
    return out


def bilateral_prefilter(
    frame: RgbdFrame,
    spatial_sigma: float = DEFAULT_SPATIAL_SIGMA,
    range_limit: float = DEFAULT_RANGE_LIMIT,
) -> RgbdFrame:
    """
    Low-pass filter a depth map without bleeding across discontinuities.

    A Gaussian spatial kernel is combined with a hard range check: neighbors
    whose depth differs from the center by more than ``range_limit`` get zero
    weight. Invalid pixels stay invalid.

    Raises:
        PxsValidationError: If spatial_sigma <= 0
    """
    if not spatial_sigma > 0:
        raise PxsValidationError(f"spatial_sigma must be positive, got {spatial_sigma}")
    valid = frame.valid
    if not valid.any():
        return frame
    filtered = _masked_gaussian_average(frame.depth, valid, spatial_sigma, range_limit=range_limit)
    return frame.with_depth(filtered)


def estimate_normals(frame: RgbdFrame, range_limit: float = DEFAULT_RANGE_LIMIT) -> OrientedPointCloud:
    """
    Per-pixel oriented points from central depth differences.

    The normal is the cross product of the horizontal and vertical
    differences of unprojected neighbors, flipped to face the camera.
    Pixels with an invalid 4-neighbor, a depth jump above ``range_limit``
    across the neighborhood, or a zero-length gradient cross product are
    omitted.
    """
    depth = frame.depth
    rows, cols = depth.shape
    if rows < 3 or cols < 3:
        return OrientedPointCloud.empty()

    points = unproject_depth(depth, frame.intrinsics)
    valid = depth > 0.0
    center = (slice(1, -1), slice(1, -1))
    left, right = (slice(1, -1), slice(None, -2)), (slice(1, -1), slice(2, None))
    up, down = (slice(None, -2), slice(1, -1)), (slice(2, None), slice(1, -1))

    ok = valid[center] & valid[left] & valid[right] & valid[up] & valid[down]
    d_c = depth[center]
    for nb in (left, right, up, down):
        ok &= np.abs(depth[nb] - d_c) <= range_limit

    normals = np.cross(points[right] - points[left], points[down] - points[up])
    length = np.linalg.norm(normals, axis=-1)
    ok &= length > 1e-12
    safe = np.where(ok, length, 1.0)
    normals = normals / safe[..., None]

    p = points[center]
    facing = np.einsum("ijk,ijk->ij", normals, p)
    normals = np.where((facing > 0.0)[..., None], -normals, normals)
    ok &= facing != 0.0

    r_idx, c_idx = np.nonzero(ok)
    pixel_of = (r_idx + 1) * cols + (c_idx + 1)
    return OrientedPointCloud(
        p[ok],
        normals[ok],
        frame.color[center][ok],
        pixel_of,
    )
