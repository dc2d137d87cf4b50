"""
Shape models and their surface parameterizations.

A shape carries a local frame (origin C, unit axes X and Y). The third
axis Z = X x Y is the plane normal, the cylinder axis, or the sphere
zenith. Shape-local 2D coordinates (u, v) are meters:

    plane     u = pc.X, v = pc.Y
    cylinder  u = r (pi + atan2(pc.Y, pc.X)) in [0, 2 pi r], v = pc.Z
    sphere    octahedral unfolding of the unit direction, scaled by pi r / 2

All functions accept a single 3-vector or an (N, 3) array.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from pxs.types import PxsDomainError, PxsValidationError, ShapeKind

logger = logging.getLogger(__name__)

FRAME_TOLERANCE = 1e-6
DEFAULT_CELL_SIZE = 0.05
DEFAULT_COLOR_RES_LOG2 = 2

Vector = Union[np.ndarray, Sequence[float]]


def _unit(v: Vector) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise PxsValidationError("zero-length direction")
    return v / n


def orthonormal_frame(z: Vector, x_hint: Optional[Vector] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit X, Y with X x Y = z, X as close to ``x_hint`` as possible.
    """
    z = _unit(z)
    candidates = [] if x_hint is None else [np.asarray(x_hint, dtype=np.float64)]
    candidates += [np.eye(3)[int(np.argmin(np.abs(z)))]]
    for hint in candidates:
        x = hint - np.dot(hint, z) * z
        if np.linalg.norm(x) > 1e-9:
            x /= np.linalg.norm(x)
            return x, np.cross(z, x)
    raise PxsValidationError("cannot build a frame from the given hint")  # pragma: no cover


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """
    Plane, cylinder or sphere with a local frame.

    Attributes:
        kind: Shape kind
        origin: C, a point on the plane / axis, or the sphere center
        axis_x: Unit X
        axis_y: Unit Y, orthogonal to X
        radius: r for cylinders and spheres (0 for planes)
    """
    kind: ShapeKind
    origin: np.ndarray
    axis_x: np.ndarray
    axis_y: np.ndarray
    radius: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        x = np.asarray(self.axis_x, dtype=np.float64).reshape(3)
        y = np.asarray(self.axis_y, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(origin)):
            raise PxsValidationError("shape origin must be finite")
        if abs(np.linalg.norm(x) - 1.0) > FRAME_TOLERANCE or abs(np.linalg.norm(y) - 1.0) > FRAME_TOLERANCE:
            raise PxsValidationError("shape axes must be unit vectors")
        if abs(np.dot(x, y)) > FRAME_TOLERANCE:
            raise PxsValidationError("shape axes must be orthogonal")
        if self.kind == ShapeKind.PLANE:
            object.__setattr__(self, "radius", 0.0)
        elif not (math.isfinite(self.radius) and self.radius > 0.0):
            raise PxsValidationError(f"{self.kind.name.lower()} radius must be positive, got {self.radius}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "axis_x", x)
        object.__setattr__(self, "axis_y", y)
        object.__setattr__(self, "radius", float(self.radius))

    # ---- constructors ----

    @classmethod
    def plane(cls, origin: Vector, normal: Vector, x_hint: Optional[Vector] = None) -> "ShapeModel":
        x, y = orthonormal_frame(normal, x_hint)
        return cls(ShapeKind.PLANE, origin, x, y)

    @classmethod
    def cylinder(
        cls, origin: Vector, axis: Vector, radius: float, x_hint: Optional[Vector] = None
    ) -> "ShapeModel":
        x, y = orthonormal_frame(axis, x_hint)
        return cls(ShapeKind.CYLINDER, origin, x, y, radius)

    @classmethod
    def sphere(
        cls,
        center: Vector,
        radius: float,
        zenith: Vector = (0.0, 0.0, 1.0),
        x_hint: Optional[Vector] = None,
    ) -> "ShapeModel":
        x, y = orthonormal_frame(zenith, x_hint)
        return cls(ShapeKind.SPHERE, center, x, y, radius)

    # ---- frame ----

    @property
    def axis_z(self) -> np.ndarray:
        """X x Y: plane normal, cylinder axis or sphere zenith."""
        return np.cross(self.axis_x, self.axis_y)

    @property
    def normal(self) -> np.ndarray:
        return self.axis_z

    def with_frame(self, x_hint: Vector, flip: bool = False) -> "ShapeModel":
        """
        Same surface, local X re-chosen toward ``x_hint``.

        ``flip`` reverses Z (the plane normal or the cylinder axis).
        """
        z = -self.axis_z if flip else self.axis_z
        x, y = orthonormal_frame(z, x_hint)
        return ShapeModel(self.kind, self.origin, x, y, self.radius)

    def transformed(self, pose: "CameraPose") -> "ShapeModel":  # noqa: F821
        """Shape moved by a rigid transform (e.g. camera to world)."""
        return ShapeModel(
            self.kind,
            pose.apply(self.origin),
            pose.rotate(self.axis_x),
            pose.rotate(self.axis_y),
            self.radius,
        )

    def offset(self, d: float) -> "ShapeModel":
        """
        Parallel surface displaced by ``d`` along the outward normal.

        Raises:
            PxsDomainError: If a cylinder or sphere would collapse (r + d <= 0)
        """
        if self.kind == ShapeKind.PLANE:
            return ShapeModel(self.kind, self.origin + d * self.axis_z, self.axis_x, self.axis_y)
        if self.radius + d <= 0.0:
            raise PxsDomainError(f"offset {d} collapses radius {self.radius}")
        return ShapeModel(self.kind, self.origin, self.axis_x, self.axis_y, self.radius + d)

    # ---- parameter vectors (running statistics, merging) ----

    def params(self) -> np.ndarray:
        """
        Parameter vector.

        plane: (nx, ny, nz, l) with l = N.C; cylinder: (ax, ay, az, cx, cy, cz, r);
        sphere: (cx, cy, cz, r).
        """
        z = self.axis_z
        if self.kind == ShapeKind.PLANE:
            return np.concatenate([z, [np.dot(z, self.origin)]])
        if self.kind == ShapeKind.CYLINDER:
            return np.concatenate([z, self.origin, [self.radius]])
        return np.concatenate([self.origin, [self.radius]])

    def with_params(self, params: Vector) -> "ShapeModel":
        """Shape rebuilt from a parameter vector, keeping the local frame as close as possible."""
        p = np.asarray(params, dtype=np.float64)
        if self.kind == ShapeKind.PLANE:
            n = _unit(p[:3])
            # Keep the origin as the projection of the previous one
            origin = self.origin - (np.dot(n, self.origin) - p[3]) * n
            x, y = orthonormal_frame(n, self.axis_x)
            return ShapeModel(ShapeKind.PLANE, origin, x, y)
        if self.kind == ShapeKind.CYLINDER:
            a = _unit(p[:3])
            # Slide the new origin along the axis next to the previous one
            origin = p[3:6] + np.dot(self.origin - p[3:6], a) * a
            x, y = orthonormal_frame(a, self.axis_x)
            return ShapeModel(ShapeKind.CYLINDER, origin, x, y, float(p[6]))
        return ShapeModel(ShapeKind.SPHERE, p[:3], self.axis_x, self.axis_y, float(p[3]))

    def __repr__(self) -> str:
        o = np.array2string(self.origin, precision=4)
        z = np.array2string(self.axis_z, precision=4)
        if self.kind == ShapeKind.PLANE:
            return f"ShapeModel(plane, origin={o}, normal={z})"
        return f"ShapeModel({self.kind.name.lower()}, origin={o}, axis={z}, r={self.radius:.4f})"


# ============== Parameterization ==============


def _local(shape: ShapeModel, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    pc = np.asarray(points, dtype=np.float64) - shape.origin
    return pc @ shape.axis_x, pc @ shape.axis_y, pc @ shape.axis_z


def _scalar_or_array(a: np.ndarray) -> Union[float, np.ndarray]:
    return float(a) if np.ndim(a) == 0 else a


def parameterize(shape: ShapeModel, P: np.ndarray) -> Tuple[Union[float, np.ndarray], Union[float, np.ndarray]]:
    """
    Shape-local (u, v) of one point or an (N, 3) array.

    Raises:
        PxsDomainError: For a sphere point at the center
    """
    x, y, z = _local(shape, P)
    if shape.kind == ShapeKind.PLANE:
        return _scalar_or_array(x), _scalar_or_array(y)

    r = shape.radius
    if shape.kind == ShapeKind.CYLINDER:
        u = r * (math.pi + np.arctan2(y, x))
        return _scalar_or_array(u), _scalar_or_array(z)

    n = np.abs(x) + np.abs(y) + np.abs(z)
    if np.any(n < 1e-15):
        raise PxsDomainError("sphere parameterization undefined at the center")
    xn, yn = x / n, y / n
    upper = z >= 0.0
    s = np.where(upper, xn, np.where(x >= 0.0, 1.0 - np.abs(yn), np.abs(yn) - 1.0))
    t = np.where(upper, yn, np.where(y >= 0.0, 1.0 - np.abs(xn), np.abs(xn) - 1.0))
    half = 0.5 * math.pi * r
    return _scalar_or_array(half * s), _scalar_or_array(half * t)


def unparameterize(shape: ShapeModel, u, v) -> Tuple[np.ndarray, np.ndarray]:
    """
    Surface point and outward unit normal at shape-local (u, v).

    Cylinder u is periodic. Sphere (u, v) must lie in [-pi r/2, pi r/2]^2.

    Raises:
        PxsDomainError: For non-finite or out-of-domain coordinates
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise PxsDomainError("non-finite shape coordinates")
    X, Y, Z = shape.axis_x, shape.axis_y, shape.axis_z
    r = shape.radius

    if shape.kind == ShapeKind.PLANE:
        points = shape.origin + u[..., None] * X + v[..., None] * Y
        normals = np.broadcast_to(Z, points.shape).copy()
        return points, normals

    if shape.kind == ShapeKind.CYLINDER:
        theta = u / r - math.pi
        radial = np.cos(theta)[..., None] * X + np.sin(theta)[..., None] * Y
        points = shape.origin + r * radial + v[..., None] * Z
        return points, radial

    half = 0.5 * math.pi * r
    s, t = u / half, v / half
    tol = 1e-9
    if np.any(np.abs(s) > 1.0 + tol) or np.any(np.abs(t) > 1.0 + tol):
        raise PxsDomainError("sphere coordinates outside [-pi r/2, pi r/2]^2")
    s, t = np.clip(s, -1.0, 1.0), np.clip(t, -1.0, 1.0)
    inner = np.abs(s) + np.abs(t) <= 1.0
    sign_s = np.where(s >= 0.0, 1.0, -1.0)
    sign_t = np.where(t >= 0.0, 1.0, -1.0)
    lx = np.where(inner, s, (1.0 - np.abs(t)) * sign_s)
    ly = np.where(inner, t, (1.0 - np.abs(s)) * sign_t)
    lz = 1.0 - np.abs(s) - np.abs(t)
    local = np.stack([lx, ly, lz], axis=-1)
    local /= np.linalg.norm(local, axis=-1, keepdims=True)
    direction = local[..., 0:1] * X + local[..., 1:2] * Y + local[..., 2:3] * Z
    return shape.origin + r * direction, direction


# ============== Distances and rays ==============


def signed_distance(shape: ShapeModel, P: np.ndarray) -> Union[float, np.ndarray]:
    """Orthogonal distance to the surface, positive along the outward normal."""
    pc = np.asarray(P, dtype=np.float64) - shape.origin
    if shape.kind == ShapeKind.PLANE:
        return _scalar_or_array(pc @ shape.axis_z)
    if shape.kind == ShapeKind.CYLINDER:
        a = shape.axis_z
        radial = pc - (pc @ a)[..., None] * a
        return _scalar_or_array(np.linalg.norm(radial, axis=-1) - shape.radius)
    return _scalar_or_array(np.linalg.norm(pc, axis=-1) - shape.radius)


def surface_normal(shape: ShapeModel, P: np.ndarray) -> np.ndarray:
    """Outward unit normal at the orthogonal foot point of each point."""
    pts = np.asarray(P, dtype=np.float64)
    if shape.kind == ShapeKind.PLANE:
        return np.broadcast_to(shape.axis_z, pts.shape).copy()
    pc = pts - shape.origin
    if shape.kind == ShapeKind.CYLINDER:
        a = shape.axis_z
        pc = pc - (pc @ a)[..., None] * a
    norm = np.linalg.norm(pc, axis=-1, keepdims=True)
    fallback = np.broadcast_to(shape.axis_x, pts.shape)
    return np.where(norm > 1e-12, pc / np.where(norm > 1e-12, norm, 1.0), fallback)


def intersect_rays(shape: ShapeModel, origins: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """
    Ray parameters of both surface intersections.

    Args:
        origins: (3,) or (N, 3) ray origins
        directions: (N, 3) ray directions (not necessarily unit)

    Returns:
        (N, 2) array of t values, ascending; NaN where there is no root.
        Planes yield one root in column 0.
    """
    d = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    oc = np.asarray(origins, dtype=np.float64) - shape.origin
    oc = np.broadcast_to(oc, d.shape)
    out = np.full((len(d), 2), np.nan)

    if shape.kind == ShapeKind.PLANE:
        n = shape.axis_z
        denom = d @ n
        ok = np.abs(denom) > 1e-12
        out[ok, 0] = -(oc[ok] @ n) / denom[ok]
        return out

    if shape.kind == ShapeKind.CYLINDER:
        a = shape.axis_z
        d = d - (d @ a)[:, None] * a
        oc = oc - (oc @ a)[:, None] * a

    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * np.einsum("ij,ij->i", oc, d)
    qc = np.einsum("ij,ij->i", oc, oc) - shape.radius ** 2
    disc = qb * qb - 4.0 * qa * qc
    ok = (qa > 1e-15) & (disc >= 0.0)
    root = np.sqrt(np.where(ok, disc, 0.0))
    safe_a = np.where(ok, qa, 1.0)
    out[ok, 0] = ((-qb - root) / (2.0 * safe_a))[ok]
    out[ok, 1] = ((-qb + root) / (2.0 * safe_a))[ok]
    return out


def project_along_ray(
    shape: ShapeModel, camera_origin: Vector, P: np.ndarray
) -> Optional[np.ndarray]:
    """
    Move points onto the surface along their camera ray.

    Among the forward (t > 0) intersections of the ray camera -> P, the one
    closest to P is kept, so points already on the surface are fixed points.

    Returns:
        For one point, the projected point or None on a miss. For (N, 3),
        an (N, 3) array with NaN rows on a miss.
    """
    pts = np.asarray(P, dtype=np.float64)
    single = pts.ndim == 1
    pts2 = np.atleast_2d(pts)
    o = np.asarray(camera_origin, dtype=np.float64)
    directions = pts2 - o
    roots = intersect_rays(shape, o, directions)
    roots = np.where(roots > 0.0, roots, np.nan)
    gap = np.abs(roots - 1.0)
    has = ~np.all(np.isnan(roots), axis=1)
    best = np.zeros(len(roots), dtype=np.int64)
    best[has] = np.nanargmin(gap[has], axis=1)
    t = roots[np.arange(len(roots)), best]
    out = o + t[:, None] * directions
    if single:
        return None if not has[0] else out[0]
    return out


# ============== Grid ==============


@dataclass(frozen=True)
class GridSpec:
    """
    Discretization of a shape's (u, v) domain.

    Attributes:
        cell_size: w, meters
        u_range: Half-open [lo, hi) extent along u
        v_range: Half-open [lo, hi) extent along v
        color_res_log2: r; each cell holds 2^r x 2^r color points
        u_period: u wrap period (2 pi r for cylinders, 0 otherwise)
        closed: True when the domain is a closed square (spheres)
    """
    cell_size: float = DEFAULT_CELL_SIZE
    u_range: Tuple[float, float] = (0.0, 0.0)
    v_range: Tuple[float, float] = (0.0, 0.0)
    color_res_log2: int = DEFAULT_COLOR_RES_LOG2
    u_period: float = 0.0
    closed: bool = False

    def __post_init__(self) -> None:
        if not self.cell_size > 0:
            raise PxsValidationError(f"cell_size must be positive, got {self.cell_size}")
        if self.color_res_log2 < 0:
            raise PxsValidationError(f"color_res_log2 must be >= 0, got {self.color_res_log2}")
        for name in ("u_range", "v_range"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise PxsValidationError(f"{name} must be a finite interval, got {(lo, hi)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        if self.u_period and self.u_range != (0.0, self.u_period):
            raise PxsValidationError("periodic grids must span u in [0, period]")

    @classmethod
    def for_shape(
        cls,
        shape: ShapeModel,
        cell_size: float = DEFAULT_CELL_SIZE,
        color_res_log2: int = DEFAULT_COLOR_RES_LOG2,
        u_range: Tuple[float, float] = (0.0, 0.0),
        v_range: Tuple[float, float] = (0.0, 0.0),
    ) -> "GridSpec":
        """
        Grid for a shape. Cylinders always span the full circumference and
        spheres the whole octahedral square; plane ranges come from the caller.
        """
        if shape.kind == ShapeKind.CYLINDER:
            period = 2.0 * math.pi * shape.radius
            return cls(cell_size, (0.0, period), v_range, color_res_log2, u_period=period)
        if shape.kind == ShapeKind.SPHERE:
            half = 0.5 * math.pi * shape.radius
            return cls(cell_size, (-half, half), (-half, half), color_res_log2, closed=True)
        return cls(cell_size, u_range, v_range, color_res_log2)

    @property
    def color_res(self) -> int:
        return 1 << self.color_res_log2

    @property
    def periodic(self) -> bool:
        return self.u_period > 0.0

    def index_bounds(self) -> Tuple[int, int, int, int]:
        """(i_lo, i_hi, j_lo, j_hi) with exclusive upper bounds."""
        w = self.cell_size
        i_lo = int(math.floor(self.u_range[0] / w))
        i_hi = max(int(math.ceil(self.u_range[1] / w)), i_lo + 1)
        j_lo = int(math.floor(self.v_range[0] / w))
        j_hi = max(int(math.ceil(self.v_range[1] / w)), j_lo + 1)
        return i_lo, i_hi, j_lo, j_hi

    @property
    def shape(self) -> Tuple[int, int]:
        i_lo, i_hi, j_lo, j_hi = self.index_bounds()
        return (i_hi - i_lo, j_hi - j_lo)

    def cell_of(self, u, v) -> Tuple[Union[int, np.ndarray], Union[int, np.ndarray]]:
        """
        Integer cell of (u, v): floor(u / w), floor(v / w).

        Cylinder u wraps modulo the period first; sphere indices clamp to the
        closed square.
        """
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        w = self.cell_size
        if self.periodic:
            u = np.mod(u, self.u_period)
            # mod can return the period itself for tiny negative inputs
            u = np.where(u >= self.u_period, 0.0, u)
        i = np.floor(u / w).astype(np.int64)
        j = np.floor(v / w).astype(np.int64)
        if self.periodic:
            i = np.minimum(i, self.index_bounds()[1] - 1)
        if self.closed:
            i_lo, i_hi, j_lo, j_hi = self.index_bounds()
            i = np.clip(i, i_lo, i_hi - 1)
            j = np.clip(j, j_lo, j_hi - 1)
        if i.ndim == 0:
            return int(i), int(j)
        return i, j

    def contains(self, i: int, j: int) -> bool:
        i_lo, i_hi, j_lo, j_hi = self.index_bounds()
        return i_lo <= i < i_hi and j_lo <= j < j_hi

    def cell_uv(self, i, j, fu=0.5, fv=0.5) -> Tuple[np.ndarray, np.ndarray]:
        """
        (u, v) at fraction (fu, fv) inside cell (i, j), mapped into the
        valid parameter domain (wrapped for cylinders, clamped for spheres).
        """
        w = self.cell_size
        u = (np.asarray(i, dtype=np.float64) + fu) * w
        v = (np.asarray(j, dtype=np.float64) + fv) * w
        if self.periodic:
            u = np.mod(u, self.u_period)
        if self.closed:
            u = np.clip(u, *self.u_range)
            v = np.clip(v, *self.v_range)
        return u, v

    def expanded(self, u_values: np.ndarray, v_values: np.ndarray, margin: float = 0.0) -> "GridSpec":
        """
        Grid whose ranges also cover the given coordinates (plus ``margin``).
        Periodic u and closed domains never grow.
        """
        u_values = np.asarray(u_values, dtype=np.float64)
        v_values = np.asarray(v_values, dtype=np.float64)
        if self.closed or (u_values.size == 0 and v_values.size == 0):
            return self
        u_range = self.u_range
        if not self.periodic and u_values.size:
            u_range = (min(u_range[0], float(u_values.min()) - margin),
                       max(u_range[1], float(u_values.max()) + margin))
        v_range = self.v_range
        if v_values.size:
            v_range = (min(v_range[0], float(v_values.min()) - margin),
                       max(v_range[1], float(v_values.max()) + margin))
        return GridSpec(self.cell_size, u_range, v_range, self.color_res_log2, self.u_period, self.closed)

    def with_ranges(self, u_range: Tuple[float, float], v_range: Tuple[float, float]) -> "GridSpec":
        if self.closed:
            return self
        if self.periodic:
            u_range = self.u_range
        return GridSpec(self.cell_size, u_range, v_range, self.color_res_log2, self.u_period, self.closed)


def bounding_spec(
    shape: ShapeModel,
    points: np.ndarray,
    cell_size: float = DEFAULT_CELL_SIZE,
    color_res_log2: int = DEFAULT_COLOR_RES_LOG2,
) -> GridSpec:
    """Grid whose ranges are the bounding rectangle of the points' (u, v)."""
    base = GridSpec.for_shape(shape, cell_size, color_res_log2)
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if len(pts) == 0 or base.closed:
        return base
    u, v = parameterize(shape, pts)
    u, v = np.atleast_1d(u), np.atleast_1d(v)
    u_range = base.u_range if base.periodic else (float(u.min()), float(u.max()) + 1e-9)
    return base.with_ranges(u_range, (float(v.min()), float(v.max()) + 1e-9))
