"""
Efficient-RANSAC detection of planes, cylinders and spheres.

Candidates are fitted from minimal sets of oriented points drawn with
localized sampling, scored by extrapolating the inlier count found on a
random subset, and the best one is extracted once the probability of
having missed a larger shape drops below ``1 - success_probability``.
Inliers of an extracted shape are reduced to the largest connected patch
on the shape's (u, v) grid, refitted by least squares and removed before
the next extraction.

Detection runs on camera-space clouds: the per-point distance threshold
is widened with the sensor noise at the point's depth.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from pxs.frame import NoiseModel, OrientedPointCloud
from pxs.shape import ShapeModel, parameterize, signed_distance, surface_normal
from pxs.types import PxsValidationError, ShapeKind

logger = logging.getLogger(__name__)

MINIMAL_SET_SIZE = {ShapeKind.PLANE: 3, ShapeKind.CYLINDER: 2, ShapeKind.SPHERE: 2}
MIN_RADIUS = 0.01
MAX_RADIUS = 5.0

Detection = Tuple[ShapeModel, np.ndarray]


@dataclass(frozen=True)
class DetectionParams:
    """
    Detector parameters.

    Attributes:
        min_inliers: Minimum support of a reported shape
        dist_epsilon: Base inlier distance (meters)
        normal_epsilon: Maximum normal deviation (radians)
        success_probability: Required confidence of not missing a larger shape
        subset_count: Size of the random subset used to score candidates
        candidates_per_round: Minimal sets drawn per round
        neighborhood_radius: Radius of localized sampling (meters)
        max_candidates: Minimal sets drawn per extraction before giving up
        max_shapes: Upper bound on extracted shapes
        noise: Noise model widening dist_epsilon with depth (None disables)
        noise_scale: Multiplier of the noise threshold
        cell_size: Grid size of the connectivity filter (meters)
        kinds: Shape kinds to look for
    """
    min_inliers: int = 100
    dist_epsilon: float = 0.008
    normal_epsilon: float = math.radians(20.0)
    success_probability: float = 0.99
    subset_count: int = 5000
    candidates_per_round: int = 4
    neighborhood_radius: float = 0.3
    max_candidates: int = 2000
    max_shapes: int = 32
    noise: Optional[NoiseModel] = field(default_factory=NoiseModel)
    noise_scale: float = 2.0
    cell_size: float = 0.05
    kinds: Tuple[ShapeKind, ...] = (ShapeKind.PLANE, ShapeKind.CYLINDER, ShapeKind.SPHERE)

    def __post_init__(self) -> None:
        if not self.dist_epsilon > 0:
            raise PxsValidationError(f"dist_epsilon must be positive, got {self.dist_epsilon}")
        if not 0.0 < self.success_probability < 1.0:
            raise PxsValidationError(
                f"success_probability must be in (0, 1), got {self.success_probability}"
            )
        if not 0.0 < self.normal_epsilon < math.pi / 2:
            raise PxsValidationError(f"normal_epsilon must be in (0, pi/2), got {self.normal_epsilon}")
        if self.min_inliers < 1 or self.subset_count < 1 or self.candidates_per_round < 1:
            raise PxsValidationError("min_inliers, subset_count and candidates_per_round must be >= 1")


def point_epsilon(params: DetectionParams, depth: np.ndarray) -> np.ndarray:
    """Per-point distance threshold max(dist_epsilon, noise_scale * alpha(z))."""
    depth = np.asarray(depth, dtype=np.float64)
    eps = np.full(depth.shape, params.dist_epsilon)
    if params.noise is not None:
        valid = depth > 0.0
        if valid.any():
            eps[valid] = np.maximum(eps[valid], params.noise_scale * params.noise.threshold(depth[valid]))
    return eps


def inlier_mask(
    shape: ShapeModel,
    positions: np.ndarray,
    normals: np.ndarray,
    epsilon: np.ndarray,
    normal_epsilon: float,
) -> np.ndarray:
    """
    |distance| < epsilon and normal within normal_epsilon of the surface
    normal (either orientation).
    """
    if len(positions) == 0:
        return np.zeros(0, dtype=bool)
    dist = np.abs(signed_distance(shape, positions))
    near = dist < epsilon
    mask = np.zeros(len(positions), dtype=bool)
    if near.any():
        cos = np.abs(np.einsum("ij,ij->i", normals[near], surface_normal(shape, positions[near])))
        mask[near] = cos > math.cos(normal_epsilon)
    return mask


# ============== Minimal fits ==============


def _closest_points(p1, d1, p2, d2) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    w0 = p1 - p2
    a, b, c = np.dot(d1, d1), np.dot(d1, d2), np.dot(d2, d2)
    d, e = np.dot(d1, w0), np.dot(d2, w0)
    den = a * c - b * b
    if den < 1e-12 * a * c:
        return None
    s = (b * e - c * d) / den
    t = (a * e - b * d) / den
    return p1 + s * d1, p2 + t * d2


def fit_minimal(kind: ShapeKind, positions: np.ndarray, normals: np.ndarray) -> Optional[ShapeModel]:
    """
    Shape through a minimal set of oriented points.

    Returns:
        The shape, or None for a degenerate configuration (collinear plane
        samples, parallel normals for spheres and cylinders)

    Raises:
        PxsValidationError: If the sample count does not match the kind
    """
    kind = ShapeKind(kind)
    p = np.asarray(positions, dtype=np.float64)
    n = np.asarray(normals, dtype=np.float64)
    if len(p) < MINIMAL_SET_SIZE[kind] or len(n) < MINIMAL_SET_SIZE[kind]:
        raise PxsValidationError(f"{kind.name.lower()} needs {MINIMAL_SET_SIZE[kind]} samples, got {len(p)}")

    if kind == ShapeKind.PLANE:
        normal = np.cross(p[1] - p[0], p[2] - p[0])
        scale = max(np.linalg.norm(p[1] - p[0]) * np.linalg.norm(p[2] - p[0]), 1e-300)
        if np.linalg.norm(normal) < 1e-9 * scale:
            return None
        normal /= np.linalg.norm(normal)
        if np.dot(normal, n[:3].sum(axis=0)) < 0.0:
            normal = -normal
        return ShapeModel.plane(p[:3].mean(axis=0), normal)

    p1, p2, n1, n2 = p[0], p[1], n[0], n[1]
    cross = np.cross(n1, n2)

    if kind == ShapeKind.SPHERE:
        if np.linalg.norm(cross) < 1e-9:
            chord = p2 - p1
            length = np.linalg.norm(chord)
            # Opposite normals on one line: the two points are antipodal
            if (
                length > 1e-12
                and np.dot(n1, n2) < 0.0
                and np.linalg.norm(np.cross(chord / length, n1)) < 1e-9
            ):
                return ShapeModel.sphere(0.5 * (p1 + p2), 0.5 * length)
            return None
        closest = _closest_points(p1, n1, p2, n2)
        if closest is None:
            return None
        center = 0.5 * (closest[0] + closest[1])
        radius = 0.5 * (np.linalg.norm(p1 - center) + np.linalg.norm(p2 - center))
        if not MIN_RADIUS <= radius <= MAX_RADIUS:
            return None
        return ShapeModel.sphere(center, radius)

    # Cylinder: axis from the normals, center from the projected normal lines
    if np.linalg.norm(cross) < 1e-9:
        return None
    axis = cross / np.linalg.norm(cross)
    p2p = p2 - np.dot(p2 - p1, axis) * axis
    n1p = n1 - np.dot(n1, axis) * axis
    n2p = n2 - np.dot(n2, axis) * axis
    closest = _closest_points(p1, n1p, p2p, n2p)
    if closest is None:
        return None
    center = 0.5 * (closest[0] + closest[1])
    radius = 0.5 * (np.linalg.norm(p1 - center) + np.linalg.norm(p2p - center))
    if not MIN_RADIUS <= radius <= MAX_RADIUS:
        return None
    return ShapeModel.cylinder(center, axis, radius)


# ============== Refit ==============


def _mean_abs_distance(shape: ShapeModel, points: np.ndarray) -> float:
    return float(np.mean(np.abs(signed_distance(shape, points))))


def _refit_plane(shape: ShapeModel, pts: np.ndarray) -> Optional[ShapeModel]:
    centroid = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if len(sv) < 2 or sv[1] < 1e-12:
        return None
    normal = vt[-1]
    if np.dot(normal, shape.axis_z) < 0.0:
        normal = -normal
    return shape.with_params(np.concatenate([normal, [np.dot(normal, centroid)]]))


def _refit_sphere(shape: ShapeModel, pts: np.ndarray) -> Optional[ShapeModel]:
    A = np.column_stack([2.0 * pts, np.ones(len(pts))])
    b = np.einsum("ij,ij->i", pts, pts)
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 4:
        return None
    center = sol[:3]
    r2 = sol[3] + np.dot(center, center)
    if r2 <= 0.0:
        return None

    def residual(x: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - x[:3], axis=1) - x[3]

    result = least_squares(residual, np.concatenate([center, [math.sqrt(r2)]]), method="lm")
    x = result.x
    if not (np.all(np.isfinite(x)) and x[3] > 0.0):
        return None
    return shape.with_params(x)


def _refit_cylinder(shape: ShapeModel, pts: np.ndarray) -> Optional[ShapeModel]:
    X, Y, Z = shape.axis_x, shape.axis_y, shape.axis_z

    def unpack(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
        axis = Z + x[0] * X + x[1] * Y
        axis = axis / np.linalg.norm(axis)
        center = shape.origin + x[2] * X + x[3] * Y
        return axis, center, x[4]

    def residual(x: np.ndarray) -> np.ndarray:
        axis, center, r = unpack(x)
        pc = pts - center
        radial = pc - np.outer(pc @ axis, axis)
        return np.linalg.norm(radial, axis=1) - r

    x0 = np.array([0.0, 0.0, 0.0, 0.0, shape.radius])
    result = least_squares(residual, x0, method="trf")
    if np.linalg.matrix_rank(result.jac) < 5:
        return None
    axis, center, r = unpack(result.x)
    if not (np.all(np.isfinite(center)) and r > 0.0):
        return None
    params = np.concatenate([axis, center, [r]])
    return shape.with_params(params)


def refit(shape: ShapeModel, inliers: np.ndarray) -> ShapeModel:
    """
    Least-squares re-estimate of a shape from its inlier positions.

    The input shape is returned unchanged when the system is rank deficient
    or when the refit would increase the mean absolute inlier distance.
    """
    pts = np.atleast_2d(np.asarray(inliers, dtype=np.float64))
    need = 3 if shape.kind == ShapeKind.PLANE else 4 if shape.kind == ShapeKind.SPHERE else 5
    if len(pts) < need:
        return shape
    try:
        if shape.kind == ShapeKind.PLANE:
            fitted = _refit_plane(shape, pts)
        elif shape.kind == ShapeKind.SPHERE:
            fitted = _refit_sphere(shape, pts)
        else:
            fitted = _refit_cylinder(shape, pts)
    except (np.linalg.LinAlgError, ValueError, PxsValidationError) as e:
        logger.debug(f"Refit of {shape.kind.name.lower()} failed: {e}")
        fitted = None
    if fitted is None:
        logger.debug(f"Rank-deficient {shape.kind.name.lower()} refit, keeping previous parameters")
        return shape
    if _mean_abs_distance(fitted, pts) > _mean_abs_distance(shape, pts):
        return shape
    return fitted


# ============== Connectivity ==============


def largest_component(shape: ShapeModel, positions: np.ndarray, cell_size: float) -> np.ndarray:
    """
    Boolean mask of the points forming the largest 8-connected patch of
    the shape's (u, v) grid. Cylinder patches connect across the seam.
    Sphere inliers are kept whole.
    """
    n = len(positions)
    if n == 0 or shape.kind == ShapeKind.SPHERE:
        return np.ones(n, dtype=bool)
    u, v = parameterize(shape, positions)
    u, v = np.atleast_1d(u), np.atleast_1d(v)
    i = np.floor(u / cell_size).astype(np.int64)
    j = np.floor(v / cell_size).astype(np.int64)
    i -= i.min()
    j -= j.min()
    grid = np.zeros((i.max() + 1, j.max() + 1), dtype=bool)
    grid[i, j] = True
    labels, count = ndimage.label(grid, structure=np.ones((3, 3), dtype=bool))
    if count <= 1:
        return np.ones(n, dtype=bool)

    if shape.kind == ShapeKind.CYLINDER and grid.shape[0] > 2:
        # Union labels touching across u = 0 / u = 2 pi r
        parent = np.arange(count + 1)

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        period_cells = int(math.ceil(2.0 * math.pi * shape.radius / cell_size))
        if grid.shape[0] >= period_cells - 1:
            first, last = labels[0], labels[-1]
            for jj in range(grid.shape[1]):
                for dj in (-1, 0, 1):
                    kk = jj + dj
                    if 0 <= kk < grid.shape[1] and first[jj] and last[kk]:
                        ra, rb = find(first[jj]), find(last[kk])
                        if ra != rb:
                            parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(a) for a in range(count + 1)])
        labels = roots[labels]

    point_labels = labels[i, j]
    sizes = np.bincount(point_labels, minlength=labels.max() + 1)
    sizes[0] = 0
    return point_labels == int(np.argmax(sizes))


# ============== Detection loop ==============


class _Sampler:
    """Localized minimal-set sampling over the remaining points."""

    def __init__(self, positions: np.ndarray, radius: float, rng: np.random.Generator):
        self.positions = positions
        self.tree = cKDTree(positions)
        self.radius = radius
        self.rng = rng

    def draw(self, remaining_idx: np.ndarray, remaining_mask: np.ndarray, k: int) -> Optional[np.ndarray]:
        first = remaining_idx[self.rng.integers(len(remaining_idx))]
        near = np.asarray(self.tree.query_ball_point(self.positions[first], self.radius), dtype=np.int64)
        near = near[remaining_mask[near] & (near != first)]
        pool = near if len(near) >= k - 1 else remaining_idx[remaining_idx != first]
        if len(pool) < k - 1:
            return None
        rest = self.rng.choice(pool, size=k - 1, replace=False)
        return np.concatenate([[first], rest])


def _verify(shape: ShapeModel, positions: np.ndarray, normals: np.ndarray,
            eps: np.ndarray, normal_epsilon: float) -> bool:
    return bool(np.all(inlier_mask(shape, positions, normals, eps, normal_epsilon)))


def detect_shapes(
    cloud: OrientedPointCloud,
    params: DetectionParams,
    rng: Optional[np.random.Generator] = None,
    executor: Optional[Executor] = None,
) -> List[Detection]:
    """
    Greedy extraction of shapes from a camera-space oriented cloud.

    Returns:
        List of (shape, inlier indices); inlier sets are disjoint and every
        shape has at least ``params.min_inliers`` inliers. May be empty.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    N = len(cloud)
    if N < 3 or N < params.min_inliers:
        return []

    positions, normals = cloud.positions, cloud.normals
    eps = point_epsilon(params, positions[:, 2])
    sampler = _Sampler(positions, params.neighborhood_radius, rng)
    remaining = np.ones(N, dtype=bool)
    results: List[Detection] = []
    k_max = max(MINIMAL_SET_SIZE[k] for k in params.kinds)

    while len(results) < params.max_shapes:
        remaining_idx = np.nonzero(remaining)[0]
        R = len(remaining_idx)
        if R < max(params.min_inliers, k_max):
            break
        subset = remaining_idx if R <= params.subset_count else np.sort(
            rng.choice(remaining_idx, size=params.subset_count, replace=False)
        )
        scale = R / len(subset)

        def score(shape: ShapeModel) -> float:
            return scale * float(np.count_nonzero(
                inlier_mask(shape, positions[subset], normals[subset], eps[subset], params.normal_epsilon)
            ))

        pool: List[Tuple[float, ShapeModel]] = []
        drawn = 0
        extracted = False
        while drawn < params.max_candidates:
            fresh: List[ShapeModel] = []
            for _ in range(params.candidates_per_round):
                sample = sampler.draw(remaining_idx, remaining, k_max)
                drawn += 1
                if sample is None:
                    continue
                for kind in params.kinds:
                    idx = sample[:MINIMAL_SET_SIZE[kind]]
                    shape = fit_minimal(kind, positions[idx], normals[idx])
                    if shape is not None and _verify(shape, positions[idx], normals[idx], eps[idx], params.normal_epsilon):
                        fresh.append(shape)
            scores = list(executor.map(score, fresh)) if executor is not None else [score(s) for s in fresh]
            pool.extend(zip(scores, fresh))
            if not pool:
                continue

            best_i = max(range(len(pool)), key=lambda a: pool[a][0])
            best_score, best = pool[best_i]
            p_found = min(1.0, (best_score / R) * 0.5 ** (k_max - 1))
            missed = (1.0 - p_found) ** drawn if p_found < 1.0 else 0.0
            if missed >= 1.0 - params.success_probability and drawn < params.max_candidates:
                continue

            pool.pop(best_i)
            accepted = _extract(best, positions, normals, eps, remaining, params)
            if accepted is None:
                if best_score < params.min_inliers:
                    break
                continue
            shape, inliers = accepted
            remaining[inliers] = False
            results.append((shape, inliers))
            logger.debug(f"Extracted {shape!r} with {len(inliers)} inliers after {drawn} minimal sets")
            extracted = True
            break
        if not extracted:
            break

    return results


def _extract(
    shape: ShapeModel,
    positions: np.ndarray,
    normals: np.ndarray,
    eps: np.ndarray,
    remaining: np.ndarray,
    params: DetectionParams,
) -> Optional[Detection]:
    """Full inlier set, connectivity filter and refit of a chosen candidate."""
    for _ in range(2):
        idx = np.nonzero(remaining)[0]
        mask = inlier_mask(shape, positions[idx], normals[idx], eps[idx], params.normal_epsilon)
        inliers = idx[mask]
        if len(inliers) < params.min_inliers:
            return None
        inliers = inliers[largest_component(shape, positions[inliers], params.cell_size)]
        if len(inliers) < params.min_inliers:
            return None
        shape = refit(shape, positions[inliers])
    idx = np.nonzero(remaining)[0]
    mask = inlier_mask(shape, positions[idx], normals[idx], eps[idx], params.normal_epsilon)
    inliers = idx[mask]
    inliers = inliers[largest_component(shape, positions[inliers], params.cell_size)]
    if len(inliers) < params.min_inliers:
        return None
    if shape.kind == ShapeKind.PLANE and np.dot(shape.axis_z, positions[inliers].mean(axis=0)) > 0.0:
        # Camera-space planes face the camera
        shape = shape.with_frame(shape.axis_x, flip=True)
    return shape, inliers
