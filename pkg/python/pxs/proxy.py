"""
The proxy superstructure.

A proxy is a tracked world-space shape with a bounded grid of cells. Each
frame, oriented samples vote for the first proxy (lowest id) they are an
inlier of; proxies collecting at least ``keep_threshold`` votes are
supported, refitted and accumulate the voters into their cells. Unsupported
proxies go on probation and are purged after ``purge_after`` frames unless
they are veterans. Similar proxies of the same kind are merged, and new
proxies get local frames aligned with the scene's Manhattan axes.

Thread Safety:
    Functions mutate the given SceneState and are not thread-safe; callers
    serialize access (see ``ProxyEngine``). Per-proxy vote masks may be
    computed on an executor.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from pxs.config import DEFAULT_CONFIG, PipelineConfig
from pxs.detect import detect_shapes, inlier_mask, point_epsilon, refit
from pxs.frame import CameraIntrinsics, CameraPose, OrientedPointCloud
from pxs.shape import (
    GridSpec,
    ShapeModel,
    bounding_spec,
    parameterize,
    project_along_ray,
    signed_distance,
    unparameterize,
)
from pxs.stats import (
    Cell,
    CellKey,
    ColorGrid,
    RunningMoments,
    SmoothedHistogram,
    VisitWindow,
    color_neighborhood,
    color_weights,
    splat_colors,
)
from pxs.types import ProxyStatus, PxsValidationError, ShapeKind

logger = logging.getLogger(__name__)

AXES_TOLERANCE = 1e-6


# ============== Types ==============


@dataclass(eq=False)
class Proxy:
    """
    A tracked shape with its grid of cell statistics.

    Attributes:
        id: Unique, increasing with creation order
        shape: World-space shape
        spec: Grid discretization of the shape's (u, v) domain
        cells: Sparse map (i, j) -> Cell
        status: ACTIVE or PROBATION
        frames_seen: Frames in which the proxy was created or supported
        frames_since_support: Consecutive unsupported frames
        moments: Running mean / variance of the shape parameter vector
        created_frame: Frame index of creation
    """
    id: int
    shape: ShapeModel
    spec: GridSpec
    cells: Dict[CellKey, Cell] = field(default_factory=dict)
    status: ProxyStatus = ProxyStatus.ACTIVE
    frames_seen: int = 1
    frames_since_support: int = 0
    moments: Optional[RunningMoments] = None
    created_frame: int = 0

    def __post_init__(self) -> None:
        if self.moments is None:
            self.moments = RunningMoments(len(self.shape.params()))
            self.moments.push(self.shape.params())

    @property
    def kind(self) -> ShapeKind:
        return self.shape.kind

    @property
    def param_mean(self) -> np.ndarray:
        return self.moments.mean

    @property
    def param_var(self) -> np.ndarray:
        return self.moments.variance

    @property
    def confidence(self) -> float:
        """Mean standard deviation of the shape parameters (lower is better)."""
        return float(np.mean(self.moments.std))

    def emitting_keys(self) -> List[CellKey]:
        """Sorted keys of activated or filled cells."""
        return sorted(k for k, c in self.cells.items() if c.emitting)

    def activation_mask(self) -> Tuple[np.ndarray, int, int]:
        """
        Dense mask of emitting cells over the grid.

        Returns:
            (mask, i_lo, j_lo): mask[i - i_lo, j - j_lo] is True for emitting cells
        """
        i_lo, i_hi, j_lo, j_hi = self.spec.index_bounds()
        mask = np.zeros((i_hi - i_lo, j_hi - j_lo), dtype=bool)
        for (i, j), cell in self.cells.items():
            if cell.emitting and i_lo <= i < i_hi and j_lo <= j < j_hi:
                mask[i - i_lo, j - j_lo] = True
        return mask, i_lo, j_lo

    def in_bounds(self, u: np.ndarray, v: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Whether (u, v) lies inside the grid ranges grown by ``margin``."""
        u = np.asarray(u)
        if self.spec.closed:
            return np.ones(u.shape, dtype=bool)
        v = np.asarray(v)
        inside = (v >= self.spec.v_range[0] - margin) & (v <= self.spec.v_range[1] + margin)
        if not self.spec.periodic:
            inside &= (u >= self.spec.u_range[0] - margin) & (u <= self.spec.u_range[1] + margin)
        return inside

    def __repr__(self) -> str:
        return (
            f"Proxy(id={self.id}, {self.kind.name.lower()}, {self.status.name}, "
            f"cells={len(self.cells)}, seen={self.frames_seen})"
        )


@dataclass(eq=False)
class SceneState:
    """
    The whole superstructure.

    Attributes:
        proxies: Live proxies, ordered by id
        world_axes: 3x3 matrix whose rows are the Manhattan axes
            (horizontal, horizontal, vertical)
        frame_index: Index of the last processed frame
        next_id: Id of the next proxy
        manhattan_ok: False when the axes fell back to identity
        intrinsics: Camera intrinsics of the stream, when known
    """
    proxies: List[Proxy] = field(default_factory=list)
    world_axes: np.ndarray = field(default_factory=lambda: np.eye(3))
    frame_index: int = 0
    next_id: int = 0
    manhattan_ok: bool = False
    intrinsics: Optional[CameraIntrinsics] = None

    def __post_init__(self) -> None:
        axes = np.asarray(self.world_axes, dtype=np.float64).reshape(3, 3)
        if not np.allclose(axes @ axes.T, np.eye(3), atol=AXES_TOLERANCE):
            raise PxsValidationError("world axes must be orthonormal")
        self.world_axes = axes

    def get(self, proxy_id: int) -> Optional[Proxy]:
        for p in self.proxies:
            if p.id == proxy_id:
                return p
        return None

    @property
    def up(self) -> np.ndarray:
        return self.world_axes[2]


@dataclass
class TrackResult:
    """
    Outcome of voting for one frame.

    Attributes:
        supported: Ids of proxies with at least keep_threshold votes
        owner: Per-sample id of the proxy voted for (-1 for none)
        votes: Vote count per proxy id
    """
    supported: Set[int]
    owner: np.ndarray
    votes: Dict[int, int]

    @property
    def residual(self) -> np.ndarray:
        """Mask of samples not claimed by a supported proxy."""
        return ~np.isin(self.owner, list(self.supported))


# ============== Manhattan frame ==============


def manhattan_axes(
    normals: Sequence[np.ndarray],
    weights: Sequence[float],
    up_hint: Sequence[float] = (0.0, 0.0, 1.0),
    tolerance_deg: float = 20.0,
) -> Tuple[np.ndarray, bool]:
    """
    Manhattan axes from world-space plane normals.

    Near-horizontal planes (normal within ``tolerance_deg`` of up) give the
    vertical axis, near-vertical planes the dominant horizontal direction
    (a 4-fold symmetric angle average), the third axis closes the frame.

    Returns:
        (axes, ok): rows (h, v x h, v); identity and False without planes
    """
    up = np.asarray(up_hint, dtype=np.float64)
    up = up / np.linalg.norm(up)
    cos_tol = math.cos(math.radians(tolerance_deg))
    sin_tol = math.sin(math.radians(tolerance_deg))
    horizontal, vertical = [], []
    for n, w in zip(normals, weights):
        n = np.asarray(n, dtype=np.float64)
        c = float(np.dot(n, up))
        if abs(c) >= cos_tol:
            horizontal.append((n if c > 0 else -n, w))
        elif abs(c) <= sin_tol:
            vertical.append((n, w))
    if not horizontal and not vertical:
        return np.eye(3), False

    if horizontal:
        v = sum(w * n for n, w in horizontal)
        v = v / np.linalg.norm(v)
    else:
        v = up

    e1 = np.eye(3)[int(np.argmin(np.abs(v)))]
    e1 = e1 - np.dot(e1, v) * v
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(v, e1)
    if vertical:
        acc = 0j
        for n, w in vertical:
            theta = math.atan2(np.dot(n, e2), np.dot(n, e1))
            acc += w * complex(math.cos(4.0 * theta), math.sin(4.0 * theta))
        theta = math.atan2(acc.imag, acc.real) / 4.0
        h = math.cos(theta) * e1 + math.sin(theta) * e2
    else:
        h = e1
    h = h - np.dot(h, v) * v
    h /= np.linalg.norm(h)
    return np.vstack([h, np.cross(v, h), v]), True


def init_manhattan(
    first_frames: Sequence[OrientedPointCloud],
    poses: Optional[Sequence[CameraPose]] = None,
    config: PipelineConfig = DEFAULT_CONFIG,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, bool]:
    """
    Manhattan axes from the planes of the first frames.

    Args:
        first_frames: Camera-space oriented clouds
        poses: Their camera-to-world poses (identity when omitted)

    Returns:
        (axes, ok); ok is False and axes the identity when no near-horizontal
        or near-vertical plane was found
    """
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    normals, weights = [], []
    for k, cloud in enumerate(first_frames):
        if len(cloud) < 3:
            continue
        pose = poses[k] if poses is not None else CameraPose.identity()
        params = replace(config.detection_params(len(cloud)), kinds=(ShapeKind.PLANE,))
        for shape, inliers in detect_shapes(cloud, params, rng):
            normals.append(pose.rotate(shape.axis_z))
            weights.append(float(len(inliers)))
    axes, ok = manhattan_axes(normals, weights, config.up_hint, config.manhattan_tolerance_deg)
    if not ok:
        logger.warning("No near-horizontal or near-vertical plane found; using identity Manhattan axes")
    else:
        logger.info(f"Manhattan axes from {len(normals)} plane(s): up={np.round(axes[2], 4).tolist()}")
    return axes, ok


# ============== Accumulation ==============


def _new_cell(config: PipelineConfig, sigma: float) -> Cell:
    return Cell(
        visit=VisitWindow(length=config.visit_window, ratio=config.activation_ratio),
        hist=SmoothedHistogram(sigma, config.slh_merge_width, config.mode_prominence),
        colors=ColorGrid(1 << config.color_res_log2),
    )


def accumulate(
    proxy: Proxy,
    positions: np.ndarray,
    colors: np.ndarray,
    depths: np.ndarray,
    camera_origin: np.ndarray,
    intrinsics: Optional[CameraIntrinsics],
    config: PipelineConfig = DEFAULT_CONFIG,
) -> int:
    """
    Fold one frame's inliers of a proxy into its cells.

    Each sample is projected along its camera ray to find its cell; the
    orthogonal signed distance goes into the cell histogram and its color
    into the color points around the hit. Every cell then records whether
    it was visited this frame.

    Args:
        positions: (N, 3) world-space inliers
        colors: (N, 3) RGB
        depths: (N,) camera-space depths (bandwidth and color neighborhood)
        camera_origin: World-space camera center

    Returns:
        Number of samples accumulated
    """
    shape = proxy.shape
    noise = config.noise_model()
    visited: Set[CellKey] = set()
    used = 0

    if len(positions):
        hits = project_along_ray(shape, camera_origin, positions)
        ok = ~np.isnan(hits[:, 0])
        hits, pts, rgb, z = hits[ok], positions[ok], colors[ok], depths[ok]
        used = int(ok.sum())
        if used:
            u, v = parameterize(shape, hits)
            u, v = np.atleast_1d(u), np.atleast_1d(v)
            proxy.spec = proxy.spec.expanded(u, v)
            ci, cj = proxy.spec.cell_of(u, v)
            ci, cj = np.atleast_1d(ci), np.atleast_1d(cj)
            dist = np.atleast_1d(signed_distance(shape, pts))

            keys = np.stack([ci, cj], axis=1)
            uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
            inverse = inverse.ravel()
            order = np.argsort(inverse, kind="stable")
            bounds = np.searchsorted(inverse[order], np.arange(len(uniq) + 1))
            for g, (a, b) in enumerate(uniq):
                key = (int(a), int(b))
                idx = order[bounds[g]:bounds[g + 1]]
                cell = proxy.cells.get(key)
                if cell is None:
                    sigma = max(float(noise.threshold(float(np.mean(z[idx])))), config.slh_sigma_floor)
                    cell = _new_cell(config, sigma)
                    proxy.cells[key] = cell
                if cell.hist is None:
                    sigma = max(float(noise.threshold(float(np.mean(z[idx])))), config.slh_sigma_floor)
                    cell.hist = SmoothedHistogram(sigma, config.slh_merge_width, config.mode_prominence)
                cell.hist.insert_many(dist[idx])
                visited.add(key)

            if intrinsics is not None:
                res = 1 << config.color_res_log2
                point_size = config.cell_size / res
                gi = np.floor(u / point_size).astype(np.int64)
                gj = np.floor(v / point_size).astype(np.int64)
                # Keep the color point inside the sample's cell
                gi = np.clip(gi, ci * res, ci * res + res - 1)
                gj = np.clip(gj, cj * res, cj * res + res - 1)
                n = np.array(
                    [color_neighborhood(zz, proxy.spec, intrinsics)[1] for zz in z],
                    dtype=np.int64,
                )
                table = {int(r): color_weights(int(r), config.color_res_log2, config.color_alpha) for r in np.unique(n)}
                period = proxy.spec.shape[0] * res if proxy.spec.periodic else 0
                splat_colors(proxy.cells, res, gi, gj, rgb.astype(np.float64), n, table, period)

    for key, cell in proxy.cells.items():
        cell.visit.push(key in visited)
    return used


# ============== Registration ==============


def align_to_manhattan(shape: ShapeModel, axes: np.ndarray) -> ShapeModel:
    """
    Re-choose a shape's local frame from the Manhattan axes.

    Planes: X is the in-plane projection of the most in-plane axis
    (horizontal axes first), Y = N x X pointing up when possible.
    Cylinders: the axis takes the sign of its nearest Manhattan axis.
    Spheres: X and Y are the two horizontal axes.
    """
    a0, a1, up = axes[0], axes[1], axes[2]
    if shape.kind == ShapeKind.SPHERE:
        return ShapeModel(ShapeKind.SPHERE, shape.origin, a0, a1, shape.radius)

    z = shape.axis_z
    if shape.kind == ShapeKind.CYLINDER:
        nearest = axes[int(np.argmax(np.abs(axes @ z)))]
        flip = float(np.dot(z, nearest)) < 0.0
        if flip:
            z = -z
        hint = axes[int(np.argmin(np.abs(axes @ z)))]
        return ShapeModel.cylinder(shape.origin, z, shape.radius, x_hint=hint)

    projected = [(m - np.dot(m, z) * z) for m in (a0, a1, up)]
    lengths = [np.linalg.norm(p) for p in projected]
    horizontal = 0 if lengths[0] >= lengths[1] else 1
    pick = horizontal if lengths[horizontal] > 1e-6 else 2
    x = projected[pick] / lengths[pick]
    y = np.cross(z, x)
    if np.dot(y, up) < -1e-9:
        x, y = -x, -y
    return ShapeModel(ShapeKind.PLANE, shape.origin, x, y)


def register_candidate(
    state: SceneState,
    shape: ShapeModel,
    positions: np.ndarray,
    colors: np.ndarray,
    depths: np.ndarray,
    camera_origin: np.ndarray,
    config: PipelineConfig = DEFAULT_CONFIG,
) -> Proxy:
    """
    Create a proxy from a world-space detection and seed its cells.

    Raises:
        PxsValidationError: If the inlier set is empty
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if len(positions) == 0 or positions.size == 0:
        raise PxsValidationError("cannot register a proxy without inliers")
    aligned = align_to_manhattan(shape, state.world_axes)
    if aligned.kind == ShapeKind.PLANE:
        # Grid origin at the first inlier's foot point keeps coordinates small
        foot = positions[0] - signed_distance(aligned, positions[0]) * aligned.axis_z
        aligned = ShapeModel(ShapeKind.PLANE, foot, aligned.axis_x, aligned.axis_y)
    elif aligned.kind == ShapeKind.CYLINDER:
        axis = aligned.axis_z
        base = aligned.origin + np.dot(positions.mean(axis=0) - aligned.origin, axis) * axis
        aligned = ShapeModel(ShapeKind.CYLINDER, base, aligned.axis_x, aligned.axis_y, aligned.radius)

    spec = bounding_spec(aligned, positions, config.cell_size, config.color_res_log2)
    proxy = Proxy(
        id=state.next_id,
        shape=aligned,
        spec=spec,
        created_frame=state.frame_index,
    )
    state.next_id += 1
    accumulate(proxy, positions, colors, depths, camera_origin, state.intrinsics, config)
    state.proxies.append(proxy)
    logger.info(f"Registered {proxy!r} with {len(positions)} inliers")
    return proxy


# ============== Tracking ==============


def track(
    state: SceneState,
    cloud: OrientedPointCloud,
    pose: CameraPose,
    config: PipelineConfig = DEFAULT_CONFIG,
    executor: Optional[Executor] = None,
    update: bool = True,
) -> TrackResult:
    """
    Vote the samples of a camera-space cloud for the existing proxies.

    Each sample votes for the lowest-id proxy it is an inlier of (within
    the proxy's bounds grown by ``bounds_margin``). Proxies with at least
    ``keep_threshold`` votes are supported; with ``update`` they are
    refitted on their voters and accumulate them.
    """
    n = len(cloud)
    owner = np.full(n, -1, dtype=np.int64)
    if n == 0 or not state.proxies:
        return TrackResult(set(), owner, {p.id: 0 for p in state.proxies})

    world = cloud.transformed(pose)
    depth = cloud.positions[:, 2]
    params = config.detection_params(n)
    eps = point_epsilon(params, depth)
    proxies = sorted(state.proxies, key=lambda p: p.id)

    def vote_mask(proxy: Proxy) -> np.ndarray:
        mask = inlier_mask(proxy.shape, world.positions, world.normals, eps, params.normal_epsilon)
        if mask.any() and not proxy.spec.closed:
            idx = np.nonzero(mask)[0]
            u, v = parameterize(proxy.shape, world.positions[idx])
            mask[idx] = proxy.in_bounds(np.atleast_1d(u), np.atleast_1d(v), config.bounds_margin)
        return mask

    masks = list(executor.map(vote_mask, proxies)) if executor is not None else [vote_mask(p) for p in proxies]

    votes: Dict[int, int] = {}
    for proxy, mask in zip(proxies, masks):
        take = mask & (owner < 0)
        owner[take] = proxy.id
        votes[proxy.id] = int(take.sum())
    supported = {pid for pid, count in votes.items() if count >= config.keep_threshold}

    if update:
        origin = pose.origin
        for proxy in proxies:
            if proxy.id not in supported:
                continue
            voters = owner == proxy.id
            fitted = refit(proxy.shape, world.positions[voters])
            params_now = _aligned_params(proxy.shape, fitted)
            proxy.moments.push(params_now)
            proxy.shape = proxy.shape.with_params(proxy.moments.mean)
            accumulate(
                proxy,
                world.positions[voters],
                world.colors[voters],
                depth[voters],
                origin,
                state.intrinsics,
                config,
            )
    logger.debug(f"Frame {state.frame_index}: {len(supported)}/{len(proxies)} proxies supported")
    return TrackResult(supported, owner, votes)


def _aligned_params(reference: ShapeModel, shape: ShapeModel) -> np.ndarray:
    """Parameters of ``shape`` expressed with the orientation conventions of ``reference``."""
    p = shape.params()
    ref = reference.params()
    if shape.kind in (ShapeKind.PLANE, ShapeKind.CYLINDER) and np.dot(p[:3], ref[:3]) < 0.0:
        p = p.copy()
        if shape.kind == ShapeKind.PLANE:
            p[:4] = -p[:4]
        else:
            p[:3] = -p[:3]
    if shape.kind == ShapeKind.CYLINDER:
        # Center taken as the axis point closest to the reference origin
        a = p[:3] / np.linalg.norm(p[:3])
        p[3:6] = p[3:6] + np.dot(ref[3:6] - p[3:6], a) * a
    return p


# ============== Lifecycle ==============


def lifecycle_step(
    state: SceneState,
    supported: Iterable[int],
    config: PipelineConfig = DEFAULT_CONFIG,
) -> List[Proxy]:
    """
    Advance proxy lifecycles after tracking.

    Supported proxies become ACTIVE; unsupported ACTIVE proxies go on
    PROBATION; probation proxies unsupported for more than ``purge_after``
    frames are removed unless seen in at least ``veteran_after`` frames.
    Proxies created in the current frame are left alone.

    Returns:
        The purged proxies (already removed from ``state``)
    """
    supported = set(supported)
    kept, purged = [], []
    for proxy in state.proxies:
        if proxy.created_frame == state.frame_index and proxy.id not in supported:
            kept.append(proxy)
            continue
        if proxy.id in supported:
            proxy.frames_seen += 1
            proxy.frames_since_support = 0
            if proxy.status == ProxyStatus.PROBATION:
                logger.debug(f"Proxy {proxy.id} back from probation")
            proxy.status = ProxyStatus.ACTIVE
            kept.append(proxy)
            continue
        proxy.frames_since_support += 1
        if proxy.status == ProxyStatus.ACTIVE:
            proxy.status = ProxyStatus.PROBATION
            logger.debug(f"Proxy {proxy.id} on probation")
        if (
            proxy.frames_since_support > config.purge_after
            and proxy.frames_seen < config.veteran_after
        ):
            purged.append(proxy)
            logger.info(f"Purged proxy {proxy.id} after {proxy.frames_since_support} unsupported frames")
        else:
            kept.append(proxy)
    state.proxies = kept
    return purged


# ============== Merging ==============


def _similar(a: Proxy, b: Proxy, config: PipelineConfig) -> bool:
    if a.kind != b.kind:
        return False
    sa, sb = a.shape, b.shape
    cos_max = math.cos(math.radians(config.merge_angle_deg))
    if a.kind == ShapeKind.PLANE:
        if np.dot(sa.axis_z, sb.axis_z) < cos_max:
            return False
        gap = max(abs(signed_distance(sa, sb.origin)), abs(signed_distance(sb, sa.origin)))
        return gap < config.merge_offset
    if abs(sa.radius - sb.radius) >= config.merge_radius:
        return False
    if a.kind == ShapeKind.SPHERE:
        return float(np.linalg.norm(sa.origin - sb.origin)) < config.merge_offset
    if abs(np.dot(sa.axis_z, sb.axis_z)) < cos_max:
        return False
    d = sb.origin - sa.origin
    off_axis = d - np.dot(d, sa.axis_z) * sa.axis_z
    return float(np.linalg.norm(off_axis)) < config.merge_offset


def _bounds_overlap(a: Proxy, b: Proxy) -> bool:
    if a.spec.closed or b.spec.closed:
        return True
    w = a.spec.cell_size
    corners_u = [b.spec.u_range[0], b.spec.u_range[1]]
    corners_v = [b.spec.v_range[0], b.spec.v_range[1]]
    uu, vv = np.meshgrid(corners_u, corners_v, indexing="ij")
    if b.spec.periodic:
        uu = np.mod(uu, b.spec.u_period)
    pts, _ = unparameterize(b.shape, uu.ravel(), vv.ravel())
    u, v = parameterize(a.shape, pts)
    u, v = np.atleast_1d(u), np.atleast_1d(v)
    v_ok = v.min() <= a.spec.v_range[1] + w and v.max() >= a.spec.v_range[0] - w
    if a.spec.periodic:
        return bool(v_ok)
    u_ok = u.min() <= a.spec.u_range[1] + w and u.max() >= a.spec.u_range[0] - w
    return bool(u_ok and v_ok)


def merge_proxies(a: Proxy, b: Proxy) -> Proxy:
    """
    Fold ``b`` into ``a`` (``a`` keeps its identity).

    The shape becomes the frames_seen-weighted average of both parameter
    vectors; b's cells are re-keyed through their centers into a's grid.
    """
    wa, wb = float(a.frames_seen), float(b.frames_seen)
    pa = a.shape.params()
    pb = _aligned_params(a.shape, b.shape)
    merged_shape = a.shape.with_params((wa * pa + wb * pb) / (wa + wb))

    moved: Dict[CellKey, Cell] = {}
    if b.cells:
        keys = sorted(b.cells)
        ki = np.array([k[0] for k in keys])
        kj = np.array([k[1] for k in keys])
        cu, cv = b.spec.cell_uv(ki, kj)
        centers, _ = unparameterize(b.shape, cu, cv)
        u, v = parameterize(merged_shape, centers)
        u, v = np.atleast_1d(u), np.atleast_1d(v)
        a.spec = a.spec.expanded(u, v)
        ni, nj = a.spec.cell_of(u, v)
        for key, i, j in zip(keys, np.atleast_1d(ni), np.atleast_1d(nj)):
            target = (int(i), int(j))
            if target in moved:
                moved[target].merge(b.cells[key])
            else:
                moved[target] = b.cells[key]

    a.shape = merged_shape
    for key, cell in moved.items():
        if key in a.cells:
            a.cells[key].merge(cell)
        else:
            a.cells[key] = cell
    a.moments.merge(b.moments)
    a.frames_seen = a.frames_seen + b.frames_seen
    a.frames_since_support = min(a.frames_since_support, b.frames_since_support)
    a.created_frame = min(a.created_frame, b.created_frame)
    if ProxyStatus.ACTIVE in (a.status, b.status):
        a.status = ProxyStatus.ACTIVE
    return a


def merge_similar(state: SceneState, config: PipelineConfig = DEFAULT_CONFIG) -> List[Tuple[int, int]]:
    """
    Merge proxies of the same kind with close parameters and overlapping
    bounds. The older (lower id) proxy absorbs the newer one.

    Returns:
        (kept_id, absorbed_id) pairs in merge order
    """
    merges: List[Tuple[int, int]] = []
    changed = True
    while changed:
        changed = False
        proxies = sorted(state.proxies, key=lambda p: p.id)
        for i, a in enumerate(proxies):
            for b in proxies[i + 1:]:
                if _similar(a, b, config) and _bounds_overlap(a, b):
                    merge_proxies(a, b)
                    state.proxies = [p for p in state.proxies if p.id != b.id]
                    merges.append((a.id, b.id))
                    logger.info(f"Merged proxy {b.id} into {a.id}")
                    changed = True
                    break
            if changed:
                break
    return merges
