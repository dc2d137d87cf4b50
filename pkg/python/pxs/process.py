"""
Stream enhancement over the proxy superstructure.

- ``filter_points`` / ``filter_frame``: snap inliers of unimodal cells onto
  the shape (or onto the shape offset by the cell's mean distance) and
  leave multimodal cells untouched.
- ``deflicker``: filter a frame sequence while the statistics accumulate.
- ``fill_holes``: plane-pair extrapolation then morphological closing of
  each proxy's activation mask.
- ``resample``: emit points from activated and filled cells.
- ``cross_bilateral``: depth smoothing that never mixes proxies.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from pxs.config import DEFAULT_CONFIG, PipelineConfig
from pxs.frame import (
    CameraIntrinsics,
    OrientedPointCloud,
    RgbdFrame,
    _masked_gaussian_average,
    bilateral_prefilter,
    estimate_normals,
)
from pxs.proxy import Proxy, SceneState, track
from pxs.shape import (
    parameterize,
    project_along_ray,
    surface_normal,
    unparameterize,
)
from pxs.stats import Cell, ColorGrid, VisitWindow
from pxs.types import PxsDomainError, PxsValidationError, ShapeKind

logger = logging.getLogger(__name__)


# ============== Cell lookups ==============


def _cell_summaries(proxy: Proxy, hits: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Per-hit (has_cell, d_c, m_c) of the cells under surface points.
    """
    n = len(hits)
    has = np.zeros(n, dtype=bool)
    d_c = np.zeros(n)
    m_c = np.zeros(n, dtype=np.int64)
    if n == 0:
        return has, d_c, m_c
    u, v = parameterize(proxy.shape, hits)
    ci, cj = proxy.spec.cell_of(np.atleast_1d(u), np.atleast_1d(v))
    keys = np.stack([np.atleast_1d(ci), np.atleast_1d(cj)], axis=1)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.ravel()
    for g, (a, b) in enumerate(uniq):
        cell = proxy.cells.get((int(a), int(b)))
        if cell is None or (cell.mode_count == 0 and not cell.filled):
            continue
        sel = inverse == g
        has[sel] = True
        d_c[sel] = cell.mean_distance
        m_c[sel] = cell.mode_count
    return has, d_c, m_c


# ============== Filtering ==============


def filter_points(
    cloud: OrientedPointCloud,
    owner: np.ndarray,
    state: SceneState,
    pose,
    config: PipelineConfig = DEFAULT_CONFIG,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Filter the inliers of a camera-space cloud.

    For an inlier p of a proxy, with its cell c:
      - m_c = 1 and |d_c| <= alpha(z): p_f = proj(p)
      - m_c = 1 and |d_c| > alpha(z):  p_f = proj(p) + d_c n(p)
      - otherwise:                     p_f = p
    proj is the projection along the camera ray. Non-inliers, ray misses and
    samples without cell statistics are returned unchanged.

    Returns:
        (positions, moved): camera-space filtered positions and the mask of
        samples that were modified
    """
    out = cloud.positions.copy()
    moved = np.zeros(len(cloud), dtype=bool)
    if len(cloud) == 0:
        return out, moved
    world = pose.apply(cloud.positions)
    origin = pose.origin
    alpha = config.noise_model().threshold(np.maximum(cloud.positions[:, 2], 1e-9))
    inverse = pose.inverse()

    for proxy in state.proxies:
        idx = np.nonzero(owner == proxy.id)[0]
        if len(idx) == 0:
            continue
        hits = project_along_ray(proxy.shape, origin, world[idx])
        ok = ~np.isnan(hits[:, 0])
        idx, hits = idx[ok], hits[ok]
        has, d_c, m_c = _cell_summaries(proxy, hits)
        flat = has & (m_c == 1)
        idx, hits, d_c = idx[flat], hits[flat], d_c[flat]
        offset = np.abs(d_c) > alpha[idx]
        filtered = hits.copy()
        if offset.any():
            filtered[offset] += d_c[offset, None] * surface_normal(proxy.shape, hits[offset])
        out[idx] = inverse.apply(filtered)
        moved[idx] = True
    return out, moved


def filter_frame(
    frame: RgbdFrame,
    state: SceneState,
    cloud: Optional[OrientedPointCloud] = None,
    owner: Optional[np.ndarray] = None,
    config: PipelineConfig = DEFAULT_CONFIG,
) -> RgbdFrame:
    """
    Depth map whose proxy inliers are replaced by the filtered surface.

    The filtered depth is read along each pixel's own ray, so a pixel keeps
    its image position. Without ``cloud``/``owner`` the frame is pre-filtered,
    its normals estimated and its samples voted (without updating ``state``).
    """
    if cloud is None or owner is None:
        cloud = estimate_normals(
            bilateral_prefilter(frame, config.prefilter_sigma, config.range_limit), config.range_limit
        )
        owner = track(state, cloud, frame.pose, config, update=False).owner
    if len(cloud) == 0 or not np.any(owner >= 0):
        return frame

    pose = frame.pose
    origin = pose.origin
    alpha = config.noise_model().threshold(np.maximum(cloud.positions[:, 2], 1e-9))
    depth = frame.depth.copy()
    flat_depth = depth.reshape(-1)
    to_camera = pose.inverse()

    for proxy in state.proxies:
        idx = np.nonzero(owner == proxy.id)[0]
        if len(idx) == 0:
            continue
        pix = cloud.pixel_of[idx]
        rows, cols = np.divmod(pix, frame.intrinsics.res_h)
        # Rays through the pixel centers, not through the samples
        rays = np.stack(
            [
                (cols - frame.intrinsics.cx) / frame.intrinsics.fx,
                (rows - frame.intrinsics.cy) / frame.intrinsics.fy,
                np.ones(len(idx)),
            ],
            axis=1,
        )
        targets = pose.apply(rays * frame.depth.reshape(-1)[pix, None])
        hits = project_along_ray(proxy.shape, origin, targets)
        ok = ~np.isnan(hits[:, 0])
        has, d_c, m_c = np.zeros(len(idx), bool), np.zeros(len(idx)), np.zeros(len(idx), np.int64)
        if ok.any():
            has[ok], d_c[ok], m_c[ok] = _cell_summaries(proxy, hits[ok])
        use = ok & has & (m_c == 1)
        if not use.any():
            continue
        surface = hits.copy()
        shifted = use & (np.abs(d_c) > alpha[idx])
        for k in np.nonzero(shifted)[0]:
            try:
                moved_shape = proxy.shape.offset(float(d_c[k]))
            except PxsDomainError:
                use[k] = False
                continue
            p = project_along_ray(moved_shape, origin, targets[k])
            if p is None:
                use[k] = False
            else:
                surface[k] = p
        cam = to_camera.apply(surface[use])
        flat_depth[pix[use]] = np.where(cam[:, 2] > 0.0, cam[:, 2], flat_depth[pix[use]])
    return frame.with_depth(depth)


def deflicker(
    frames: Iterable[RgbdFrame],
    state: SceneState,
    config: PipelineConfig = DEFAULT_CONFIG,
    update: bool = True,
) -> Iterator[RgbdFrame]:
    """
    Filter a frame sequence against the superstructure.

    With ``update`` each frame is first tracked into ``state`` so that the
    output of later frames depends on the statistics accumulated so far.
    Pixels never covered by a proxy pass through.
    """
    for frame in frames:
        cloud = estimate_normals(
            bilateral_prefilter(frame, config.prefilter_sigma, config.range_limit), config.range_limit
        )
        result = track(state, cloud, frame.pose, config, update=update)
        state.frame_index += 1
        yield filter_frame(frame, state, cloud, result.owner, config)


def label_image(intrinsics: CameraIntrinsics, cloud: OrientedPointCloud, owner: np.ndarray) -> np.ndarray:
    """Per-pixel proxy id (-1 where no proxy claimed the pixel)."""
    labels = np.full(intrinsics.shape, -1, dtype=np.int64)
    ok = (cloud.pixel_of >= 0) & (owner >= 0)
    labels.reshape(-1)[cloud.pixel_of[ok]] = owner[ok]
    return labels


def cross_bilateral(
    frame: RgbdFrame,
    labels: np.ndarray,
    spatial_sigma: float = 2.0,
) -> RgbdFrame:
    """
    Gaussian depth smoothing with the proxy id as range term.

    Neighbors carrying a different label than the center get zero weight.

    Raises:
        PxsValidationError: If labels and depth shapes differ or sigma <= 0
    """
    labels = np.asarray(labels)
    if labels.shape != frame.depth.shape:
        raise PxsValidationError(f"label map shape {labels.shape} != depth shape {frame.depth.shape}")
    if not spatial_sigma > 0:
        raise PxsValidationError(f"spatial_sigma must be positive, got {spatial_sigma}")
    valid = frame.valid
    if not valid.any():
        return frame
    return frame.with_depth(_masked_gaussian_average(frame.depth, valid, spatial_sigma, labels=labels))


# ============== Hole filling ==============


@dataclass
class FillReport:
    """Cells flagged as filled per proxy id, by stage."""
    extrapolated: Dict[int, int]
    closed: Dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.extrapolated.values()) + sum(self.closed.values())


def _filled_cell(config: PipelineConfig) -> Cell:
    return Cell(
        visit=VisitWindow(length=config.visit_window, ratio=config.activation_ratio),
        hist=None,
        colors=ColorGrid(1 << config.color_res_log2),
        filled=True,
    )


def _mark_filled(proxy: Proxy, keys: Iterable[Tuple[int, int]], config: PipelineConfig) -> int:
    count = 0
    for key in keys:
        cell = proxy.cells.get(key)
        if cell is None:
            proxy.cells[key] = _filled_cell(config)
            count += 1
        elif not cell.emitting:
            # partial statistics of a never-activated cell are dropped
            cell.filled = True
            cell.hist = None
            cell.summary = None
            cell.colors = ColorGrid(1 << config.color_res_log2)
            count += 1
    return count


def _plane_line_uv(a: Proxy, b: Proxy) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """Intersection line of two planes in a's (u, v): (point, unit direction)."""
    na, nb = a.shape.axis_z, b.shape.axis_z
    direction = np.cross(na, nb)
    norm = np.linalg.norm(direction)
    if norm < 1e-9:
        return None
    direction /= norm
    # Point on both planes closest to a's origin
    la, lb = np.dot(na, a.shape.origin), np.dot(nb, b.shape.origin)
    system = np.vstack([na, nb, direction])
    point = np.linalg.solve(system, np.array([la, lb, np.dot(direction, a.shape.origin)]))
    pu, pv = parameterize(a.shape, point)
    du, dv = np.dot(direction, a.shape.axis_x), np.dot(direction, a.shape.axis_y)
    d2 = np.array([du, dv])
    return np.array([pu, pv]), d2 / np.linalg.norm(d2)


def _extrapolate_pair(a: Proxy, b: Proxy, config: PipelineConfig) -> int:
    line = _plane_line_uv(a, b)
    if line is None:
        return 0
    point, direction = line
    keys = [k for k, c in a.cells.items() if c.active]
    if not keys:
        return 0
    w = a.spec.cell_size
    ki = np.array([k[0] for k in keys])
    kj = np.array([k[1] for k in keys])
    centers = np.stack(a.spec.cell_uv(ki, kj), axis=1)
    rel = centers - point
    along = rel @ direction
    feet = point + along[:, None] * direction
    gap = np.linalg.norm(centers - feet, axis=1)
    near = gap <= config.extrapolate_gap
    if not near.any():
        return 0

    # The line must run along the other proxy's extent
    foot_world, _ = unparameterize(a.shape, feet[near, 0], feet[near, 1])
    bu, bv = parameterize(b.shape, foot_world)
    inside_b = b.in_bounds(np.atleast_1d(bu), np.atleast_1d(bv), margin=w)
    starts, ends = centers[near][inside_b], feet[near][inside_b]
    if len(starts) == 0:
        return 0

    samples = []
    for s, e in zip(starts, ends):
        steps = max(1, int(math.ceil(np.linalg.norm(e - s) / (0.5 * w))))
        t = np.linspace(0.0, 1.0, steps + 1)
        samples.append(s + t[:, None] * (e - s))
    pts = np.vstack(samples)
    a.spec = a.spec.expanded(pts[:, 0], pts[:, 1])
    ci, cj = a.spec.cell_of(pts[:, 0], pts[:, 1])
    targets = set(zip(np.atleast_1d(ci).tolist(), np.atleast_1d(cj).tolist()))
    return _mark_filled(a, sorted(targets), config)


def _close_mask(proxy: Proxy, size: int) -> List[Tuple[int, int]]:
    mask, i_lo, j_lo = proxy.activation_mask()
    if not mask.any():
        return []
    pad = size
    if proxy.spec.periodic:
        padded = np.pad(mask, ((pad, pad), (0, 0)), mode="wrap")
        padded = np.pad(padded, ((0, 0), (pad, pad)), mode="constant")
    else:
        padded = np.pad(mask, pad, mode="constant")
    structure = np.ones((size, size), dtype=bool)
    closed = ndimage.binary_closing(padded, structure=structure)
    closed = closed[pad:pad + mask.shape[0], pad:pad + mask.shape[1]]
    new_i, new_j = np.nonzero(closed & ~mask)
    return [(int(i + i_lo), int(j + j_lo)) for i, j in zip(new_i, new_j)]


def fill_holes(state: SceneState, config: PipelineConfig = DEFAULT_CONFIG) -> FillReport:
    """
    Complete each proxy's activation mask.

    1. For plane pairs with a dihedral angle within
       [extrapolate_min_deg, extrapolate_max_deg], inactive cells between a
       proxy's activated region and the planes' intersection line are
       filled, up to ``extrapolate_gap`` away.
    2. Each activation mask is closed with a ``closing_size`` square
       structuring element (wrapping around the cylinder seam).

    Filled cells carry no histogram (they read as d_c = 0, m_c = 1) and no
    color. Activation is never removed.
    """
    extrapolated: Dict[int, int] = {}
    closed: Dict[int, int] = {}
    planes = sorted((p for p in state.proxies if p.kind == ShapeKind.PLANE), key=lambda p: p.id)
    lo = math.cos(math.radians(config.extrapolate_min_deg))
    hi = math.cos(math.radians(config.extrapolate_max_deg))
    for a in planes:
        for b in planes:
            if a is b:
                continue
            c = float(np.dot(a.shape.axis_z, b.shape.axis_z))
            if hi <= c <= lo:
                n = _extrapolate_pair(a, b, config)
                if n:
                    extrapolated[a.id] = extrapolated.get(a.id, 0) + n

    for proxy in sorted(state.proxies, key=lambda p: p.id):
        n = _mark_filled(proxy, _close_mask(proxy, config.closing_size), config)
        if n:
            closed[proxy.id] = n

    report = FillReport(extrapolated, closed)
    logger.info(f"Hole filling flagged {report.total} cell(s)")
    return report


# ============== Resampling ==============


def resample(state: SceneState, density: int = 1) -> OrientedPointCloud:
    """
    World-space points sampled from every activated or filled cell.

    Each cell emits density^2 points at uniform sub-cell offsets, displaced
    by d_c along the surface normal when the cell is unimodal, colored from
    the nearest color point.

    Raises:
        PxsValidationError: If density < 1
    """
    if density < 1:
        raise PxsValidationError(f"density must be >= 1, got {density}")
    frac = (np.arange(density) + 0.5) / density
    fu, fv = np.meshgrid(frac, frac, indexing="ij")
    fu, fv = fu.ravel(), fv.ravel()

    positions, normals, colors = [], [], []
    for proxy in sorted(state.proxies, key=lambda p: p.id):
        keys = proxy.emitting_keys()
        if not keys:
            continue
        res = proxy.spec.color_res
        ki = np.repeat([k[0] for k in keys], len(fu))
        kj = np.repeat([k[1] for k in keys], len(fu))
        su = np.tile(fu, len(keys))
        sv = np.tile(fv, len(keys))
        u, v = proxy.spec.cell_uv(ki, kj, su, sv)
        pts, nrm = unparameterize(proxy.shape, u, v)
        offsets = np.zeros(len(pts))
        rgb = np.zeros((len(pts), 3), dtype=np.uint8)
        ck = np.minimum((su * res).astype(np.int64), res - 1)
        cl = np.minimum((sv * res).astype(np.int64), res - 1)
        for n, key in enumerate(keys):
            cell = proxy.cells[key]
            sl = slice(n * len(fu), (n + 1) * len(fu))
            if cell.mode_count == 1:
                offsets[sl] = cell.mean_distance
            rgb[sl] = cell.colors.to_uint8()[ck[sl], cl[sl]]
        positions.append(pts + offsets[:, None] * nrm)
        normals.append(nrm)
        colors.append(rgb)

    if not positions:
        return OrientedPointCloud.empty()
    positions_all = np.vstack(positions)
    return OrientedPointCloud(
        positions_all,
        np.vstack(normals),
        np.vstack(colors),
        np.full(len(positions_all), -1, dtype=np.int64),
    )
