"""
Proxy archives, depth re-synthesis and quality metrics.

An archive stores, per proxy, the shape, the grid, which cells are
activated or filled, and for those cells the quantized mean distance d_c,
the mode count m_c and the color points. Histogram kernels and visit
windows are not stored. See ``docs/ARCHIVE_FORMAT.md`` for the layout.

Example:
    data = encode(state)
    restored = decode(data)
    depth = decompress_frame(restored, intrinsics, pose)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from pxs.frame import CameraIntrinsics, CameraPose, pixel_rays
from pxs.proxy import Proxy, SceneState
from pxs.records import Field, FieldType, layout_of, read_array
from pxs.shape import GridSpec, ShapeModel, intersect_rays, parameterize, surface_normal
from pxs.stats import Cell, ColorGrid, VisitWindow
from pxs.types import (
    ProxyStatus,
    PxsDecodeError,
    PxsIOError,
    PxsMetricError,
    PxsValidationError,
    PxsVersionError,
    ShapeKind,
)

logger = logging.getLogger(__name__)

MAGIC = b"PRXY"
FORMAT_VERSION = 1
DEFAULT_QUANT_STEP = 0.0005
DEFAULT_PSNR_PEAK = 8.0

HEADER_HAS_INTRINSICS = 0x1
HEADER_MANHATTAN = 0x2

# Minimum |cos| between a ray and the normal when shifting hits by d_c
_GRAZING_COS = 0.1


# ============== Records ==============


@dataclass
class ArchiveHeader:
    magic: bytes = Field(byte_len=4, default=MAGIC)
    version: int = Field(uint16=True, default=FORMAT_VERSION)
    flags: int = Field(uint16=True, default=0)
    fov_h: float = Field(float64=True, default=0.0)
    fov_v: float = Field(float64=True, default=0.0)
    res_h: int = Field(uint32=True, default=0)
    res_v: int = Field(uint32=True, default=0)
    depth_scale: float = Field(float64=True, default=0.0)
    quant_step: float = Field(float64=True, default=DEFAULT_QUANT_STEP)
    axes: Tuple[float, ...] = Field(FieldType.FLOAT64, count=9)
    frame_index: int = Field(uint32=True, default=0)
    next_id: int = Field(uint32=True, default=0)
    proxy_count: int = Field(uint32=True, default=0)


@dataclass
class ProxyRecord:
    id: int = Field(uint32=True, default=0)
    kind: int = Field(uint8=True, default=0)
    status: int = Field(uint8=True, default=0)
    color_res_log2: int = Field(uint8=True, default=0)
    reserved: int = Field(uint8=True, default=0)
    origin: Tuple[float, ...] = Field(FieldType.FLOAT64, count=3)
    axis_x: Tuple[float, ...] = Field(FieldType.FLOAT64, count=3)
    axis_y: Tuple[float, ...] = Field(FieldType.FLOAT64, count=3)
    radius: float = Field(float64=True, default=0.0)
    cell_size: float = Field(float64=True, default=0.0)
    u_range: Tuple[float, ...] = Field(FieldType.FLOAT64, count=2)
    v_range: Tuple[float, ...] = Field(FieldType.FLOAT64, count=2)
    frames_seen: int = Field(uint32=True, default=1)
    frames_since_support: int = Field(uint32=True, default=0)
    created_frame: int = Field(uint32=True, default=0)
    i_lo: int = Field(int32=True, default=0)
    j_lo: int = Field(int32=True, default=0)
    n_i: int = Field(uint32=True, default=0)
    n_j: int = Field(uint32=True, default=0)
    cell_count: int = Field(uint32=True, default=0)


@dataclass
class CellRecord:
    d_c: int = Field(FieldType.INT16, default=0)
    m_c: int = Field(uint8=True, default=0)


def _mask_bytes(n: int) -> int:
    return (n + 7) // 8


# ============== Encoding ==============


def _encode_proxy(proxy: Proxy, quant_step: float) -> bytes:
    mask, i_lo, j_lo = proxy.activation_mask()
    n_i, n_j = mask.shape
    active = np.zeros_like(mask)
    filled = np.zeros_like(mask)
    for (i, j), cell in proxy.cells.items():
        li, lj = i - i_lo, j - j_lo
        if 0 <= li < n_i and 0 <= lj < n_j:
            active[li, lj] = cell.active
            filled[li, lj] = cell.filled and not cell.active

    keys = [(int(i + i_lo), int(j + j_lo)) for i, j in zip(*np.nonzero(mask))]
    res = proxy.spec.color_res
    shape = proxy.shape
    record = ProxyRecord(
        id=proxy.id,
        kind=int(shape.kind),
        status=int(proxy.status),
        color_res_log2=proxy.spec.color_res_log2,
        origin=tuple(shape.origin),
        axis_x=tuple(shape.axis_x),
        axis_y=tuple(shape.axis_y),
        radius=shape.radius,
        cell_size=proxy.spec.cell_size,
        u_range=proxy.spec.u_range,
        v_range=proxy.spec.v_range,
        frames_seen=proxy.frames_seen,
        frames_since_support=proxy.frames_since_support,
        created_frame=proxy.created_frame,
        i_lo=i_lo,
        j_lo=j_lo,
        n_i=n_i,
        n_j=n_j,
        cell_count=len(keys),
    )
    parts = [
        layout_of(ProxyRecord).pack(record),
        np.packbits(active.ravel(), bitorder="little").tobytes(),
        np.packbits(filled.ravel(), bitorder="little").tobytes(),
    ]
    cell_layout = layout_of(CellRecord)
    for key in keys:
        cell = proxy.cells[key]
        d_q = int(np.clip(round(cell.mean_distance / quant_step), -32768, 32767))
        parts.append(cell_layout.pack(CellRecord(d_c=d_q, m_c=min(cell.mode_count, 255))))
        colors = cell.colors
        if colors.res != res:
            raise PxsValidationError(f"proxy {proxy.id}: color grid resolution {colors.res} != {res}")
        parts.append(np.packbits(colors.observed.ravel(), bitorder="little").tobytes())
        parts.append(colors.to_uint8().tobytes())
    return b"".join(parts)


def encode(state: SceneState, quant_step: float = DEFAULT_QUANT_STEP) -> bytes:
    """
    Serialize the superstructure.

    The output only depends on the state (proxies in id order, cells in
    row-major grid order), so encoding a decoded archive is byte-identical.
    """
    intr = state.intrinsics
    header = ArchiveHeader(
        flags=(HEADER_HAS_INTRINSICS if intr is not None else 0) | (HEADER_MANHATTAN if state.manhattan_ok else 0),
        fov_h=intr.fov_h if intr is not None else 0.0,
        fov_v=intr.fov_v if intr is not None else 0.0,
        res_h=intr.res_h if intr is not None else 0,
        res_v=intr.res_v if intr is not None else 0,
        depth_scale=intr.depth_scale if intr is not None else 0.0,
        quant_step=quant_step,
        axes=tuple(np.asarray(state.world_axes).ravel()),
        frame_index=state.frame_index,
        next_id=state.next_id,
        proxy_count=len(state.proxies),
    )
    parts = [layout_of(ArchiveHeader).pack(header)]
    for proxy in sorted(state.proxies, key=lambda p: p.id):
        parts.append(_encode_proxy(proxy, quant_step))
    data = b"".join(parts)
    logger.debug(f"Encoded {len(state.proxies)} proxies into {len(data)} bytes")
    return data


# ============== Decoding ==============


def _decode_proxy(data: bytes, offset: int, quant_step: float) -> Tuple[Proxy, int]:
    start = offset
    layout = layout_of(ProxyRecord)
    rec = layout.unpack(data, ProxyRecord, offset)
    offset += layout.total_size
    try:
        kind = ShapeKind(rec.kind)
        status = ProxyStatus(rec.status)
        shape = ShapeModel(kind, rec.origin, rec.axis_x, rec.axis_y, rec.radius)
        base = GridSpec.for_shape(shape, rec.cell_size, rec.color_res_log2)
        spec = base.with_ranges(tuple(rec.u_range), tuple(rec.v_range))
    except (ValueError, PxsValidationError) as e:
        raise PxsDecodeError(start, f"invalid proxy record: {e}") from None

    n = rec.n_i * rec.n_j
    mask_len = _mask_bytes(n)
    if len(data) - offset < 2 * mask_len:
        raise PxsDecodeError(len(data), "truncated activation masks")
    active = np.unpackbits(np.frombuffer(data, np.uint8, mask_len, offset), count=n, bitorder="little")
    offset += mask_len
    filled = np.unpackbits(np.frombuffer(data, np.uint8, mask_len, offset), count=n, bitorder="little")
    offset += mask_len
    active = active.reshape(rec.n_i, rec.n_j).astype(bool)
    filled = filled.reshape(rec.n_i, rec.n_j).astype(bool)
    emitting = active | filled
    if int(emitting.sum()) != rec.cell_count:
        raise PxsDecodeError(start, f"cell count {rec.cell_count} disagrees with the masks")

    res = 1 << rec.color_res_log2
    color_mask_len = _mask_bytes(res * res)
    cell_layout = layout_of(CellRecord)
    cells = {}
    for li, lj in zip(*np.nonzero(emitting)):
        summary = cell_layout.unpack(data, CellRecord, offset)
        offset += cell_layout.total_size
        observed_raw, offset = read_array(data, offset, "B", color_mask_len)
        rgb_raw, offset = read_array(data, offset, "B", res * res * 3)
        observed = np.unpackbits(np.array(observed_raw, np.uint8), count=res * res, bitorder="little")
        colors = ColorGrid(res)
        colors.means = np.array(rgb_raw, dtype=np.float64).reshape(res, res, 3)
        colors.weights = observed.reshape(res, res).astype(np.float64)
        is_active = bool(active[li, lj])
        cells[(int(li + rec.i_lo), int(lj + rec.j_lo))] = Cell(
            visit=VisitWindow(activated=is_active),
            hist=None,
            colors=colors,
            filled=not is_active,
            summary=(summary.d_c * quant_step, summary.m_c),
        )

    proxy = Proxy(
        id=rec.id,
        shape=shape,
        spec=spec,
        cells=cells,
        status=status,
        frames_seen=max(1, rec.frames_seen),
        frames_since_support=rec.frames_since_support,
        created_frame=rec.created_frame,
    )
    return proxy, offset


def decode(data: bytes) -> SceneState:
    """
    Rebuild a superstructure from an archive.

    Decoded cells carry only their (d_c, m_c) summary and colors.

    Raises:
        PxsDecodeError: Bad magic (offset 0), truncated or corrupt data
        PxsVersionError: Unsupported format version
    """
    data = bytes(data)
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise PxsDecodeError(0, "bad magic")
    layout = layout_of(ArchiveHeader)
    header = layout.unpack(data, ArchiveHeader, 0)
    if header.version != FORMAT_VERSION:
        raise PxsVersionError(header.version)
    offset = layout.total_size

    intrinsics: Optional[CameraIntrinsics] = None
    if header.flags & HEADER_HAS_INTRINSICS:
        try:
            intrinsics = CameraIntrinsics(
                header.fov_h, header.fov_v, header.res_h, header.res_v, header.depth_scale
            )
        except PxsValidationError as e:
            raise PxsDecodeError(0, f"invalid intrinsics: {e}") from None
    if not header.quant_step > 0:
        raise PxsDecodeError(0, f"invalid quantization step {header.quant_step}")

    try:
        state = SceneState(
            world_axes=np.array(header.axes).reshape(3, 3),
            frame_index=header.frame_index,
            next_id=header.next_id,
            manhattan_ok=bool(header.flags & HEADER_MANHATTAN),
            intrinsics=intrinsics,
        )
    except PxsValidationError as e:
        raise PxsDecodeError(0, f"invalid header: {e}") from None

    for _ in range(header.proxy_count):
        proxy, offset = _decode_proxy(data, offset, header.quant_step)
        state.proxies.append(proxy)
    if offset != len(data):
        raise PxsDecodeError(offset, f"{len(data) - offset} trailing byte(s)")
    return state


def write_archive(path: Union[str, Path], state: SceneState, quant_step: float = DEFAULT_QUANT_STEP) -> int:
    """
    Encode ``state`` to a file.

    Returns:
        Archive size in bytes

    Raises:
        PxsIOError: If the file cannot be written
    """
    data = encode(state, quant_step)
    try:
        Path(path).write_bytes(data)
    except OSError as e:
        raise PxsIOError(f"cannot write archive {path}: {e}") from None
    logger.info(f"Wrote archive {path} ({len(data)} bytes, {len(state.proxies)} proxies)")
    return len(data)


def read_archive(path: Union[str, Path]) -> SceneState:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise PxsIOError(f"cannot read archive {path}: {e}") from None
    return decode(data)


# ============== Decompression ==============


def _dense_cells(proxy: Proxy) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    """Dense emitting mask, d_c and m_c over the proxy's index bounds."""
    mask, i_lo, j_lo = proxy.activation_mask()
    d_c = np.zeros(mask.shape)
    m_c = np.zeros(mask.shape, dtype=np.int64)
    for li, lj in zip(*np.nonzero(mask)):
        cell = proxy.cells[(int(li + i_lo), int(lj + j_lo))]
        d_c[li, lj] = cell.mean_distance
        m_c[li, lj] = cell.mode_count
    return mask, d_c, m_c, i_lo, j_lo


def decompress_frame(state: SceneState, intrinsics: CameraIntrinsics, pose: CameraPose) -> np.ndarray:
    """
    Depth map re-synthesized by ray casting the proxies.

    Per pixel the nearest intersection landing in an activated or filled
    cell wins; unimodal cells shift it by d_c along the surface normal.
    Pixels without a hit read 0.
    """
    rays_cam = pixel_rays(intrinsics).reshape(-1, 3)
    dirs = pose.rotate(rays_cam)
    origin = pose.origin
    best = np.full(len(dirs), np.inf)

    for proxy in state.proxies:
        mask, d_grid, m_grid, i_lo, j_lo = _dense_cells(proxy)
        if not mask.any():
            continue
        roots = intersect_rays(proxy.shape, origin, dirs)
        found = np.full(len(dirs), np.nan)
        for col in range(roots.shape[1]):
            t = roots[:, col]
            cand = np.nonzero(np.isnan(found) & (t > 0.0))[0]
            if len(cand) == 0:
                continue
            hits = origin + t[cand, None] * dirs[cand]
            u, v = parameterize(proxy.shape, hits)
            ci, cj = proxy.spec.cell_of(np.atleast_1d(u), np.atleast_1d(v))
            li, lj = np.atleast_1d(ci) - i_lo, np.atleast_1d(cj) - j_lo
            inside = (li >= 0) & (li < mask.shape[0]) & (lj >= 0) & (lj < mask.shape[1])
            cand, hits, li, lj = cand[inside], hits[inside], li[inside], lj[inside]
            emit = mask[li, lj]
            cand, hits, li, lj = cand[emit], hits[emit], li[emit], lj[emit]
            depth = t[cand].copy()
            shift = (m_grid[li, lj] == 1) & (d_grid[li, lj] != 0.0)
            if shift.any():
                normals = surface_normal(proxy.shape, hits[shift])
                cos = np.einsum("ij,ij->i", dirs[cand[shift]], normals)
                cos = np.where(np.abs(cos) < _GRAZING_COS, np.copysign(_GRAZING_COS, cos), cos)
                depth[shift] += d_grid[li[shift], lj[shift]] / cos
            found[cand] = depth
        hit = ~np.isnan(found) & (found > 0.0)
        best[hit] = np.minimum(best[hit], found[hit])

    # Camera rays have unit z, so the ray parameter is the depth
    out = np.where(np.isfinite(best), best, 0.0)
    return out.reshape(intrinsics.shape)


# ============== Metrics ==============


@dataclass(frozen=True)
class PsnrResult:
    """PSNR in dB (inf for identical inputs) with its RMSE and pixel count."""
    psnr: float
    rmse: float
    pixels: int


def psnr(raw, reconstructed, peak: float = DEFAULT_PSNR_PEAK) -> PsnrResult:
    """
    PSNR between depth maps (or stacks of them) over pixels valid in both.

    PSNR = 20 log10(peak / RMSE); identical inputs give +inf.

    Raises:
        PxsMetricError: If no pixel is valid in both inputs
        PxsValidationError: If the shapes differ
    """
    a = np.asarray(raw, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape:
        raise PxsValidationError(f"depth shapes differ: {a.shape} vs {b.shape}")
    both = (a > 0.0) & (b > 0.0) & np.isfinite(a) & np.isfinite(b)
    count = int(both.sum())
    if count == 0:
        raise PxsMetricError("no pixel is valid in both depth maps")
    rmse = float(np.sqrt(np.mean((a[both] - b[both]) ** 2)))
    value = math.inf if rmse == 0.0 else 20.0 * math.log10(peak / rmse)
    return PsnrResult(value, rmse, count)


def proxy_bytes(state: SceneState, proxy_ids: Iterable[int], quant_step: float = DEFAULT_QUANT_STEP) -> int:
    """Archive bytes taken by the given proxies' records."""
    wanted = set(proxy_ids)
    return sum(len(_encode_proxy(p, quant_step)) for p in state.proxies if p.id in wanted)


def frame_ratio(
    state: SceneState,
    visible_ids: Iterable[int],
    intrinsics: CameraIntrinsics,
    quant_step: float = DEFAULT_QUANT_STEP,
) -> float:
    """
    Raw depth frame size over the archive bytes of the proxies it sees.

    Raises:
        PxsMetricError: If no visible proxy has archive data
    """
    size = proxy_bytes(state, visible_ids, quant_step)
    if size == 0:
        raise PxsMetricError("no visible proxy to compare against")
    return intrinsics.raw_frame_bytes / size


def scene_ratio(
    state: SceneState,
    n_frames: int,
    intrinsics: CameraIntrinsics,
    quant_step: float = DEFAULT_QUANT_STEP,
) -> float:
    """Total raw depth bytes of ``n_frames`` over the full archive size."""
    if n_frames < 0:
        raise PxsValidationError(f"frame count must be >= 0, got {n_frames}")
    return n_frames * intrinsics.raw_frame_bytes / len(encode(state, quant_step))


def visible_proxies(state: SceneState, intrinsics: CameraIntrinsics, pose: CameraPose) -> List[int]:
    """Ids of proxies that own at least one pixel of the re-synthesized frame."""
    ids = []
    for proxy in sorted(state.proxies, key=lambda p: p.id):
        single = SceneState(
            proxies=[proxy], world_axes=state.world_axes, intrinsics=state.intrinsics
        )
        if np.any(decompress_frame(single, intrinsics, pose) > 0.0):
            ids.append(proxy.id)
    return ids
