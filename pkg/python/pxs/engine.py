"""
ProxyEngine - the per-frame pipeline around a SceneState.

Each frame runs: pre-filter, normal estimation, tracking against the
existing proxies, shape detection on the residual samples, registration
of new proxies, merging and lifecycle. The first ``manhattan_frames``
frames also establish the scene's Manhattan axes.

Thread Safety:
    ProxyEngine is thread-safe. A reentrant lock (RLock) serializes every
    state mutation; per-proxy vote masks and candidate scoring run on an
    internal thread pool sized by ``config.threads``. Callbacks are executed
    while holding the lock, so avoid blocking operations in callbacks.
"""
from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from pxs._logging import format_timings
from pxs.codec import decompress_frame, frame_ratio, psnr, scene_ratio, visible_proxies, write_archive
from pxs.config import DEFAULT_CONFIG, PipelineConfig
from pxs.dataset import write_dataset
from pxs.detect import detect_shapes
from pxs.frame import CameraIntrinsics, OrientedPointCloud, RgbdFrame, bilateral_prefilter, estimate_normals
from pxs.mesh import export_scene
from pxs.process import FillReport, fill_holes, filter_frame, label_image
from pxs.proxy import (
    Proxy,
    SceneState,
    init_manhattan,
    lifecycle_step,
    merge_similar,
    register_candidate,
    track,
)
from pxs.types import PxsMetricError, PxsValidationError

logger = logging.getLogger(__name__)

STAGES = ("prefilter", "normals", "track", "detect", "update")

# Type aliases for callbacks
FrameCallback = Callable[["FrameResult"], None]
ProxyCallback = Callable[[Proxy], None]
MergeCallback = Callable[[int, int], None]


@dataclass
class FrameResult:
    """
    Outcome of one processed frame.

    Attributes:
        index: Position of the frame in the stream
        timings: Seconds spent per stage (see ``STAGES``)
        cloud: Camera-space oriented samples of the frame
        owner: Per-sample proxy id (-1 for unclaimed)
        supported: Ids of proxies supported by this frame
        created: Ids of proxies registered from this frame
        merged: (kept, absorbed) id pairs
        purged: Ids of proxies removed
    """
    index: int
    timings: Dict[str, float]
    cloud: OrientedPointCloud
    owner: np.ndarray
    supported: List[int] = field(default_factory=list)
    created: List[int] = field(default_factory=list)
    merged: List[Tuple[int, int]] = field(default_factory=list)
    purged: List[int] = field(default_factory=list)
    proxy_count: int = 0

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())

    def labels(self, intrinsics: CameraIntrinsics) -> np.ndarray:
        """Per-pixel proxy id image."""
        return label_image(intrinsics, self.cloud, self.owner)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frame": self.index,
            "points": len(self.cloud),
            "proxies": self.proxy_count,
            "supported": sorted(self.supported),
            "created": list(self.created),
            "merged": [list(p) for p in self.merged],
            "purged": list(self.purged),
            "timings_ms": {k: round(v * 1000.0, 3) for k, v in self.timings.items()},
        }


class ProxyEngine:
    """
    Builds and updates a proxy superstructure from an RGB-D stream.

    Example:
        >>> with ProxyEngine(intrinsics, config) as engine:
        ...     @engine.on_proxy_created
        ...     def created(proxy):
        ...         print(proxy)
        ...     for frame in frames:
        ...         engine.process_frame(frame)

    Attributes:
        intrinsics: Camera intrinsics of the stream
        config: Pipeline configuration
        state: The superstructure being built
    """

    def __init__(
        self,
        intrinsics: CameraIntrinsics,
        config: PipelineConfig = DEFAULT_CONFIG,
        state: Optional[SceneState] = None,
    ):
        self.intrinsics = intrinsics
        self.config = config
        self.state = state if state is not None else SceneState(intrinsics=intrinsics)
        if self.state.intrinsics is None:
            self.state.intrinsics = intrinsics
        self._lock = threading.RLock()
        self._rng = np.random.default_rng(config.seed)
        self._executor: Optional[ThreadPoolExecutor] = (
            ThreadPoolExecutor(max_workers=config.threads, thread_name_prefix="pxs")
            if config.threads > 1
            else None
        )
        self._frames = 0
        # Warm-up clouds and poses for the Manhattan axes
        self._warmup: List[Tuple[OrientedPointCloud, Any]] = []
        # axes stay fixed once a resumed state holds proxies
        self._manhattan_done = state is not None and (state.manhattan_ok or bool(state.proxies))
        self._frame_callbacks: List[FrameCallback] = []
        self._created_callbacks: List[ProxyCallback] = []
        self._purged_callbacks: List[ProxyCallback] = []
        self._merged_callbacks: List[MergeCallback] = []
        self._closed = False
        logger.debug(f"ProxyEngine created ({config.threads} thread(s), seed {config.seed})")

    # ============== Lifecycle ==============

    def close(self) -> None:
        """Shut the thread pool down. Safe to call multiple times."""
        with self._lock:
            if self._closed:
                return
            if self._executor is not None:
                self._executor.shutdown(wait=True)
                self._executor = None
            self._closed = True

    def __enter__(self) -> "ProxyEngine":
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.close()

    @property
    def frames_processed(self) -> int:
        with self._lock:
            return self._frames

    # ============== Callback Registration ==============

    def on_frame(self, callback: FrameCallback) -> FrameCallback:
        """Register a callback receiving every FrameResult. Usable as a decorator."""
        self._frame_callbacks.append(callback)
        return callback

    def on_proxy_created(self, callback: ProxyCallback) -> ProxyCallback:
        self._created_callbacks.append(callback)
        return callback

    def on_proxy_purged(self, callback: ProxyCallback) -> ProxyCallback:
        self._purged_callbacks.append(callback)
        return callback

    def on_proxies_merged(self, callback: MergeCallback) -> MergeCallback:
        """Register a callback receiving (kept_id, absorbed_id)."""
        self._merged_callbacks.append(callback)
        return callback

    def _emit(self, callbacks: List[Callable[..., None]], *args: Any) -> None:
        for cb in callbacks:
            try:
                cb(*args)
            except Exception:
                # Callback errors never abort the pipeline
                logger.exception(f"Error in callback {getattr(cb, '__name__', cb)!r}")

    # ============== Processing ==============

    def process_frame(self, frame: RgbdFrame) -> FrameResult:
        """
        Run the pipeline on one frame and update the superstructure.

        While the Manhattan warm-up is incomplete the frame is only
        collected; the last warm-up frame sets the axes and then runs the
        full pipeline.

        Raises:
            PxsValidationError: If the frame has no pose, does not match the
                engine's intrinsics, or the engine is closed
        """
        if frame.pose is None:
            raise PxsValidationError("frame has no camera pose")
        if frame.intrinsics != self.intrinsics:
            raise PxsValidationError(
                f"frame intrinsics {frame.intrinsics} differ from engine intrinsics {self.intrinsics}"
            )
        cfg = self.config
        with self._lock:
            if self._closed:
                raise PxsValidationError("engine is closed")
            state = self.state
            index = self._frames
            state.frame_index = index
            timings: Dict[str, float] = {}

            t0 = time.perf_counter()
            filtered = bilateral_prefilter(frame, cfg.prefilter_sigma, cfg.range_limit)
            t1 = time.perf_counter()
            cloud = estimate_normals(filtered, cfg.range_limit)
            t2 = time.perf_counter()
            timings["prefilter"] = t1 - t0
            timings["normals"] = t2 - t1

            result = FrameResult(index, timings, cloud, np.full(len(cloud), -1, dtype=np.int64))

            if not self._manhattan_done:
                self._warmup.append((cloud, frame.pose))
                if len(self._warmup) < cfg.manhattan_frames:
                    timings.update(track=0.0, detect=0.0, update=0.0)
                    return self._finish(result)
                clouds = [c for c, _ in self._warmup]
                poses = [p for _, p in self._warmup]
                state.world_axes, state.manhattan_ok = init_manhattan(clouds, poses, cfg, self._rng)
                self._manhattan_done = True
                self._warmup.clear()

            tracked = track(state, cloud, frame.pose, cfg, self._executor)
            result.owner = tracked.owner
            t3 = time.perf_counter()
            timings["track"] = t3 - t2

            created = self._detect_and_register(cloud, tracked.residual, frame, result.owner)
            result.created = [p.id for p in created]
            t4 = time.perf_counter()
            timings["detect"] = t4 - t3

            merges = merge_similar(state, cfg)
            absorbed = {b: a for a, b in merges}
            supported = set()
            for pid in tracked.supported:
                while pid in absorbed:
                    pid = absorbed[pid]
                supported.add(pid)
            for a, b in merges:
                result.owner[result.owner == b] = a
            purged = lifecycle_step(state, supported, cfg)
            timings["update"] = time.perf_counter() - t4

            result.supported = sorted(supported)
            result.merged = merges
            result.purged = [p.id for p in purged]

            for proxy in created:
                if state.get(proxy.id) is not None:
                    self._emit(self._created_callbacks, proxy)
            for a, b in merges:
                self._emit(self._merged_callbacks, a, b)
            for proxy in purged:
                self._emit(self._purged_callbacks, proxy)
            return self._finish(result)

    def _finish(self, result: FrameResult) -> FrameResult:
        result.proxy_count = len(self.state.proxies)
        self._frames += 1
        logger.debug(
            f"Frame {result.index}: {result.proxy_count} proxies, {format_timings(result.timings)}"
        )
        self._emit(self._frame_callbacks, result)
        return result

    def _detect_and_register(
        self,
        cloud: OrientedPointCloud,
        residual: np.ndarray,
        frame: RgbdFrame,
        owner: np.ndarray,
    ) -> List[Proxy]:
        """Detect shapes on unclaimed samples and register them as proxies."""
        cfg = self.config
        idx = np.nonzero(residual)[0]
        rest = cloud.subset(idx)
        # Minimum support is relative to the whole frame
        params = cfg.detection_params(len(cloud))
        if len(rest) < params.min_inliers:
            return []
        pose = frame.pose
        created = []
        for shape, inliers in detect_shapes(rest, params, self._rng, self._executor):
            positions = pose.apply(rest.positions[inliers])
            proxy = register_candidate(
                self.state,
                shape.transformed(pose),
                positions,
                rest.colors[inliers],
                rest.positions[inliers, 2],
                pose.origin,
                cfg,
            )
            owner[idx[inliers]] = proxy.id
            created.append(proxy)
        return created

    def process(self, frames: Iterable[RgbdFrame]) -> List[FrameResult]:
        return [self.process_frame(f) for f in frames]


# ============== Pipeline driver ==============


@dataclass
class PipelineOutputs:
    """
    Optional stages of ``run_pipeline``.

    Attributes:
        enhanced: Directory receiving filtered frames (dataset layout)
        archive: Path of the compressed superstructure
        mesh: Directory receiving the OBJ export
        fill: Run hole filling before compression and meshing
        metrics: Measure PSNR and compression ratios (needs a re-iterable source)
    """
    enhanced: Optional[Path] = None
    archive: Optional[Path] = None
    mesh: Optional[Path] = None
    fill: bool = False
    metrics: bool = False


@dataclass
class PipelineReport:
    frames: int = 0
    proxies: int = 0
    created: int = 0
    merged: int = 0
    purged: int = 0
    manhattan_ok: bool = False
    seconds: float = 0.0
    filled: Optional[FillReport] = None
    archive_bytes: Optional[int] = None
    mesh_files: List[str] = field(default_factory=list)
    psnr: Optional[float] = None
    frame_ratio: Optional[float] = None
    scene_ratio: Optional[float] = None
    frame_reports: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frames": self.frames,
            "proxies": self.proxies,
            "created": self.created,
            "merged": self.merged,
            "purged": self.purged,
            "manhattan_ok": self.manhattan_ok,
            "seconds": round(self.seconds, 4),
            "filled_cells": None if self.filled is None else self.filled.total,
            "archive_bytes": self.archive_bytes,
            "mesh_files": list(self.mesh_files),
            "psnr": self.psnr,
            "frame_ratio": self.frame_ratio,
            "scene_ratio": self.scene_ratio,
        }


def _first_intrinsics(source: Iterable[RgbdFrame]) -> Optional[CameraIntrinsics]:
    intrinsics = getattr(source, "intrinsics", None)
    if intrinsics is not None:
        return intrinsics
    if isinstance(source, (list, tuple)) and source:
        return source[0].intrinsics
    return None


def measure_compression(
    state: SceneState, frames: Iterable[RgbdFrame], peak: float, quant_step: float
) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """
    Mean PSNR and mean frame ratio of re-synthesized frames, and the scene ratio.

    Frames without a reconstructable pixel are left out of the means.
    """
    psnrs, ratios = [], []
    count = 0
    intrinsics = state.intrinsics
    for frame in frames:
        count += 1
        intrinsics = frame.intrinsics
        recon = decompress_frame(state, frame.intrinsics, frame.pose)
        try:
            psnrs.append(psnr(frame.depth, recon, peak).psnr)
        except PxsMetricError:
            logger.debug(f"Frame {frame.index}: no reconstructed pixel, skipped in PSNR")
        try:
            ratios.append(frame_ratio(state, visible_proxies(state, frame.intrinsics, frame.pose), frame.intrinsics, quant_step))
        except PxsMetricError:
            pass
    finite = [p for p in psnrs if np.isfinite(p)]
    mean_psnr = float(np.mean(finite)) if finite else (float("inf") if psnrs else None)
    mean_ratio = float(np.mean(ratios)) if ratios else None
    whole = scene_ratio(state, count, intrinsics, quant_step) if count and intrinsics is not None else None
    return mean_psnr, mean_ratio, whole


def run_pipeline(
    source: Iterable[RgbdFrame],
    config: PipelineConfig = DEFAULT_CONFIG,
    outputs: Optional[PipelineOutputs] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
    on_frame: Optional[FrameCallback] = None,
) -> Tuple[SceneState, PipelineReport]:
    """
    Build the superstructure over a whole stream and produce the requested outputs.

    Args:
        source: Frames (a Dataset, a list, or any iterable)
        intrinsics: Needed only for an empty one-shot iterator

    Raises:
        PxsValidationError: If metrics are requested on a one-shot iterator
        PxsIOError: If an output cannot be written
    """
    outputs = outputs or PipelineOutputs()
    if outputs.metrics and iter(source) is source:
        raise PxsValidationError("metrics need a re-iterable frame source")
    report = PipelineReport()
    start = time.perf_counter()
    intrinsics = intrinsics or _first_intrinsics(source)
    engine: Optional[ProxyEngine] = None
    enhanced: List[RgbdFrame] = []

    try:
        for frame in source:
            if engine is None:
                engine = ProxyEngine(intrinsics or frame.intrinsics, config)
                if on_frame is not None:
                    engine.on_frame(on_frame)
            result = engine.process_frame(frame)
            report.created += len(result.created)
            report.merged += len(result.merged)
            report.purged += len(result.purged)
            report.frame_reports.append(result.to_dict())
            if outputs.enhanced is not None:
                enhanced.append(filter_frame(frame, engine.state, result.cloud, result.owner, config))
        if engine is None:
            engine = ProxyEngine(intrinsics or CameraIntrinsics.from_degrees(60.0, 45.0, 320, 240), config)
        state = engine.state
    finally:
        if engine is not None:
            engine.close()

    report.frames = engine.frames_processed
    report.manhattan_ok = state.manhattan_ok
    if outputs.fill:
        report.filled = fill_holes(state, config)
    if outputs.enhanced is not None:
        write_dataset(outputs.enhanced, engine.intrinsics, enhanced)
    if outputs.archive is not None:
        report.archive_bytes = write_archive(outputs.archive, state, config.quant_step)
    if outputs.mesh is not None:
        exported = export_scene(state, outputs.mesh)
        report.mesh_files = [str(exported.obj_path), str(exported.mtl_path)] + [str(p) for p in exported.textures]
    if outputs.metrics and report.frames:
        report.psnr, report.frame_ratio, report.scene_ratio = measure_compression(
            state, source, config.psnr_peak, config.quant_step
        )
    report.proxies = len(state.proxies)
    report.seconds = time.perf_counter() - start
    logger.info(
        f"Processed {report.frames} frame(s) into {report.proxies} proxies in {report.seconds:.2f}s"
    )
    return state, report


# ============== Benchmark ==============


@dataclass
class StageTiming:
    mean: float
    median: float
    p95: float

    def to_dict(self) -> Dict[str, float]:
        return {"mean_ms": self.mean * 1000.0, "median_ms": self.median * 1000.0, "p95_ms": self.p95 * 1000.0}


@dataclass
class BenchReport:
    """Per-stage and total per-frame wall time; empty when no frame was processed."""
    frames: int = 0
    proxies: int = 0
    stages: Dict[str, StageTiming] = field(default_factory=dict)
    total: Optional[StageTiming] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frames": self.frames,
            "proxies": self.proxies,
            "stages": {k: v.to_dict() for k, v in self.stages.items()},
            "total": None if self.total is None else self.total.to_dict(),
        }


def _timing(samples: List[float]) -> StageTiming:
    arr = np.asarray(samples, dtype=np.float64)
    return StageTiming(float(arr.mean()), float(np.median(arr)), float(np.percentile(arr, 95)))


def bench(source: Iterable[RgbdFrame], config: PipelineConfig = DEFAULT_CONFIG) -> BenchReport:
    """Time the per-frame pipeline over a stream."""
    per_stage: Dict[str, List[float]] = {s: [] for s in STAGES}
    totals: List[float] = []
    engine: Optional[ProxyEngine] = None
    try:
        for frame in source:
            if engine is None:
                engine = ProxyEngine(frame.intrinsics, config)
            result = engine.process_frame(frame)
            for stage in STAGES:
                per_stage[stage].append(result.timings.get(stage, 0.0))
            totals.append(result.total_time)
    finally:
        if engine is not None:
            engine.close()
    if not totals:
        logger.warning("Benchmark source has no frames")
        return BenchReport()
    report = BenchReport(
        frames=len(totals),
        proxies=len(engine.state.proxies),
        stages={s: _timing(v) for s, v in per_stage.items()},
        total=_timing(totals),
    )
    logger.info(f"Benchmark: {report.frames} frame(s), mean {report.total.mean * 1000.0:.1f} ms/frame")
    return report

