"""
PXS (Proxy Superstructure) Python Library

Builds a superstructure of geometric shape proxies (planes, cylinders,
spheres) from an RGB-D stream and uses it to denoise, de-flicker,
hole-fill, resample, compress and mesh the stream.

Example usage:
    >>> from pxs import ProxyEngine, load_dataset, export_scene
    >>>
    >>> dataset = load_dataset("recordings/office")
    >>> with ProxyEngine(dataset.intrinsics) as engine:
    ...     @engine.on_proxy_created
    ...     def created(proxy):
    ...         print(f"new {proxy!r}")
    ...
    ...     for frame in dataset:
    ...         engine.process_frame(frame)
    ...
    ...     export_scene(engine.state, "out/")
"""
import logging

__version__ = "0.1.0"
__author__ = "PXS Team"

# Enums
from pxs.types import ErrorCode, LogLevel, ProxyStatus, ShapeKind

# Exceptions
from pxs.types import (
    PxsConfigError,
    PxsDatasetError,
    PxsDecodeError,
    PxsDomainError,
    PxsError,
    PxsIOError,
    PxsMetricError,
    PxsValidationError,
    PxsVersionError,
)

# Configuration
from pxs.config import DEFAULT_CONFIG, PipelineConfig, load_config

# Frames and geometry
from pxs.frame import (
    CameraIntrinsics,
    CameraPose,
    NoiseModel,
    OrientedPointCloud,
    RgbdFrame,
    bilateral_prefilter,
    estimate_normals,
    noise_threshold,
    project,
    unproject,
)
from pxs.dataset import Dataset, load_dataset, write_dataset
from pxs.shape import GridSpec, ShapeModel, parameterize, project_along_ray, unparameterize
from pxs.detect import DetectionParams, detect_shapes

# Superstructure
from pxs.stats import Cell, ColorGrid, RunningMoments, SmoothedHistogram, VisitWindow
from pxs.proxy import Proxy, SceneState, TrackResult, init_manhattan, merge_similar, register_candidate, track
from pxs.process import FillReport, deflicker, fill_holes, filter_frame, filter_points, resample
from pxs.codec import decode, decompress_frame, encode, psnr, read_archive, write_archive
from pxs.mesh import ProxyMesh, export_scene, load_obj, mesh_proxy
from pxs.engine import BenchReport, FrameResult, PipelineOutputs, PipelineReport, ProxyEngine, bench, run_pipeline

# Synthetic scenes
from pxs.synth import SyntheticScene, evaluate, load_scene, render

# Logging configuration
from pxs._logging import configure_logging

# Public API
__all__ = [
    # Version
    "__version__",

    # Enums
    "ErrorCode",
    "LogLevel",
    "ProxyStatus",
    "ShapeKind",

    # Exceptions
    "PxsError",
    "PxsValidationError",
    "PxsDomainError",
    "PxsDecodeError",
    "PxsVersionError",
    "PxsMetricError",
    "PxsDatasetError",
    "PxsConfigError",
    "PxsIOError",

    # Configuration
    "PipelineConfig",
    "DEFAULT_CONFIG",
    "load_config",

    # Frames and geometry
    "CameraIntrinsics",
    "CameraPose",
    "NoiseModel",
    "RgbdFrame",
    "OrientedPointCloud",
    "bilateral_prefilter",
    "estimate_normals",
    "noise_threshold",
    "project",
    "unproject",
    "Dataset",
    "load_dataset",
    "write_dataset",
    "ShapeModel",
    "GridSpec",
    "parameterize",
    "unparameterize",
    "project_along_ray",
    "DetectionParams",
    "detect_shapes",

    # Superstructure
    "Cell",
    "ColorGrid",
    "RunningMoments",
    "SmoothedHistogram",
    "VisitWindow",
    "Proxy",
    "SceneState",
    "TrackResult",
    "init_manhattan",
    "register_candidate",
    "track",
    "merge_similar",
    "filter_points",
    "filter_frame",
    "deflicker",
    "fill_holes",
    "FillReport",
    "resample",
    "encode",
    "decode",
    "write_archive",
    "read_archive",
    "decompress_frame",
    "psnr",
    "ProxyMesh",
    "mesh_proxy",
    "export_scene",
    "load_obj",

    # Engine
    "ProxyEngine",
    "FrameResult",
    "PipelineOutputs",
    "PipelineReport",
    "BenchReport",
    "run_pipeline",
    "bench",

    # Synthetic scenes
    "SyntheticScene",
    "render",
    "evaluate",
    "load_scene",

    # Utility functions
    "get_version",
    "set_log_level",
    "get_log_level",
    "configure_logging",
]


def get_version() -> str:
    """Get the PXS library version."""
    return __version__


def set_log_level(level: LogLevel) -> None:
    """
    Set the runtime log level of the ``pxs`` logger.

    Can be called at any time. Handlers are left alone; use
    ``configure_logging`` to attach one.

    Example:
        >>> from pxs import set_log_level, LogLevel
        >>> set_log_level(LogLevel.DEBUG)  # Per-frame timings
        >>> set_log_level(LogLevel.NONE)   # Silence
    """
    logging.getLogger("pxs").setLevel(LogLevel(level).to_logging())


def get_log_level() -> LogLevel:
    """Get the current runtime log level."""
    return LogLevel.from_logging(logging.getLogger("pxs").getEffectiveLevel())
