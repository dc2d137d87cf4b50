"""
Pipeline configuration.

Every tunable threshold of the pipeline lives on one flat dataclass,
``PipelineConfig``. Values can be loaded from a plain text file::

    # comments start with '#'
    cell_size = 0.05
    keep_threshold = 50
    up_hint = 0 0 1

Unknown keys and malformed values raise ``PxsConfigError`` naming the line.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

from pxs.types import PxsConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    """
    Tunable parameters of the proxy pipeline.

    Distances are meters, angles degrees, durations frames.
    """
    # Pre-filter and normals
    prefilter_sigma: float = 2.0
    range_limit: float = 0.20

    # Sensor noise model
    noise_a: float = 0.0012
    noise_b: float = 0.0019
    noise_z0: float = 0.4

    # Shape detection
    dist_epsilon: float = 0.008
    noise_scale: float = 2.0
    normal_epsilon_deg: float = 20.0
    success_probability: float = 0.99
    subset_size: int = 5000
    min_inlier_ratio: float = 0.025
    min_inliers_floor: int = 30
    candidates_per_round: int = 4
    neighborhood_radius: float = 0.3
    max_candidates: int = 2000
    max_shapes: int = 32

    # Tracking and lifecycle
    keep_threshold: int = 50
    purge_after: int = 30
    veteran_after: int = 300
    bounds_margin: float = 0.5

    # Merging
    merge_angle_deg: float = 10.0
    merge_offset: float = 0.05
    merge_radius: float = 0.02

    # Manhattan frame
    manhattan_frames: int = 1
    manhattan_tolerance_deg: float = 20.0
    up_hint: Tuple[float, float, float] = (0.0, 0.0, 1.0)

    # Grid and activation
    cell_size: float = 0.05
    color_res_log2: int = 2
    visit_window: int = 100
    activation_ratio: float = 0.25

    # Cell statistics
    slh_sigma_floor: float = 0.003
    slh_merge_width: float = 2.0
    mode_prominence: float = 0.10
    color_alpha: float = 3.0

    # Hole filling
    closing_size: int = 7
    extrapolate_min_deg: float = 60.0
    extrapolate_max_deg: float = 120.0
    extrapolate_gap: float = 1.0

    # Codec and metrics
    quant_step: float = 0.0005
    psnr_peak: float = 8.0

    # Execution
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        positive = (
            "prefilter_sigma", "range_limit", "dist_epsilon", "normal_epsilon_deg",
            "cell_size", "slh_sigma_floor", "slh_merge_width", "color_alpha",
            "quant_step", "psnr_peak", "neighborhood_radius", "merge_angle_deg",
            "merge_offset", "merge_radius",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise PxsConfigError(f"{name} must be positive, got {getattr(self, name)}")
        at_least_one = (
            "subset_size", "candidates_per_round", "max_candidates", "keep_threshold",
            "purge_after", "veteran_after", "manhattan_frames", "visit_window",
            "closing_size", "threads",
        )
        for name in at_least_one:
            if getattr(self, name) < 1:
                raise PxsConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.success_probability < 1.0:
            raise PxsConfigError(
                f"success_probability must be in (0, 1), got {self.success_probability}"
            )
        for name in ("min_inlier_ratio", "activation_ratio", "mode_prominence"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise PxsConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.color_res_log2 < 0:
            raise PxsConfigError(f"color_res_log2 must be >= 0, got {self.color_res_log2}")
        if self.noise_a < 0 or self.noise_b < 0 or self.noise_z0 < 0:
            raise PxsConfigError("noise coefficients must be non-negative")
        if not 0.0 <= self.extrapolate_min_deg <= self.extrapolate_max_deg <= 180.0:
            raise PxsConfigError("extrapolation angle band must satisfy 0 <= min <= max <= 180")
        if self.extrapolate_gap < 0:
            raise PxsConfigError(f"extrapolate_gap must be >= 0, got {self.extrapolate_gap}")
        if len(self.up_hint) != 3 or math.hypot(*self.up_hint) == 0.0:
            raise PxsConfigError(f"up_hint must be a non-zero 3-vector, got {self.up_hint}")

    def replace(self, **changes: Any) -> "PipelineConfig":
        """Validated copy with some fields changed."""
        unknown = set(changes) - _FIELD_TYPES.keys()
        if unknown:
            raise PxsConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def noise_model(self) -> "NoiseModel":
        from pxs.frame import NoiseModel
        return NoiseModel(self.noise_a, self.noise_b, self.noise_z0)

    def min_inliers(self, n_points: int) -> int:
        """Minimum support of a detected shape in a cloud of ``n_points``."""
        return max(self.min_inliers_floor, int(math.ceil(self.min_inlier_ratio * n_points)))

    def detection_params(self, n_points: int) -> "DetectionParams":
        """Detector parameters for a cloud of ``n_points`` samples."""
        from pxs.detect import DetectionParams
        return DetectionParams(
            min_inliers=self.min_inliers(n_points),
            dist_epsilon=self.dist_epsilon,
            normal_epsilon=math.radians(self.normal_epsilon_deg),
            success_probability=self.success_probability,
            subset_count=self.subset_size,
            candidates_per_round=self.candidates_per_round,
            neighborhood_radius=self.neighborhood_radius,
            max_candidates=self.max_candidates,
            max_shapes=self.max_shapes,
            noise=self.noise_model(),
            noise_scale=self.noise_scale,
            cell_size=self.cell_size,
        )


_FIELD_TYPES: Dict[str, Any] = {f.name: f.type for f in fields(PipelineConfig)}


def _convert(name: str, raw: str, line: int, source: str) -> Any:
    """Convert a raw config string to the declared type of ``name``."""
    declared = _FIELD_TYPES[name]
    try:
        if "Tuple" in str(declared):
            parts = raw.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError("expected 3 numbers")
            return tuple(float(p) for p in parts)
        if declared in ("int", int):
            return int(raw)
        return float(raw)
    except ValueError as e:
        raise PxsConfigError(f"{source}:{line}: bad value for '{name}': {raw!r} ({e})") from None


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    Parse ``key = value`` lines into a dict of typed values.

    Raises:
        PxsConfigError: On unknown keys or malformed lines
    """
    values: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise PxsConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise PxsConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        if not raw:
            raise PxsConfigError(f"{source}:{lineno}: missing value for '{key}'")
        values[key] = _convert(key, raw, lineno, source)
    return values


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> PipelineConfig:
    """
    Build a configuration from defaults, an optional file and overrides.

    Args:
        path: Config file (plain ``key = value`` lines)
        overrides: Values applied after the file (e.g. command-line flags);
            ``None`` entries are ignored

    Raises:
        PxsConfigError: If the file is missing or invalid
    """
    values: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise PxsConfigError(f"cannot read config file {path}: {e}") from None
        values.update(parse_config_text(text, str(path)))
        logger.debug(f"Loaded {len(values)} config value(s) from {path}")
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig().replace(**values)


DEFAULT_CONFIG = PipelineConfig()
