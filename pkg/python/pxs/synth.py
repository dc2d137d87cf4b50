"""
Analytic synthetic RGB-D scenes.

Scenes are made of planes, cylinders and spheres with rectangular extents
in their own (u, v) coordinates, optional rectangular holes, and
parametric textures. Frames are rendered by exact ray casting along a
camera path, with optional Gaussian depth noise, and come with a per-pixel
shape label map for evaluation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from pxs.codec import decompress_frame
from pxs.dataset import write_dataset
from pxs.frame import CameraIntrinsics, CameraPose, NoiseModel, RgbdFrame, pixel_rays
from pxs.proxy import SceneState
from pxs.scenefile import Block, SceneDescription, SceneParseError, parse_file, parse_scene
from pxs.shape import ShapeModel, intersect_rays, parameterize, unparameterize
from pxs.types import PxsValidationError, ShapeKind

logger = logging.getLogger(__name__)

DEFAULT_INTRINSICS = CameraIntrinsics.from_degrees(60.0, 45.0, 320, 240)
MAX_RANGE = 10.0

Range = Tuple[float, float]


# ============== Textures ==============


@dataclass(frozen=True)
class Texture:
    """
    Parametric color function of shape-local (u, v).

    kinds: ``solid`` (color_a), ``checker`` (squares of side ``scale``
    alternating a / b), ``gradient`` (a to b linearly along u over ``scale``
    meters, repeating).
    """
    kind: str = "solid"
    color_a: Tuple[int, int, int] = (180, 180, 180)
    color_b: Tuple[int, int, int] = (60, 60, 60)
    scale: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in ("solid", "checker", "gradient"):
            raise PxsValidationError(f"unknown texture kind '{self.kind}'")
        if not self.scale > 0:
            raise PxsValidationError(f"texture scale must be positive, got {self.scale}")

    def __call__(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        a = np.asarray(self.color_a, dtype=np.float64)
        b = np.asarray(self.color_b, dtype=np.float64)
        if self.kind == "solid":
            out = np.broadcast_to(a, u.shape + (3,))
        elif self.kind == "checker":
            odd = (np.floor(u / self.scale) + np.floor(v / self.scale)) % 2 == 1
            out = np.where(odd[..., None], b, a)
        else:
            t = np.mod(u / self.scale, 1.0)
            out = a + t[..., None] * (b - a)
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ============== Scene ==============


@dataclass(frozen=True, eq=False)
class SceneShape:
    """
    One ground-truth shape.

    ``u_range``/``v_range`` of None mean unbounded (cylinder u and sphere
    coordinates are always bounded by their domain). Holes are
    (u0, u1, v0, v1) rectangles cut out of the extent.
    """
    name: str
    shape: ShapeModel
    u_range: Optional[Range] = None
    v_range: Optional[Range] = None
    texture: Texture = field(default_factory=Texture)
    holes: Tuple[Tuple[float, float, float, float], ...] = ()

    def __post_init__(self) -> None:
        for name in ("u_range", "v_range"):
            r = getattr(self, name)
            if r is not None and not r[1] > r[0]:
                raise PxsValidationError(f"shape '{self.name}': degenerate {name} {r}")
        if self.shape.kind == ShapeKind.PLANE and (self.u_range is None or self.v_range is None):
            raise PxsValidationError(f"plane '{self.name}' needs u and v extents")
        if self.shape.kind == ShapeKind.CYLINDER and self.v_range is None:
            raise PxsValidationError(f"cylinder '{self.name}' needs a v extent")

    def contains(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Whether (u, v) lies inside the extent and outside every hole."""
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        inside = np.ones(u.shape, dtype=bool)
        if self.u_range is not None:
            inside &= (u >= self.u_range[0]) & (u <= self.u_range[1])
        if self.v_range is not None:
            inside &= (v >= self.v_range[0]) & (v <= self.v_range[1])
        for u0, u1, v0, v1 in self.holes:
            inside &= ~((u > u0) & (u < u1) & (v > v0) & (v < v1))
        return inside

    def extent(self) -> Tuple[Range, Range]:
        """Bounded (u, v) ranges of the shape."""
        r = self.shape.radius
        if self.shape.kind == ShapeKind.SPHERE:
            half = 0.5 * math.pi * r
            return (-half, half), (-half, half)
        u_range = self.u_range
        if self.shape.kind == ShapeKind.CYLINDER and u_range is None:
            u_range = (0.0, 2.0 * math.pi * r)
        return u_range, self.v_range

    def surface_samples(self, step: float) -> np.ndarray:
        """World points on a regular (u, v) grid over the extent (holes removed)."""
        (u0, u1), (v0, v1) = self.extent()
        u = np.arange(u0 + 0.5 * step, u1, step)
        v = np.arange(v0 + 0.5 * step, v1, step)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        keep = self.contains(uu, vv)
        points, _ = unparameterize(self.shape, uu[keep], vv[keep])
        return points


@dataclass(eq=False)
class SyntheticScene:
    """
    Shapes, a camera path and a noise setting.

    ``noise`` is the depth noise standard deviation in meters; with
    ``axial`` it is replaced by the depth-dependent sensor model.
    """
    shapes: List[SceneShape]
    path: List[CameraPose]
    noise: float = 0.0
    axial: bool = False
    seed: int = 0
    name: str = "scene"

    def __post_init__(self) -> None:
        if not self.path:
            raise PxsValidationError("scene camera path must not be empty")
        if self.noise < 0:
            raise PxsValidationError(f"noise must be >= 0, got {self.noise}")

    def __len__(self) -> int:
        return len(self.path)

    def index_of(self, name: str) -> int:
        for k, s in enumerate(self.shapes):
            if s.name == name:
                return k
        raise KeyError(name)

    def noise_sigma(self, z: np.ndarray) -> np.ndarray:
        if self.axial:
            return NoiseModel().threshold(np.maximum(z, 1e-9))
        return np.full(np.shape(z), self.noise)

    def noiseless(self) -> "SyntheticScene":
        return SyntheticScene(self.shapes, self.path, 0.0, False, self.seed, self.name)


# ============== Camera paths ==============


def static_path(eye: Sequence[float], target: Sequence[float], frames: int) -> List[CameraPose]:
    pose = CameraPose.look_at(eye, target)
    return [pose] * frames


def orbit_path(
    center: Sequence[float],
    radius: float,
    height: float,
    frames: int,
    start_deg: float = 0.0,
    end_deg: float = 360.0,
    target: Optional[Sequence[float]] = None,
) -> List[CameraPose]:
    """Camera circling ``center`` at ``radius`` and ``height``, looking at ``target`` (default center)."""
    c = np.asarray(center, dtype=np.float64)
    look = c if target is None else np.asarray(target, dtype=np.float64)
    angles = np.radians(np.linspace(start_deg, end_deg, frames, endpoint=frames == 1))
    return [
        CameraPose.look_at((c[0] + radius * math.cos(a), c[1] + radius * math.sin(a), height), look)
        for a in angles
    ]


def dolly_path(
    start: Sequence[float], end: Sequence[float], target: Sequence[float], frames: int
) -> List[CameraPose]:
    """Camera moving on a straight line while looking at ``target``."""
    s = np.asarray(start, dtype=np.float64)
    e = np.asarray(end, dtype=np.float64)
    ts = np.linspace(0.0, 1.0, frames) if frames > 1 else np.zeros(1)
    return [CameraPose.look_at(s + t * (e - s), target) for t in ts]


# ============== Rendering ==============


@dataclass
class RenderedFrame:
    """A rendered frame and its per-pixel shape indices (-1 for background)."""
    frame: RgbdFrame
    labels: np.ndarray
    truth: np.ndarray


def _cast(scene: SyntheticScene, origin: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest valid hit per ray: (t, shape index, rgb)."""
    n = len(dirs)
    best = np.full(n, np.inf)
    labels = np.full(n, -1, dtype=np.int64)
    colors = np.zeros((n, 3), dtype=np.uint8)
    for k, item in enumerate(scene.shapes):
        roots = intersect_rays(item.shape, origin, dirs)
        for col in range(roots.shape[1]):
            t = roots[:, col]
            cand = np.nonzero((t > 1e-9) & (t < best))[0]
            if len(cand) == 0:
                continue
            hits = origin + t[cand, None] * dirs[cand]
            u, v = parameterize(item.shape, hits)
            u, v = np.atleast_1d(u), np.atleast_1d(v)
            ok = item.contains(u, v)
            cand = cand[ok]
            best[cand] = t[cand]
            labels[cand] = k
            colors[cand] = item.texture(u[ok], v[ok])
    return best, labels, colors


def render(
    scene: SyntheticScene,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    frame_index: int = 0,
) -> RenderedFrame:
    """
    Ray cast one frame of the camera path.

    Depth is the camera z of the nearest hit inside a shape's extent (0
    beyond ``MAX_RANGE`` or on a miss), perturbed by N(0, sigma) when the
    scene is noisy. Noise depends only on (seed, frame_index).

    Raises:
        PxsValidationError: If frame_index is outside the path
    """
    if not 0 <= frame_index < len(scene.path):
        raise PxsValidationError(f"frame index {frame_index} outside path of {len(scene.path)}")
    pose = scene.path[frame_index]
    rays = pixel_rays(intrinsics).reshape(-1, 3)
    t, labels, colors = _cast(scene, pose.origin, pose.rotate(rays))

    hit = np.isfinite(t) & (t <= MAX_RANGE)
    truth = np.where(hit, t, 0.0)
    depth = truth.copy()
    if hit.any() and (scene.noise > 0 or scene.axial):
        rng = np.random.default_rng([scene.seed, frame_index])
        noise = rng.standard_normal(len(depth)) * scene.noise_sigma(truth)
        depth = np.where(hit, np.maximum(truth + noise, 1e-3), 0.0)
    labels = np.where(hit, labels, -1)
    colors[~hit] = 0

    shape = intrinsics.shape
    frame = RgbdFrame(depth.reshape(shape), colors.reshape(shape + (3,)), intrinsics, pose, frame_index)
    return RenderedFrame(frame, labels.reshape(shape), truth.reshape(shape))


def render_sequence(
    scene: SyntheticScene,
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    frames: Optional[int] = None,
) -> Iterator[RenderedFrame]:
    """Render the first ``frames`` poses of the path (all by default)."""
    count = len(scene.path) if frames is None else min(frames, len(scene.path))
    for k in range(count):
        yield render(scene, intrinsics, k)


class SceneStream:
    """
    Re-iterable frame source over a synthetic scene, rendered lazily.

    Behaves like a ``Dataset``: has ``intrinsics``, ``len()`` and yields
    ``RgbdFrame`` objects.
    """

    def __init__(
        self,
        scene: SyntheticScene,
        intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
        frames: Optional[int] = None,
    ):
        self.scene = scene
        self.intrinsics = intrinsics
        self._count = len(scene.path) if frames is None else max(0, min(frames, len(scene.path)))

    def __len__(self) -> int:
        return self._count

    def frame(self, index: int) -> RgbdFrame:
        return render(self.scene, self.intrinsics, index).frame

    def __iter__(self) -> Iterator[RgbdFrame]:
        for k in range(self._count):
            yield self.frame(k)


def write_synthetic_dataset(
    scene: SyntheticScene,
    root: Union[str, Path],
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS,
    frames: Optional[int] = None,
) -> Path:
    """Render a scene into the dataset directory layout."""
    rendered = [r.frame for r in render_sequence(scene, intrinsics, frames)]
    return write_dataset(root, intrinsics, rendered)


# ============== Evaluation ==============


@dataclass
class ShapeReport:
    """Recovery of one ground-truth shape."""
    name: str
    kind: ShapeKind
    detected: bool = False
    proxy_ids: List[int] = field(default_factory=list)
    normal_error: Optional[float] = None
    center_error: Optional[float] = None
    radius_error: Optional[float] = None
    coverage: float = 0.0
    depth_rmse: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "kind": self.kind.name.lower(),
            "detected": self.detected,
            "proxy_ids": list(self.proxy_ids),
            "normal_error": self.normal_error,
            "center_error": self.center_error,
            "radius_error": self.radius_error,
            "coverage": self.coverage,
            "depth_rmse": self.depth_rmse,
        }


@dataclass
class EvaluationReport:
    shapes: List[ShapeReport]

    @property
    def detected_count(self) -> int:
        return sum(1 for s in self.shapes if s.detected)

    def get(self, name: str) -> ShapeReport:
        for s in self.shapes:
            if s.name == name:
                return s
        raise KeyError(name)


MATCH_ANGLE_DEG = 10.0
MATCH_OFFSET = 0.05
MATCH_RADIUS = 0.05


def _parameter_errors(truth: SceneShape, proxy_shape: ShapeModel, anchor: np.ndarray) -> Tuple[float, float, Optional[float]]:
    """(axis/normal angle, offset or center distance, radius error)."""
    t = truth.shape
    if t.kind == ShapeKind.PLANE:
        angle = math.acos(min(1.0, abs(float(np.dot(t.axis_z, proxy_shape.axis_z)))))
        offset = abs(float(np.dot(proxy_shape.axis_z, anchor - proxy_shape.origin)))
        return angle, offset, None
    if t.kind == ShapeKind.CYLINDER:
        angle = math.acos(min(1.0, abs(float(np.dot(t.axis_z, proxy_shape.axis_z)))))
        d = proxy_shape.origin - t.origin
        off_axis = d - np.dot(d, t.axis_z) * t.axis_z
        return angle, float(np.linalg.norm(off_axis)), abs(proxy_shape.radius - t.radius)
    return 0.0, float(np.linalg.norm(proxy_shape.origin - t.origin)), abs(proxy_shape.radius - t.radius)


def evaluate(
    state: SceneState,
    scene: SyntheticScene,
    intrinsics: Optional[CameraIntrinsics] = None,
    frame_indices: Optional[Sequence[int]] = None,
    cell_size: float = 0.05,
) -> EvaluationReport:
    """
    Compare a superstructure with the scene's ground truth.

    A proxy matches a true shape when its kind agrees and its parameters
    are within 10 degrees, 5 cm (and 5 cm of radius). Coverage is the share
    of the true extent, sampled every ``cell_size``, falling in activated or
    filled cells of matching proxies. With ``intrinsics``, depth RMSE is
    measured between decompressed frames and noiseless renders over pixels
    of the shape that the proxies cover.
    """
    reports = []
    cos_max = math.cos(math.radians(MATCH_ANGLE_DEG))
    for k, truth in enumerate(scene.shapes):
        report = ShapeReport(truth.name, truth.shape.kind)
        samples = truth.surface_samples(cell_size)
        if len(samples) == 0:
            reports.append(report)
            continue
        anchor = samples[len(samples) // 2]
        covered = np.zeros(len(samples), dtype=bool)
        best: Optional[Tuple[int, Tuple[float, float, Optional[float]]]] = None
        best_count = -1
        for proxy in sorted(state.proxies, key=lambda p: p.id):
            if proxy.kind != truth.shape.kind:
                continue
            angle, offset, radius_err = _parameter_errors(truth, proxy.shape, anchor)
            if angle > math.acos(cos_max) or offset > MATCH_OFFSET:
                continue
            if radius_err is not None and radius_err > MATCH_RADIUS:
                continue
            u, v = parameterize(proxy.shape, samples)
            ci, cj = proxy.spec.cell_of(np.atleast_1d(u), np.atleast_1d(v))
            mine = np.array(
                [bool(c is not None and c.emitting) for c in (proxy.cells.get((int(a), int(b))) for a, b in zip(ci, cj))]
            )
            covered |= mine
            report.proxy_ids.append(proxy.id)
            if int(mine.sum()) > best_count:
                best_count = int(mine.sum())
                best = (proxy.id, (angle, offset, radius_err))
        report.coverage = float(covered.mean())
        if best is not None:
            report.detected = True
            report.normal_error, report.center_error, report.radius_error = best[1]
            if truth.shape.kind == ShapeKind.SPHERE:
                report.normal_error = None
        reports.append(report)

    if intrinsics is not None:
        indices = list(frame_indices) if frame_indices is not None else sorted({0, len(scene.path) // 2, len(scene.path) - 1})
        clean = scene.noiseless()
        errors: Dict[int, List[np.ndarray]] = {}
        for index in indices:
            truth_frame = render(clean, intrinsics, index)
            recon = decompress_frame(state, intrinsics, scene.path[index])
            both = (recon > 0.0) & (truth_frame.truth > 0.0)
            for k in range(len(scene.shapes)):
                sel = both & (truth_frame.labels == k)
                if sel.any():
                    errors.setdefault(k, []).append(recon[sel] - truth_frame.truth[sel])
        for k, report in enumerate(reports):
            if k in errors:
                diff = np.concatenate(errors[k])
                report.depth_rmse = float(np.sqrt(np.mean(diff ** 2)))

    logger.info(f"Evaluation: {sum(r.detected for r in reports)}/{len(reports)} shapes detected")
    return EvaluationReport(reports)


# ============== Scene files ==============


def _vector(block: Block, key: str, n: int, default: Optional[Sequence[float]] = None) -> Optional[np.ndarray]:
    values = block.get(key)
    if values is None:
        if default is None:
            return None
        return np.asarray(default, dtype=np.float64)
    if len(values) != n or not all(isinstance(x, (int, float)) for x in values):
        raise SceneParseError(f"'{block.name}.{key}' needs {n} numbers", block.line)
    return np.asarray(values, dtype=np.float64)


def _required(block: Block, key: str, n: int) -> np.ndarray:
    vec = _vector(block, key, n)
    if vec is None:
        raise SceneParseError(f"'{block.name}' is missing '{key}'", block.line)
    return vec


def _scalar(block: Block, key: str, default: Optional[float] = None) -> float:
    vec = _vector(block, key, 1, None if default is None else [default])
    if vec is None:
        raise SceneParseError(f"'{block.name}' is missing '{key}'", block.line)
    return float(vec[0])


def _range(block: Block, key: str) -> Optional[Range]:
    vec = _vector(block, key, 2)
    return None if vec is None else (float(vec[0]), float(vec[1]))


def _texture(block: Block) -> Texture:
    values = block.get("texture")
    if values is None:
        return Texture()
    kind = values[0]
    nums = values[1:]
    try:
        if kind == "solid" and len(nums) == 3:
            return Texture("solid", tuple(int(x) for x in nums))
        if kind in ("checker", "gradient") and len(nums) in (6, 7):
            scale = float(nums[6]) if len(nums) == 7 else 0.5
            return Texture(kind, tuple(int(x) for x in nums[:3]), tuple(int(x) for x in nums[3:6]), scale)
    except (TypeError, ValueError, PxsValidationError):
        pass
    raise SceneParseError(f"'{block.name}': bad texture {values}", block.line)


def _shape_from_block(block: Block) -> SceneShape:
    try:
        if block.kind == "plane":
            shape = ShapeModel.plane(
                _required(block, "origin", 3), _required(block, "normal", 3), _vector(block, "x_axis", 3)
            )
        elif block.kind == "cylinder":
            shape = ShapeModel.cylinder(
                _required(block, "origin", 3),
                _required(block, "axis", 3),
                _scalar(block, "radius"),
                _vector(block, "x_axis", 3),
            )
        else:
            shape = ShapeModel.sphere(
                _required(block, "center", 3),
                _scalar(block, "radius"),
                _vector(block, "zenith", 3, (0.0, 0.0, 1.0)),
                _vector(block, "x_axis", 3),
            )
        holes = []
        for values in block.repeated.get("hole", []):
            if len(values) != 4:
                raise SceneParseError(f"'{block.name}.hole' needs 4 numbers", block.line)
            holes.append(tuple(float(x) for x in values))
        return SceneShape(block.name, shape, _range(block, "u"), _range(block, "v"), _texture(block), tuple(holes))
    except PxsValidationError as e:
        raise SceneParseError(f"'{block.name}': {e}", block.line) from None


def _path_from_block(block: Optional[Block], frames: int) -> List[CameraPose]:
    if block is None:
        raise SceneParseError("scene has no camera path", 0)
    try:
        if block.kind == "static":
            return static_path(_required(block, "eye", 3), _required(block, "target", 3), frames)
        if block.kind == "orbit":
            return orbit_path(
                _required(block, "center", 3),
                _scalar(block, "radius"),
                _scalar(block, "height"),
                frames,
                _scalar(block, "start_deg", 0.0),
                _scalar(block, "end_deg", 360.0),
                _vector(block, "target", 3),
            )
        return dolly_path(_required(block, "start", 3), _required(block, "end", 3), _required(block, "target", 3), frames)
    except PxsValidationError as e:
        raise SceneParseError(f"path: {e}", block.line) from None


def scene_from_description(desc: SceneDescription, frames: Optional[int] = None) -> SyntheticScene:
    """Build a scene; ``frames`` overrides the ``@frames`` annotation."""
    ann = desc.annotations
    count = int(frames if frames is not None else ann.get("frames", 100))
    if count < 1:
        raise SceneParseError(f"frame count must be >= 1, got {count}", 0)
    noise = ann.get("noise", 0.0)
    axial = noise == "axial"
    return SyntheticScene(
        shapes=[_shape_from_block(b) for b in desc.shapes],
        path=_path_from_block(desc.path, count),
        noise=0.0 if axial else float(noise),
        axial=axial,
        seed=int(ann.get("seed", 0)),
        name=str(ann.get("name", "scene")),
    )


def load_scene(path: Union[str, Path], frames: Optional[int] = None) -> SyntheticScene:
    """Parse and build a scene file."""
    scene = scene_from_description(parse_file(path), frames)
    logger.info(f"Loaded scene '{scene.name}' with {len(scene.shapes)} shape(s), {len(scene.path)} frame(s)")
    return scene


def scene_from_text(text: str, frames: Optional[int] = None) -> SyntheticScene:
    return scene_from_description(parse_scene(text), frames)


# ============== Stock scenes ==============


def room_scene(frames: int = 100, noise: float = 0.002, seed: int = 0) -> SyntheticScene:
    """
    Room corner: floor, two walls, a pillar (r = 0.3 m) and a ball (r = 0.5 m),
    seen from a slow dolly.
    """
    shapes = [
        SceneShape("floor", ShapeModel.plane((0, 0, 0), (0, 0, 1), (1, 0, 0)), (0.0, 4.0), (0.0, 4.0),
                   Texture("checker", (200, 190, 170), (120, 110, 100), 0.5)),
        SceneShape("wall_x", ShapeModel.plane((0, 0, 0), (1, 0, 0), (0, 1, 0)), (0.0, 4.0), (0.0, 2.5),
                   Texture("gradient", (220, 220, 200), (150, 160, 190), 1.0)),
        SceneShape("wall_y", ShapeModel.plane((0, 4, 0), (0, -1, 0), (1, 0, 0)), (0.0, 4.0), (0.0, 2.5),
                   Texture("solid", (200, 180, 160))),
        SceneShape("pillar", ShapeModel.cylinder((2.6, 2.6, 0), (0, 0, 1), 0.3, (1, 0, 0)), None, (0.0, 1.5),
                   Texture("checker", (60, 120, 200), (30, 60, 100), 0.2)),
        SceneShape("ball", ShapeModel.sphere((1.3, 2.6, 0.5), 0.5), texture=Texture("solid", (200, 60, 50))),
    ]
    path = dolly_path((3.6, 0.4, 1.7), (3.2, 0.3, 1.6), (1.5, 2.6, 0.6), frames)
    return SyntheticScene(shapes, path, noise=noise, seed=seed, name="room")


def plane_scene(
    frames: int = 30,
    distance: float = 2.0,
    noise: float = 0.0,
    seed: int = 0,
    half_size: float = 3.0,
    holes: Sequence[Tuple[float, float, float, float]] = (),
) -> SyntheticScene:
    """Fronto-parallel wall at ``distance`` in front of a static camera at the origin looking along +y."""
    wall = SceneShape(
        "wall",
        ShapeModel.plane((0.0, distance, 0.0), (0.0, -1.0, 0.0), (1.0, 0.0, 0.0)),
        (-half_size, half_size),
        (-half_size, half_size),
        Texture("checker", (220, 220, 220), (40, 40, 40), 0.25),
        tuple(holes),
    )
    path = static_path((0.0, 0.0, 0.0), (0.0, distance, 0.0), frames)
    return SyntheticScene([wall], path, noise=noise, seed=seed, name="plane")
