"""
Textured meshes from proxy grids.

Every activated or filled cell becomes a quad over its four corners; a
concave corner of three cells (an L-junction) gets a chamfer triangle over
half of the missing cell. Corners are displaced along the surface normal
by the average d_c of the incident cells (multimodal cells count as 0).
Cylinder seams and the folded border of the sphere's octahedral square are
welded by ``close_periodic``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from pxs.proxy import Proxy, SceneState
from pxs.shape import unparameterize
from pxs.types import PxsIOError, PxsValidationError, ShapeKind

logger = logging.getLogger(__name__)

WELD_TOLERANCE = 1e-6

Face = Tuple[int, ...]


@dataclass
class ProxyMesh:
    """
    Polygon mesh of one proxy.

    Attributes:
        vertices: (V, 3) positions
        uvs: (T, 2) texture coordinates in [0, 1]
        faces: Vertex indices per face (3 or 4, counter-clockwise seen from outside)
        face_uvs: Texture coordinate indices per face
        texture: (H, W, 3) uint8 image built from the color points
        proxy_id: Source proxy
    """
    vertices: np.ndarray
    uvs: np.ndarray
    faces: List[Face]
    face_uvs: List[Face]
    texture: np.ndarray
    proxy_id: int = -1
    welded: bool = False

    @property
    def quad_count(self) -> int:
        return sum(1 for f in self.faces if len(f) == 4)

    @property
    def triangle_count(self) -> int:
        return sum(1 for f in self.faces if len(f) == 3)


def _corner_heights(proxy: Proxy, corners: np.ndarray) -> np.ndarray:
    """Average d_c of the emitting cells around each lattice corner."""
    heights = np.zeros(len(corners))
    # cylinder columns wrap, so both seam corners average the same cells
    n_u = proxy.spec.index_bounds()[1] if proxy.spec.periodic else 0
    for n, (ci, cj) in enumerate(corners):
        total, count = 0.0, 0
        for di in (-1, 0):
            ii = int(ci + di)
            if n_u:
                ii %= n_u
            for dj in (-1, 0):
                cell = proxy.cells.get((ii, int(cj + dj)))
                if cell is None or not cell.emitting:
                    continue
                count += 1
                if cell.mode_count == 1:
                    total += cell.mean_distance
        heights[n] = total / count if count else 0.0
    return heights


def _corner_uv(proxy: Proxy, corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    w = proxy.spec.cell_size
    u = corners[:, 0] * w
    v = corners[:, 1] * w
    if proxy.spec.periodic or proxy.spec.closed:
        # Corners past the domain edge sit on the edge
        u = np.clip(u, *proxy.spec.u_range)
    if proxy.spec.closed:
        v = np.clip(v, *proxy.spec.v_range)
    return u, v


def _texture(proxy: Proxy) -> np.ndarray:
    """Color points laid out as (cells_v R) x (cells_u R) pixels, v pointing up."""
    mask, i_lo, j_lo = proxy.activation_mask()
    n_i, n_j = mask.shape
    res = proxy.spec.color_res
    image = np.zeros((n_i * res, n_j * res, 3), dtype=np.uint8)
    for li, lj in zip(*np.nonzero(mask)):
        cell = proxy.cells[(int(li + i_lo), int(lj + j_lo))]
        image[li * res:(li + 1) * res, lj * res:(lj + 1) * res] = cell.colors.to_uint8()
    # rows = v (top is the largest v), columns = u
    return np.ascontiguousarray(np.flipud(image.transpose(1, 0, 2)))


def mesh_proxy(proxy: Proxy) -> ProxyMesh:
    """
    Mesh the activated and filled cells of a proxy.

    Raises:
        PxsValidationError: If the proxy has no activated or filled cell
    """
    mask, i_lo, j_lo = proxy.activation_mask()
    if not mask.any():
        raise PxsValidationError(f"proxy {proxy.id} has no activated cell to mesh")
    n_i, n_j = mask.shape

    def emitting(i: int, j: int) -> bool:
        li, lj = i - i_lo, j - j_lo
        return 0 <= li < n_i and 0 <= lj < n_j and bool(mask[li, lj])

    index: Dict[Tuple[int, int], int] = {}
    corners: List[Tuple[int, int]] = []

    def vertex(ci: int, cj: int) -> int:
        key = (ci, cj)
        k = index.get(key)
        if k is None:
            k = len(corners)
            index[key] = k
            corners.append(key)
        return k

    faces: List[Face] = []
    cells = [(int(li + i_lo), int(lj + j_lo)) for li, lj in zip(*np.nonzero(mask))]
    for i, j in cells:
        faces.append((vertex(i, j), vertex(i + 1, j), vertex(i + 1, j + 1), vertex(i, j + 1)))

    # Chamfer triangles: a missing cell with exactly two emitting edge
    # neighbors meeting at one corner and nothing on the opposite sides
    for li in range(-1, n_i + 1):
        for lj in range(-1, n_j + 1):
            i, j = li + i_lo, lj + j_lo
            if emitting(i, j):
                continue
            for si in (-1, 1):
                for sj in (-1, 1):
                    if not (emitting(i - si, j) and emitting(i, j - sj) and emitting(i - si, j - sj)):
                        continue
                    if emitting(i + si, j) or emitting(i, j + sj):
                        continue
                    # Shared corner of the block, then one step into the missing cell per axis
                    cx = i if si > 0 else i + 1
                    cy = j if sj > 0 else j + 1
                    a = vertex(cx, cy)
                    b = vertex(cx + si, cy)
                    c = vertex(cx, cy + sj)
                    faces.append((a, b, c) if si * sj > 0 else (a, c, b))

    corner_arr = np.array(corners, dtype=np.int64)
    u, v = _corner_uv(proxy, corner_arr)
    points, normals = unparameterize(proxy.shape, u, v)
    vertices = points + _corner_heights(proxy, corner_arr)[:, None] * normals

    uvs = np.stack([(corner_arr[:, 0] - i_lo) / n_i, (corner_arr[:, 1] - j_lo) / n_j], axis=1)
    uvs = np.clip(uvs, 0.0, 1.0)
    return ProxyMesh(
        vertices=vertices,
        uvs=uvs,
        faces=faces,
        face_uvs=list(faces),
        texture=_texture(proxy),
        proxy_id=proxy.id,
    )


def close_periodic(proxy: Proxy, mesh: ProxyMesh) -> ProxyMesh:
    """
    Weld vertices that coincide across the opposite limits of the domain.

    Cylinders weld the u = 0 and u = 2 pi r columns; spheres weld the folded
    border of the octahedral square. Vertices closer than 1e-6 r merge;
    faces collapsing to fewer than three distinct vertices are dropped.
    Texture coordinates are kept per face.

    Raises:
        PxsValidationError: For planar proxies
    """
    if proxy.kind == ShapeKind.PLANE:
        raise PxsValidationError("only cylinders and spheres have periodic domains")
    tol = WELD_TOLERANCE * proxy.shape.radius
    tree = cKDTree(mesh.vertices)
    pairs = tree.query_pairs(tol, output_type="ndarray")

    # Union-find over the close pairs, representative = smallest index
    parent = np.arange(len(mesh.vertices))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in pairs:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(k) for k in range(len(parent))])
    keep, remap = np.unique(roots, return_inverse=True)

    faces, face_uvs = [], []
    for f, fu in zip(mesh.faces, mesh.face_uvs):
        new_f, new_fu = [], []
        for vi, ti in zip(f, fu):
            k = int(remap[vi])
            if k not in new_f:
                new_f.append(k)
                new_fu.append(ti)
        if len(new_f) >= 3:
            faces.append(tuple(new_f))
            face_uvs.append(tuple(new_fu))

    welded = len(mesh.vertices) - len(keep)
    logger.debug(f"Welded {welded} seam vertices of proxy {proxy.id}")
    return ProxyMesh(
        vertices=mesh.vertices[keep],
        uvs=mesh.uvs,
        faces=faces,
        face_uvs=face_uvs,
        texture=mesh.texture,
        proxy_id=mesh.proxy_id,
        welded=True,
    )


# ============== Topology ==============


def edge_counts(faces: Sequence[Face]) -> Dict[Tuple[int, int], int]:
    """Number of faces incident to each undirected edge."""
    counts: Dict[Tuple[int, int], int] = {}
    for f in faces:
        for a, b in zip(f, f[1:] + f[:1]):
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def boundary_edges(faces: Sequence[Face]) -> List[Tuple[int, int]]:
    """Edges with a single incident face."""
    return sorted(e for e, n in edge_counts(faces).items() if n == 1)


def euler_characteristic(mesh: ProxyMesh) -> int:
    """V - E + F over the vertices referenced by faces."""
    used = {v for f in mesh.faces for v in f}
    return len(used) - len(edge_counts(mesh.faces)) + len(mesh.faces)


# ============== Export ==============


@dataclass
class ExportResult:
    obj_path: Path
    mtl_path: Path
    textures: List[Path] = field(default_factory=list)
    meshes: List[ProxyMesh] = field(default_factory=list)
    seconds: float = 0.0


def build_meshes(state: SceneState) -> List[ProxyMesh]:
    """Meshes of every proxy with emitting cells, seams welded."""
    meshes = []
    for proxy in sorted(state.proxies, key=lambda p: p.id):
        if not proxy.emitting_keys():
            continue
        mesh = mesh_proxy(proxy)
        if proxy.kind != ShapeKind.PLANE:
            mesh = close_periodic(proxy, mesh)
        meshes.append(mesh)
    return meshes


def export_scene(state: SceneState, path: Union[str, Path], name: str = "scene") -> ExportResult:
    """
    Write ``<name>.obj``, ``<name>.mtl`` and one ``proxy_<id>.png`` per
    meshed proxy into directory ``path``.

    Raises:
        PxsIOError: If the directory or a file cannot be written
    """
    start = time.perf_counter()
    out = Path(path)
    meshes = build_meshes(state)
    mesh_time = time.perf_counter() - start
    obj_path = out / f"{name}.obj"
    mtl_path = out / f"{name}.mtl"
    result = ExportResult(obj_path, mtl_path, meshes=meshes)
    try:
        out.mkdir(parents=True, exist_ok=True)
        obj_lines = [f"mtllib {mtl_path.name}"]
        mtl_lines = []
        v_base, t_base = 1, 1
        for mesh in meshes:
            label = f"proxy_{mesh.proxy_id}"
            texture_path = out / f"{label}.png"
            Image.fromarray(mesh.texture).save(texture_path)
            result.textures.append(texture_path)
            mtl_lines += [f"newmtl {label}", "Ka 1 1 1", "Kd 1 1 1", f"map_Kd {texture_path.name}", ""]
            obj_lines += [f"o {label}", f"usemtl {label}"]
            obj_lines += [f"v {x:.6f} {y:.6f} {z:.6f}" for x, y, z in mesh.vertices]
            obj_lines += [f"vt {s:.6f} {t:.6f}" for s, t in mesh.uvs]
            for f, fu in zip(mesh.faces, mesh.face_uvs):
                obj_lines.append("f " + " ".join(f"{a + v_base}/{b + t_base}" for a, b in zip(f, fu)))
            v_base += len(mesh.vertices)
            t_base += len(mesh.uvs)
        obj_path.write_text("\n".join(obj_lines) + "\n")
        mtl_path.write_text("\n".join(mtl_lines) + "\n")
    except OSError as e:
        raise PxsIOError(f"cannot export meshes to {out}: {e}") from None
    result.seconds = time.perf_counter() - start
    logger.info(
        f"Exported {len(meshes)} mesh(es) to {obj_path} "
        f"(meshing {mesh_time * 1000:.1f} ms, total {result.seconds * 1000:.1f} ms)"
    )
    return result


# ============== Import and comparison ==============


@dataclass
class LoadedMesh:
    vertices: np.ndarray
    uvs: np.ndarray
    faces: List[Face]
    groups: List[str]


def load_obj(path: Union[str, Path]) -> LoadedMesh:
    """
    Read positions, texture coordinates, faces and object names of an OBJ file.

    Raises:
        PxsIOError: If the file cannot be read
        PxsValidationError: On a malformed line (the message names it)
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise PxsIOError(f"cannot read {path}: {e}") from None
    vertices: List[List[float]] = []
    uvs: List[List[float]] = []
    faces: List[Face] = []
    groups: List[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vt":
                uvs.append([float(x) for x in parts[1:3]])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    k = int(token.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(vertices) + k)
                faces.append(tuple(idx))
            elif parts[0] in ("o", "g"):
                groups.append(" ".join(parts[1:]))
        except ValueError:
            raise PxsValidationError(f"{path}:{lineno}: malformed '{parts[0]}' line") from None
    return LoadedMesh(
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(uvs, dtype=np.float64).reshape(-1, 2),
        faces,
        groups,
    )


def _triangles(vertices: np.ndarray, faces: Sequence[Face]) -> np.ndarray:
    tris = []
    for f in faces:
        for k in range(1, len(f) - 1):
            tris.append((f[0], f[k], f[k + 1]))
    if not tris:
        return np.zeros((0, 3, 3))
    return vertices[np.array(tris)]


def sample_surface(vertices: np.ndarray, faces: Sequence[Face], count: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform samples on a polygon mesh."""
    tris = _triangles(np.asarray(vertices, dtype=np.float64), faces)
    if len(tris) == 0 or count <= 0:
        return np.zeros((0, 3))
    area = 0.5 * np.linalg.norm(np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]), axis=1)
    if area.sum() <= 0.0:
        return np.zeros((0, 3))
    pick = rng.choice(len(tris), size=count, p=area / area.sum())
    r1, r2 = rng.random(count), rng.random(count)
    flip = r1 + r2 > 1.0
    r1[flip], r2[flip] = 1.0 - r1[flip], 1.0 - r2[flip]
    t = tris[pick]
    return t[:, 0] + r1[:, None] * (t[:, 1] - t[:, 0]) + r2[:, None] * (t[:, 2] - t[:, 0])


def surface_rmse(mesh_a, mesh_b, samples: int = 20000, rng: Optional[np.random.Generator] = None) -> float:
    """
    Point-to-surface RMSE of mesh_a against mesh_b.

    mesh_a is sampled uniformly by area; mesh_b is sampled four times as
    densely and distances are taken to the nearest of its samples.

    Raises:
        PxsValidationError: If either mesh has no area
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    a = sample_surface(mesh_a.vertices, mesh_a.faces, samples, rng)
    b = sample_surface(mesh_b.vertices, mesh_b.faces, 4 * samples, rng)
    if len(a) == 0 or len(b) == 0:
        raise PxsValidationError("cannot compare meshes without surface area")
    dist, _ = cKDTree(b).query(a)
    return float(np.sqrt(np.mean(dist ** 2)))
