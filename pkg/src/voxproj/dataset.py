"""Mesh ingestion, voxelization, multi-view rendering, and dataset manifests."""

from __future__ import annotations

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from scipy import ndimage

from .core import (
    ProjectionConfig,
    Viewpoint,
    ViewpointSet,
    VoxelGrid,
    check_image,
    read_image_pgm,
    write_grid,
    write_image_pgm,
)
from .projection import KINDS, project

__all__ = [
    "TriangleMesh",
    "ObjParseError",
    "load_obj",
    "voxelize",
    "render_views",
    "annotate_viewpoint",
    "ManifestEntry",
    "DatasetManifest",
    "write_manifest",
    "read_manifest",
    "build_dataset",
    "rng_for",
]

log = logging.getLogger(__name__)

PADDING = 0.05
DEFAULT_SAMPLES_PER_AREA = 32.0


def rng_for(seed: int, stream: str, *keys) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``."""
    words = [seed, zlib.crc32(stream.encode())] + [zlib.crc32(str(k).encode()) for k in keys]
    return np.random.default_rng(words)


class ObjParseError(ValueError):
    pass


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64, 0-based
    labels: Optional[np.ndarray] = None  # (T,) part label per triangle
    dropped: int = 0  # degenerate triangles removed on construction

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != self.triangles.shape[0]:
                raise ValueError("need exactly one label per triangle")
            if np.any(self.labels < 0):
                raise ValueError("labels must be non-negative")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")
        t = self.triangles
        degenerate = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
        if t.size:
            v = self.vertices
            degenerate |= np.all(v[t[:, 0]] == v[t[:, 1]], axis=1)
            degenerate |= np.all(v[t[:, 1]] == v[t[:, 2]], axis=1)
            degenerate |= np.all(v[t[:, 0]] == v[t[:, 2]], axis=1)
        if degenerate.any():
            count = int(degenerate.sum())
            log.warning("dropping %d degenerate triangle(s)", count)
            self.dropped += count
            self.triangles = t[~degenerate]
            if self.labels is not None:
                self.labels = self.labels[~degenerate]

    @property
    def channels(self) -> int:
        return 1 if self.labels is None else int(self.labels.max()) + 1

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two triangles."""
        t = self.triangles
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))


def _face_index(token: str, n_vertices: int, lineno: int, path) -> int:
    head = token.split("/")[0]
    try:
        i = int(head)
    except ValueError:
        raise ObjParseError(f"{path}:{lineno}: bad face index {token!r}") from None
    if i == 0:
        raise ObjParseError(f"{path}:{lineno}: face index 0 (OBJ indices are 1-based)")
    i = i - 1 if i > 0 else n_vertices + i
    if not 0 <= i < n_vertices:
        raise ObjParseError(f"{path}:{lineno}: face index {head} out of range")
    return i


def load_obj(path, labels_path=None) -> TriangleMesh:
    """Parse the ``v`` and ``f`` records of an ASCII OBJ file.

    Polygons are fan-triangulated; normals, texture coordinates, and other
    records are ignored. Part labels come from a sidecar file holding one
    non-negative integer per ``f`` record (whitespace separated); by default
    ``<stem>.labels`` next to the OBJ is used when present. Triangles from
    one polygon share its label.
    """
    path = Path(path)
    vertices: List[list] = []
    triangles: List[tuple] = []
    face_of_triangle: List[int] = []
    n_faces = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ObjParseError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ObjParseError(f"{path}:{lineno}: bad vertex coordinate") from None
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise ObjParseError(f"{path}:{lineno}: face needs at least 3 vertices")
                idx = [_face_index(p, len(vertices), lineno, path) for p in parts[1:]]
                for k in range(1, len(idx) - 1):
                    triangles.append((idx[0], idx[k], idx[k + 1]))
                    face_of_triangle.append(n_faces)
                n_faces += 1
    if not vertices or not triangles:
        raise ObjParseError(f"{path}: empty mesh")

    labels = None
    if labels_path is None and path.with_suffix(".labels").exists():
        labels_path = path.with_suffix(".labels")
    if labels_path is not None:
        raw = Path(labels_path).read_text(encoding="utf-8").split()
        if len(raw) != n_faces:
            raise ObjParseError(f"{labels_path}: {len(raw)} labels for {n_faces} faces")
        labels = np.array([int(x) for x in raw], dtype=np.int64)[face_of_triangle]

    mesh = TriangleMesh(np.array(vertices), np.array(triangles), labels)
    if mesh.triangles.shape[0] == 0:
        raise ObjParseError(f"{path}: no non-degenerate triangles")
    return mesh


def _normalized_vertices(mesh: TriangleMesh, n: int) -> np.ndarray:
    """Uniformly scale and center the mesh into grid coordinates with 5% padding per side.

    Grid coordinates put voxel ``i`` on ``[i - 0.5, i + 0.5)``.
    """
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = float((hi - lo).max())
    scale = (1.0 - 2 * PADDING) * n / extent if extent > 0 else 1.0
    return (v - (lo + hi) / 2) * scale + (n - 1) / 2.0


def _sample_surface(tri: np.ndarray, density: float, rng: np.random.Generator):
    """Area-proportional surface samples; returns points and their triangle ids."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    counts = np.ceil(area * density).astype(np.int64) + 1
    owner = np.repeat(np.arange(len(tri)), counts)
    r1 = np.sqrt(rng.random(owner.size))
    r2 = rng.random(owner.size)
    pts = (
        (1 - r1)[:, None] * a[owner]
        + (r1 * (1 - r2))[:, None] * b[owner]
        + (r1 * r2)[:, None] * c[owner]
    )
    # vertices too, so thin features always leave a mark
    pts = np.concatenate([pts, a, b, c])
    owner = np.concatenate([owner, np.tile(np.arange(len(tri)), 3)])
    return pts, owner


def _parity_fill(tri: np.ndarray, n: int) -> np.ndarray:
    """Inside test by counting triangle crossings along each ``z`` column."""
    # off-lattice ray origin so rays never graze shared edges or vertices
    jitter = np.array([1.234567e-5, 2.345678e-5])
    xs, ys = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    px = xs.ravel() + jitter[0]
    py = ys.ravel() + jitter[1]
    hits_col, hits_z = [], []
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])
    usable = np.abs(det) > 1e-12
    for start in range(0, len(tri), 256):
        sl = slice(start, start + 256)
        ok = usable[sl]
        if not ok.any():
            continue
        A, B, C, D = a[sl][ok], b[sl][ok], c[sl][ok], det[sl][ok]
        dx = px[None, :] - A[:, 0:1]
        dy = py[None, :] - A[:, 1:2]
        u = (dx * (C[:, 1:2] - A[:, 1:2]) - dy * (C[:, 0:1] - A[:, 0:1])) / D[:, None]
        v = (dy * (B[:, 0:1] - A[:, 0:1]) - dx * (B[:, 1:2] - A[:, 1:2])) / D[:, None]
        inside = (u >= 0) & (v >= 0) & (u + v <= 1)
        t_idx, col = np.nonzero(inside)
        z = A[t_idx, 2] + u[t_idx, col] * (B[t_idx, 2] - A[t_idx, 2]) + v[t_idx, col] * (C[t_idx, 2] - A[t_idx, 2])
        hits_col.append(col)
        hits_z.append(z)
    solid = np.zeros((n * n, n), dtype=bool)
    if not hits_col:
        return solid.reshape(n, n, n)
    col = np.concatenate(hits_col)
    z = np.concatenate(hits_z)
    order = np.lexsort((z, col))
    col, z = col[order], z[order]
    zc = np.arange(n)
    for c_id in np.unique(col):
        zs = z[col == c_id]
        for z_in, z_out in zip(zs[0::2], zs[1::2]):
            solid[c_id] |= (zc >= z_in) & (zc < z_out)
    return solid.reshape(n, n, n)


def voxelize(
    mesh: TriangleMesh,
    n: int = 32,
    samples_per_area: float = DEFAULT_SAMPLES_PER_AREA,
    solid: bool = False,
    seed: int = 0,
) -> VoxelGrid:
    """Bin area-weighted surface samples into an ``n^3`` binary grid.

    The mesh is centered and uniformly scaled so its longest side spans 90%
    of the grid. ``samples_per_area`` is per squared voxel. With ``solid``,
    the interior is filled by ray parity along ``z`` for watertight meshes
    and by hole filling (flood fill from the boundary) otherwise.

    A labeled mesh yields one channel per part label; interior voxels take
    the label of the nearest surface voxel.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if mesh.triangles.shape[0] == 0:
        raise ValueError("cannot voxelize an empty mesh")
    rng = np.random.default_rng(seed)
    v = _normalized_vertices(mesh, n)
    tri = v[mesh.triangles]
    pts, owner = _sample_surface(tri, samples_per_area, rng)
    ijk = np.clip(np.floor(pts + 0.5).astype(np.int64), 0, n - 1)

    channels = mesh.channels
    label = np.zeros(len(owner), dtype=np.int64) if mesh.labels is None else mesh.labels[owner]
    grid = np.zeros((channels, n, n, n), dtype=bool)
    grid[label, ijk[:, 0], ijk[:, 1], ijk[:, 2]] = True
    surface = grid.any(axis=0)

    if solid:
        if mesh.is_watertight():
            filled = _parity_fill(tri, n) | surface
        else:
            log.info("mesh is not watertight; filling holes from the boundary")
            filled = ndimage.binary_fill_holes(surface)
        interior = filled & ~surface
        if channels == 1:
            grid[0] |= interior
        elif interior.any():
            # nearest labeled surface voxel decides the part of each interior voxel
            _, nearest = ndimage.distance_transform_edt(~surface, return_indices=True)
            owner_label = np.argmax(grid, axis=0)
            src = tuple(idx[interior] for idx in nearest)
            grid[(owner_label[src],) + np.nonzero(interior)] = True
    return VoxelGrid(grid.astype(np.float32))


def render_views(grid, views: Sequence[Viewpoint] = ViewpointSet(), kind: str = "silhouette", cfg=ProjectionConfig()) -> list:
    """One image per view, in view order (``(n, n)``, or ``(C, n, n)`` for semantic).

    Non-semantic kinds render a multi-channel grid through its channel-wise max.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown render kind {kind!r}")
    if kind != "semantic" and np.ndim(grid) == 4 and np.shape(grid)[0] > 1:
        grid = np.asarray(grid).max(axis=0)
    return [project(kind, grid, view, cfg) for view in views]


def annotate_viewpoint(img, view_index: int, n_views: int) -> np.ndarray:
    """Stack ``img`` with a one-hot viewpoint indicator: ``(1 + n_views, h, w)``."""
    a = check_image(img)
    if not 0 <= view_index < n_views:
        raise ValueError(f"view_index {view_index} outside [0, {n_views})")
    out = np.zeros((1 + n_views,) + a.shape, dtype=np.float64)
    out[0] = a
    out[1 + view_index] = 1.0
    return out


@dataclass(frozen=True)
class ManifestEntry:
    shape_id: str
    view_index: int
    view: Viewpoint
    path: str  # relative to the manifest's directory, '/'-separated
    kind: str


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry] = field(default_factory=list)
    n: int = 32
    image_side: int = 32
    n_views: int = 8

    def shape_ids(self) -> list:
        return list(dict.fromkeys(e.shape_id for e in self.entries))

    def for_shape(self, shape_id: str) -> list:
        return [e for e in self.entries if e.shape_id == shape_id]


def _fmt_deg(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def write_manifest(manifest: DatasetManifest, path) -> None:
    """Tab-separated: ``shape_id view_index theta_deg phi_deg kind relative_path``."""
    lines = [
        "\t".join(
            [e.shape_id, str(e.view_index), _fmt_deg(e.view.theta_deg), _fmt_deg(e.view.phi_deg), e.kind, e.path]
        )
        for e in manifest.entries
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("".join(line + "\n" for line in lines))


def read_manifest(path) -> DatasetManifest:
    entries = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\n").split("\t")
            if len(fields) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated fields")
            sid, vi, th, ph, kind, rel = fields
            entries.append(ManifestEntry(sid, int(vi), Viewpoint.from_degrees(float(th), float(ph)), rel, kind))
    n_views = max((e.view_index for e in entries), default=-1) + 1
    side = 0
    if entries:
        side = read_image_pgm(Path(path).parent / entries[0].path).shape[0]
    return DatasetManifest(entries, n=side, image_side=side, n_views=n_views)


def _image_files(shape_id: str, j: int, img: np.ndarray, kind: str):
    """Relative paths and single-channel images for one rendered view."""
    stem = f"images/{shape_id}_v{j}"
    if kind == "semantic":
        return [(f"{stem}_c{k}.pgm", img[k]) for k in range(img.shape[0])]
    return [(f"{stem}.pgm", img)]


def write_renders(shape_id: str, images: Sequence, views: Sequence[Viewpoint], kind: str, out_dir) -> list:
    """Write PGMs for one shape's renders and return their manifest entries."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    entries = []
    for j, (img, view) in enumerate(zip(images, views)):
        for rel, plane in _image_files(shape_id, j, np.asarray(img), kind):
            write_image_pgm(np.clip(plane, 0.0, 1.0), out_dir / rel)
            entries.append(ManifestEntry(shape_id, j, view, rel, kind))
    return entries


def build_dataset(
    mesh_dir,
    out_dir,
    n: int = 32,
    views: Sequence[Viewpoint] = ViewpointSet(),
    kind: str = "silhouette",
    cfg: ProjectionConfig = ProjectionConfig(),
    seed: int = 0,
    samples_per_area: float = DEFAULT_SAMPLES_PER_AREA,
    solid: bool = True,
    threads: int = 1,
) -> DatasetManifest:
    """Voxelize every OBJ in ``mesh_dir`` and render it from ``views``.

    Writes ``grids/<id>.voxg``, ``images/<id>_v<j>.pgm`` (semantic renders
    add a ``_c<k>`` channel suffix, one manifest row per file), and
    ``manifest.tsv`` into ``out_dir``. Shapes that fail are logged and
    skipped; the run fails only when every shape fails.
    """
    mesh_paths = sorted(Path(mesh_dir).glob("*.obj"))
    if not mesh_paths:
        raise FileNotFoundError(f"no .obj files in {mesh_dir}")
    views = list(views)
    out_dir = Path(out_dir)
    (out_dir / "grids").mkdir(parents=True, exist_ok=True)

    def one(path: Path):
        shape_id = path.stem
        try:
            mesh = load_obj(path)
            grid = voxelize(mesh, n, samples_per_area, solid, seed=_seed_int(seed, "voxelize", shape_id))
            write_grid(grid, out_dir / "grids" / f"{shape_id}.voxg")
            images = render_views(grid, views, kind, cfg)
            return write_renders(shape_id, images, views, kind, out_dir)
        except (OSError, ValueError) as e:
            log.error("skipping %s: %s", path, e)
            return None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, mesh_paths))
    if all(r is None for r in results):
        raise RuntimeError(f"every mesh in {mesh_dir} failed")
    entries = [e for r in results if r is not None for e in r]
    manifest = DatasetManifest(entries, n=n, image_side=n, n_views=len(views))
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest


def _seed_int(seed: int, stream: str, key: str) -> int:
    """Deterministic 63-bit seed for ``(seed, stream, key)``, independent of call order."""
    return int(rng_for(seed, stream, key).integers(0, 2**63 - 1))
