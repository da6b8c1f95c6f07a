"""Scene mesh construction from satellite depth maps and images.

Satellite cameras follow the usual computer-vision pinhole model: x right,
y down, z forward, pixel centers at integer coordinates, and a world->camera
pose ``X_cam = R @ X_world + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from ._raster import rasterize_soup
from .errors import ParameterError, ShapeError

FALLBACK_GRAY = (128, 128, 128)
FALLBACK_TILE = 2
DEFAULT_VOXEL_M = 0.5


@dataclass
class SatelliteView:
    image: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.image = np.asarray(self.image)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError("focal lengths must be positive")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err >= 1e-9:
            raise ParameterError(f"rotation is not orthonormal (error {err:.2e})")

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pixel column, pixel row and camera depth of world points."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = self.fx * pc[..., 0] / z + self.cx
            y = self.fy * pc[..., 1] / z + self.cy
        return x, y, z


@dataclass
class DepthMap:
    depths: np.ndarray

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.float64)
        if self.depths.ndim != 2:
            raise ShapeError(f"depth map must be 2-D, got shape {self.depths.shape}")
        valid = self.valid_mask
        if (self.depths[valid] <= 0).any():
            raise ParameterError("valid depths must be positive")

    @property
    def valid_mask(self) -> np.ndarray:
        # 0 and NaN both mark missing depth.
        return np.isfinite(self.depths) & (self.depths != 0)


@dataclass
class PointCloud:
    points: np.ndarray
    colors: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ShapeError("colors and points differ in length")

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls, with_colors: bool = False) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8) if with_colors else None)


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_uvs: Optional[np.ndarray] = None
    atlas: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.face_uvs is not None:
            self.face_uvs = np.asarray(self.face_uvs, dtype=np.float64).reshape(-1, 3, 2)

    @property
    def edges(self) -> np.ndarray:
        """Unique undirected vertex pairs, sorted."""
        if len(self.faces) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        e = self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        return np.unique(np.sort(e, axis=1), axis=0)

    def face_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def mesh_validate(mesh: TriangleMesh) -> list[str]:
    """List every violated mesh invariant (empty list means valid)."""
    problems = []
    if len(mesh.faces):
        if mesh.faces.min() < 0 or mesh.faces.max() >= len(mesh.vertices):
            problems.append("face index out of range")
        else:
            degenerate = np.flatnonzero(mesh.face_areas() <= 0)
            if len(degenerate):
                problems.append(f"{len(degenerate)} degenerate faces, first {degenerate[0]}")
    if mesh.face_uvs is not None:
        if mesh.face_uvs.shape != (len(mesh.faces), 3, 2):
            problems.append(f"face_uvs shape {mesh.face_uvs.shape} does not match faces")
        elif len(mesh.face_uvs) and (mesh.face_uvs.min() < 0 or mesh.face_uvs.max() > 1):
            problems.append("uv outside [0, 1]")
        if mesh.atlas is None:
            problems.append("face_uvs present without an atlas")
    pairs = set()
    for f in mesh.faces.tolist():
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            pairs.add((min(a, b), max(a, b)))
    if len(pairs) != len(mesh.edges):
        problems.append("edge set inconsistent with faces")
    return problems


def unproject_depth(depth: DepthMap, view: SatelliteView) -> PointCloud:
    if depth.depths.shape != (view.height, view.width):
        raise ShapeError(f"depth {depth.depths.shape} does not match image {(view.height, view.width)}")
    rows, cols = np.nonzero(depth.valid_mask)
    d = depth.depths[rows, cols]
    pc = np.stack([d * (cols - view.cx) / view.fx, d * (rows - view.cy) / view.fy, d], axis=1)
    points = (pc - view.translation) @ view.rotation
    colors = view.image[rows, cols] if view.image.ndim == 3 else None
    return PointCloud(points, colors)


def fuse_point_clouds(clouds: Sequence[PointCloud], voxel_m: float) -> PointCloud:
    """Voxel-grid fusion: one centroid (and mean color) per occupied voxel.

    Output is sorted by voxel key and independent of input order, bit for bit:
    members of each voxel are summed in a canonical sorted order.
    """
    if not voxel_m > 0:
        raise ParameterError(f"voxel size must be positive, got {voxel_m}")
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        return PointCloud.empty()
    with_colors = all(c.colors is not None for c in clouds)
    pts = np.concatenate([c.points for c in clouds])
    cols = np.concatenate([c.colors for c in clouds]).astype(np.float64) if with_colors else None

    keys = np.floor(pts / voxel_m).astype(np.int64)
    sort_cols = [pts[:, 2], pts[:, 1], pts[:, 0]]
    if with_colors:
        sort_cols = [cols[:, 2], cols[:, 1], cols[:, 0]] + sort_cols
    order = np.lexsort(sort_cols + [keys[:, 2], keys[:, 1], keys[:, 0]])
    keys, pts = keys[order], pts[order]
    starts = np.flatnonzero(np.r_[True, (np.diff(keys, axis=0) != 0).any(axis=1)])
    counts = np.diff(np.r_[starts, len(pts)])
    centroids = np.add.reduceat(pts, starts, axis=0) / counts[:, None]
    colors = None
    if with_colors:
        mean = np.add.reduceat(cols[order], starts, axis=0) / counts[:, None]
        dtype = clouds[0].colors.dtype
        colors = np.rint(mean).astype(dtype) if np.issubdtype(dtype, np.integer) else mean
    return PointCloud(centroids, colors)


RefinementStage = Callable[[PointCloud], PointCloud]


def identity_stage(cloud: PointCloud) -> PointCloud:
    return cloud


@dataclass(frozen=True)
class StatisticalOutlierRemoval:
    """Drop points whose mean k-NN distance exceeds mean + mult * std."""

    k: int = 8
    std_multiplier: float = 2.0

    def __call__(self, cloud: PointCloud) -> PointCloud:
        n = len(cloud)
        if n <= self.k:
            return cloud
        dist, _ = cKDTree(cloud.points).query(cloud.points, k=self.k + 1)
        mean_d = dist[:, 1:].mean(axis=1)
        keep = mean_d <= mean_d.mean() + self.std_multiplier * mean_d.std()
        colors = cloud.colors[keep] if cloud.colors is not None else None
        return PointCloud(cloud.points[keep], colors)


def refine_points(p0: PointCloud, stage: RefinementStage = identity_stage) -> PointCloud:
    return stage(p0)


def triangulate_grid(
    depth: DepthMap,
    view: SatelliteView,
    max_edge_m: float = 5.0,
    max_depth_ratio: float = 1.5,
) -> TriangleMesh:
    """Two triangles per fully valid 2x2 pixel quad, culled at discontinuities."""
    if not max_edge_m > 0:
        raise ParameterError("max_edge_m must be positive")
    if not max_depth_ratio > 1:
        raise ParameterError("max_depth_ratio must exceed 1")
    if depth.depths.shape != (view.height, view.width):
        raise ShapeError("depth map and view dimensions differ")
    h, w = depth.depths.shape
    valid = depth.valid_mask
    d = np.where(valid, depth.depths, np.nan)
    rows, cols = np.mgrid[0:h, 0:w]
    pc = np.stack([d * (cols - view.cx) / view.fx, d * (rows - view.cy) / view.fy, d], axis=-1)
    world = (pc - view.translation) @ view.rotation

    idx = np.arange(h * w).reshape(h, w)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, e = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    # (u,v)-(u+1,v)-(u,v+1) and (u+1,v)-(u+1,v+1)-(u,v+1)
    tris = np.concatenate([np.stack([a, b, c], 1), np.stack([b, e, c], 1)])
    tris = tris[np.argsort(np.r_[2 * np.arange(len(a)), 2 * np.arange(len(a)) + 1], kind="stable")]

    flat_valid = valid.ravel()
    keep = flat_valid[tris].all(axis=1)
    tris = tris[keep]
    flat_d = depth.depths.ravel()
    flat_w = world.reshape(-1, 3)
    if len(tris):
        td = flat_d[tris]
        keep = td.max(axis=1) / td.min(axis=1) <= max_depth_ratio
        p = flat_w[tris]
        edge_len = np.stack(
            [np.linalg.norm(p[:, i] - p[:, (i + 1) % 3], axis=1) for i in range(3)], axis=1
        )
        keep &= edge_len.max(axis=1) <= max_edge_m
        area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
        keep &= area > 0
        tris = tris[keep]
    if len(tris) == 0:
        return TriangleMesh.empty()
    used = np.unique(tris)
    remap = np.full(h * w, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(flat_w[used], remap[tris])


def merge_meshes(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    """Concatenate meshes without welding vertices (UVs are dropped)."""
    verts, faces, offset = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        offset += len(m.vertices)
    if not verts:
        return TriangleMesh.empty()
    return TriangleMesh(np.concatenate(verts), np.concatenate(faces))


def pack_atlas(images: Sequence[np.ndarray]):
    """Row-major shelf packing of view images plus a trailing gray fallback tile.

    Returns ``(atlas, origins, fallback_uv)`` where ``origins[k]`` is the
    (column, row) of image ``k``'s top-left corner in the atlas.
    """
    tiles = [np.asarray(im) for im in images]
    tiles = [t if t.ndim == 3 else np.repeat(t[..., None], 3, axis=2) for t in tiles]
    tiles.append(np.full((FALLBACK_TILE, FALLBACK_TILE, 3), FALLBACK_GRAY, dtype=np.uint8))
    total = sum(t.shape[0] * t.shape[1] for t in tiles)
    shelf_w = max(max(t.shape[1] for t in tiles), math.ceil(math.sqrt(total)))

    origins, x, y, shelf_h, used_w = [], 0, 0, 0, 0
    for t in tiles:
        th, tw = t.shape[:2]
        if x + tw > shelf_w:
            x, y, shelf_h = 0, y + shelf_h, 0
        origins.append((x, y))
        x += tw
        shelf_h = max(shelf_h, th)
        used_w = max(used_w, x)
    atlas = np.zeros((y + shelf_h, used_w, 3), dtype=np.uint8)
    for (ox, oy), t in zip(origins, tiles):
        atlas[oy : oy + t.shape[0], ox : ox + t.shape[1]] = t
    fx, fy = origins[-1]
    fallback_uv = ((fx + FALLBACK_TILE / 2) / used_w, (fy + FALLBACK_TILE / 2) / atlas.shape[0])
    return atlas, origins[:-1], fallback_uv


def visible_faces(mesh: TriangleMesh, view: SatelliteView, rel_tol: float = 1e-3):
    """Per-face visibility in one view, plus projected pixel coordinates.

    A face is visible when all three corners project inside the image in front
    of the camera and either every corner passes the view's z-buffer or the
    face itself wins at least one pixel.
    """
    x, y, z = view.project(mesh.vertices)
    in_front = z > 0
    in_bounds = in_front & (x >= -0.5) & (x <= view.width - 0.5) & (y >= -0.5) & (y <= view.height - 0.5)

    faces = mesh.faces
    drawable = in_front[faces].all(axis=1)
    soup_faces = np.flatnonzero(drawable)
    tri_xy = np.stack([x, y], axis=-1)[faces[soup_faces]] + 0.5
    tri_id, zbuf, _ = rasterize_soup(tri_xy, z[faces[soup_faces]], view.width, view.height)

    col = np.clip(np.rint(np.nan_to_num(x)), 0, view.width - 1).astype(np.int64)
    row = np.clip(np.rint(np.nan_to_num(y)), 0, view.height - 1).astype(np.int64)
    zb = zbuf[row, col]
    vertex_ok = in_front & (~np.isfinite(zb) | (z <= zb * (1 + rel_tol) + 1e-9))

    wins = np.zeros(len(faces), dtype=bool)
    won = np.unique(tri_id[tri_id >= 0])
    wins[soup_faces[won]] = True
    visible = in_bounds[faces].all(axis=1) & (vertex_ok[faces].all(axis=1) | wins)
    return visible, np.stack([x, y], axis=-1)


def compute_texture_coords(mesh: TriangleMesh, views: Sequence[SatelliteView]) -> TriangleMesh:
    """Texture each face from the visible view where it projects largest."""
    if not views:
        raise ParameterError("at least one view is required for texturing")
    n = len(mesh.faces)
    best_area = np.full(n, -1.0)
    best_view = np.full(n, -1, dtype=np.int64)
    projected = []
    for k, view in enumerate(views):
        vis, xy = visible_faces(mesh, view)
        p = xy[mesh.faces]
        area = 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )
        area = np.where(vis, area, -1.0)
        better = area > best_area
        best_area[better] = area[better]
        best_view[better] = k
        projected.append(p)

    atlas, origins, fallback_uv = pack_atlas([v.image for v in views])
    ah, aw = atlas.shape[:2]
    uvs = np.empty((n, 3, 2))
    uvs[:] = fallback_uv
    for k, (ox, oy) in enumerate(origins):
        sel = best_view == k
        p = projected[k][sel]
        uvs[sel, :, 0] = (ox + p[..., 0] + 0.5) / aw
        uvs[sel, :, 1] = (oy + p[..., 1] + 0.5) / ah
    np.clip(uvs, 0.0, 1.0, out=uvs)
    return TriangleMesh(mesh.vertices, mesh.faces, uvs, atlas)
