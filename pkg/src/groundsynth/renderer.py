"""Ground-view rendering of the textured satellite mesh.

World frame is local metric east/north/up (z up). Ground cameras use the
computer-vision convention (x right, y down, z forward) with a square-pixel
pinhole whose focal length follows from the horizontal field of view. Pixel
``i`` covers ``[i, i + 1)``, so the optical axis lands on ``(W/2, H/2)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from ._raster import rasterize_soup
from .errors import ParameterError
from .geometry import FALLBACK_GRAY, TriangleMesh
from .spherical import angles_to_direction

CLEAR_COLOR = (0, 0, 0)

DEFAULT_FOV = 75.0
DEFAULT_SIZE = 256


def look_rotation(heading_deg: float, pitch_deg: float = 0.0) -> np.ndarray:
    """World->camera rotation for a camera facing ``heading`` (clockwise from north)."""
    h, p = math.radians(heading_deg), math.radians(pitch_deg)
    forward = np.array([math.sin(h) * math.cos(p), math.cos(h) * math.cos(p), math.sin(p)])
    right = np.array([math.cos(h), -math.sin(h), 0.0])
    down = np.cross(forward, right)
    return np.stack([right, down, forward])


@dataclass
class GroundCamera:
    rotation: np.ndarray
    center: np.ndarray
    fov_deg: float = DEFAULT_FOV
    width_px: int = DEFAULT_SIZE
    height_px: int = DEFAULT_SIZE
    near_m: float = 0.1
    far_m: float = 1000.0

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not 0.0 < self.near_m < self.far_m:
            raise ParameterError(f"need 0 < near < far, got {self.near_m}, {self.far_m}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ParameterError(f"fov_deg must lie in (0, 180), got {self.fov_deg}")
        if self.width_px < 1 or self.height_px < 1:
            raise ParameterError("camera image must be at least 1x1")

    @classmethod
    def looking(cls, center, heading_deg: float, pitch_deg: float = 0.0, **kwargs) -> "GroundCamera":
        return cls(look_rotation(heading_deg, pitch_deg), center, **kwargs)

    @property
    def focal_px(self) -> float:
        return (self.width_px / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def translation(self) -> np.ndarray:
        return -self.rotation @ self.center

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) @ self.rotation.T

    def project_camera_points(self, pc: np.ndarray) -> np.ndarray:
        f = self.focal_px
        with np.errstate(divide="ignore", invalid="ignore"):
            x = f * pc[..., 0] / pc[..., 2] + self.width_px / 2.0
            y = f * pc[..., 1] / pc[..., 2] + self.height_px / 2.0
        return np.stack([x, y], axis=-1)

    def pixel_rays(self) -> np.ndarray:
        """World-frame unit rays through every pixel center, shape (H, W, 3)."""
        jj, ii = np.mgrid[0 : self.height_px, 0 : self.width_px] + 0.5
        f = self.focal_px
        d = np.stack(
            [(ii - self.width_px / 2.0) / f, (jj - self.height_px / 2.0) / f, np.ones(ii.shape)], axis=-1
        )
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d @ self.rotation


@dataclass
class Framebuffer:
    color: np.ndarray
    depth: np.ndarray
    face_id: Optional[np.ndarray] = None

    @classmethod
    def cleared(cls, cam: GroundCamera) -> "Framebuffer":
        h, w = cam.height_px, cam.width_px
        return cls(
            np.full((h, w, 3), CLEAR_COLOR, dtype=np.uint8),
            np.full((h, w), np.inf),
            np.full((h, w), -1, dtype=np.int64),
        )


@dataclass
class Trajectory:
    cameras: list = field(default_factory=list)
    spacing_m: float = 10.0

    def __post_init__(self):
        centers = np.array([c.center for c in self.cameras]).reshape(-1, 3)
        gaps = np.linalg.norm(np.diff(centers, axis=0), axis=1)
        if len(gaps) and np.abs(gaps - self.spacing_m).max() > 1e-6:
            raise ParameterError(f"camera centers are not {self.spacing_m} m apart")

    def __len__(self) -> int:
        return len(self.cameras)


def project_vertex(cam: GroundCamera, p) -> Optional[tuple[float, float, float]]:
    """Pixel position and forward depth of ``p``; ``None`` when behind the camera."""
    pc = cam.to_camera(p)
    if pc[2] <= 0:
        return None
    x, y = cam.project_camera_points(pc)
    return float(x), float(y), float(pc[2])


def _clip_near(corners: np.ndarray, uvs: np.ndarray, near: float):
    """Clip one camera-space triangle against z >= near; returns sub-triangles."""
    poly = []
    n = len(corners)
    for i in range(n):
        a, b = corners[i], corners[(i + 1) % n]
        ua, ub = uvs[i], uvs[(i + 1) % n]
        a_in, b_in = a[2] >= near, b[2] >= near
        if a_in:
            poly.append((a, ua))
        if a_in != b_in:
            s = (near - a[2]) / (b[2] - a[2])
            p = a + s * (b - a)
            p[2] = near
            poly.append((p, ua + s * (ub - ua)))
    return [
        (np.array([poly[0][0], poly[k][0], poly[k + 1][0]]), np.array([poly[0][1], poly[k][1], poly[k + 1][1]]))
        for k in range(1, len(poly) - 1)
    ]


def _build_soup(mesh: TriangleMesh, cam: GroundCamera):
    pc = cam.to_camera(mesh.vertices)
    corners = pc[mesh.faces]
    if mesh.face_uvs is not None:
        uvs = mesh.face_uvs
    else:
        uvs = np.zeros((len(mesh.faces), 3, 2))
    z = corners[..., 2]
    whole = (z >= cam.near_m).all(axis=1)
    partial = np.flatnonzero(~whole & (z >= cam.near_m).any(axis=1))

    soup_c = [corners[whole]]
    soup_uv = [uvs[whole]]
    soup_face = [np.flatnonzero(whole)]
    for fi in partial:
        for c, uv in _clip_near(corners[fi], uvs[fi], cam.near_m):
            soup_c.append(c[None])
            soup_uv.append(uv[None])
            soup_face.append(np.array([fi]))
    soup_c = np.concatenate(soup_c)
    soup_uv = np.concatenate(soup_uv)
    soup_face = np.concatenate(soup_face)
    # Draw in face-index order so equal-depth ties go to the lower face.
    order = np.argsort(soup_face, kind="stable")
    return soup_c[order], soup_uv[order], soup_face[order]


def sample_nearest_texel(atlas: np.ndarray, uv: np.ndarray) -> np.ndarray:
    ah, aw = atlas.shape[:2]
    col = np.clip(np.floor(uv[..., 0] * aw).astype(np.int64), 0, aw - 1)
    row = np.clip(np.floor(uv[..., 1] * ah).astype(np.int64), 0, ah - 1)
    return atlas[row, col]


def rasterize(mesh: TriangleMesh, cam: GroundCamera) -> Framebuffer:
    fb = Framebuffer.cleared(cam)
    if len(mesh.faces) == 0:
        return fb
    soup_c, soup_uv, soup_face = _build_soup(mesh, cam)
    if len(soup_c) == 0:
        return fb
    xy = cam.project_camera_points(soup_c)
    tri_id, depth, bary = rasterize_soup(
        xy, soup_c[..., 2], cam.width_px, cam.height_px, cam.near_m, cam.far_m
    )
    hit = tri_id >= 0
    fb.depth = depth
    fb.face_id[hit] = soup_face[tri_id[hit]]
    if mesh.atlas is not None and mesh.face_uvs is not None:
        uv = np.einsum("nk,nkc->nc", bary[hit], soup_uv[tri_id[hit]])
        fb.color[hit] = sample_nearest_texel(mesh.atlas, uv)[..., :3]
    else:
        fb.color[hit] = FALLBACK_GRAY
    return fb


def render_sequence(mesh: TriangleMesh, traj: Trajectory, jobs: int = 1) -> list[Framebuffer]:
    cams = traj.cameras if isinstance(traj, Trajectory) else list(traj)
    if not cams:
        raise ParameterError("trajectory has no cameras")
    if jobs <= 1:
        return [rasterize(mesh, c) for c in cams]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda c: rasterize(mesh, c), cams))


def make_trajectory(
    start_center, heading_deg: float, step_m: float, count: int, template: GroundCamera
) -> Trajectory:
    """``count`` cameras stepping ``step_m`` along a compass heading, template orientation."""
    if count < 1:
        raise ParameterError("trajectory needs at least one camera")
    if not step_m > 0:
        raise ParameterError("step_m must be positive")
    h = math.radians(heading_deg)
    direction = np.array([math.sin(h), math.cos(h), 0.0])
    start = np.asarray(start_center, dtype=np.float64)
    cams = [replace(template, center=start + i * step_m * direction) for i in range(count)]
    return Trajectory(cams, step_m)


CUBE_FACES = ((0.0, 0.0), (90.0, 0.0), (180.0, 0.0), (270.0, 0.0), (0.0, 90.0), (0.0, -90.0))


def render_panorama(
    mesh: TriangleMesh,
    center,
    height_px: int = 512,
    heading_deg: float = 0.0,
    face_px: Optional[int] = None,
    near_m: float = 0.1,
    far_m: float = 1000.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular color and range maps assembled from six 90-degree renders.

    Column 0 of the panorama looks toward ``heading_deg``; range is the
    Euclidean distance along each ray (+inf where empty).
    """
    w = 2 * height_px
    face_px = face_px or max(8, height_px // 2)
    jj, ii = np.mgrid[0:height_px, 0:w] + 0.5
    theta = ii / w * 360.0 + heading_deg
    phi = 90.0 - jj / height_px * 180.0
    # spherical y-up frame (x east, y up, z north) -> world east/north/up
    d = angles_to_direction(theta, phi)
    rays = np.stack([d[..., 0], d[..., 2], d[..., 1]], axis=-1)

    color = np.zeros((height_px, w, 3), dtype=np.uint8)
    rng = np.full((height_px, w), np.inf)
    best = np.full((height_px, w), -np.inf)
    for heading, pitch in CUBE_FACES:
        cam = GroundCamera.looking(
            center, heading, pitch, fov_deg=90.0, width_px=face_px, height_px=face_px, near_m=near_m, far_m=far_m
        )
        fwd = rays @ cam.rotation[2]
        mine = fwd > best
        best = np.where(mine, fwd, best)
        fb = rasterize(mesh, cam)
        pc = rays[mine] @ cam.rotation.T
        xy = cam.project_camera_points(pc)
        col = np.clip(np.floor(xy[:, 0]).astype(np.int64), 0, face_px - 1)
        row = np.clip(np.floor(xy[:, 1]).astype(np.int64), 0, face_px - 1)
        color[mine] = fb.color[row, col]
        rng[mine] = fb.depth[row, col] / pc[:, 2]
    return color, rng
