"""A small synthetic city block for end-to-end runs without real data.

The scene is a textured ground square with a few box buildings. Satellite
views are rendered from it with this package's own rasterizer, so their
images and depth maps are exactly consistent with the stated cameras.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fileio import satellite_depth_path, write_cameras, write_depth, write_image, write_mesh
from .geometry import SatelliteView, TriangleMesh, pack_atlas
from .renderer import GroundCamera, look_rotation, rasterize


@dataclass(frozen=True)
class ToySceneConfig:
    seed: int = 0
    half_extent_m: float = 80.0
    ground_cells: int = 8
    buildings: int = 6
    sat_views: int = 3
    sat_size_px: int = 64
    sat_altitude_m: float = 600.0
    sat_off_nadir_deg: float = 8.0
    sat_fov_deg: float = 18.0


def _ground_texture(size: int, rng) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    phase = rng.uniform(0, 2 * np.pi, 3)
    base = np.stack(
        [
            0.45 + 0.15 * np.sin(2 * np.pi * 2 * xx + phase[0]),
            0.50 + 0.15 * np.sin(2 * np.pi * 3 * yy + phase[1]),
            0.40 + 0.10 * np.sin(2 * np.pi * (xx + 2 * yy) + phase[2]),
        ],
        axis=-1,
    )
    road = (np.abs(((xx * 4) % 1) - 0.5) < 0.06) | (np.abs(((yy * 4) % 1) - 0.5) < 0.06)
    base[road] = 0.25
    return np.rint(np.clip(base, 0, 1) * 255).astype(np.uint8)


def _facade_texture(size: int, color, rng) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    tex = np.empty((size, size, 3))
    tex[:] = color
    windows = ((xx % 8) >= 3) & ((xx % 8) < 6) & ((yy % 8) >= 2) & ((yy % 8) < 6)
    tex[windows] *= 0.45
    tex += rng.uniform(-0.03, 0.03, size=3)
    return np.rint(np.clip(tex, 0, 1) * 255).astype(np.uint8)


def _uv(origin, tile_shape, atlas_shape, s, t):
    # s, t in [0, 1] across the tile; half-texel inset keeps lookups inside it.
    (ox, oy), (th, tw), (ah, aw) = origin, tile_shape[:2], atlas_shape[:2]
    return np.stack([(ox + 0.5 + s * (tw - 1)) / aw, (oy + 0.5 + t * (th - 1)) / ah], axis=-1)


def _box_footprints(cfg: ToySceneConfig, rng) -> list:
    boxes, tries = [], 0
    lim = cfg.half_extent_m * 0.8
    while len(boxes) < cfg.buildings and tries < 500:
        tries += 1
        w, d = rng.uniform(10, 22, size=2)
        cx, cy = rng.uniform(-lim + w, lim - w), rng.uniform(-lim + d, lim - d)
        # keep the north-south street through x = 0 clear for ground cameras
        if abs(cx) < w / 2 + 6:
            continue
        if any(abs(cx - b[0]) < (w + b[2]) / 2 + 4 and abs(cy - b[1]) < (d + b[3]) / 2 + 4 for b in boxes):
            continue
        boxes.append((cx, cy, w, d, rng.uniform(8, 30)))
    return boxes


def toy_city(cfg: ToySceneConfig = ToySceneConfig()) -> TriangleMesh:
    """Textured ground grid plus box buildings (walls and roofs)."""
    rng = np.random.default_rng(cfg.seed)
    boxes = _box_footprints(cfg, rng)
    images = [_ground_texture(256, rng)]
    for _ in boxes:
        images.append(_facade_texture(32, rng.uniform(0.5, 0.9, size=3), rng))
        images.append(np.full((8, 8, 3), rng.integers(60, 200, size=3), dtype=np.uint8))
    atlas, origins, _ = pack_atlas(images)

    verts, faces, uvs = [], [], []

    def quad(corners, st, k):
        base = len(verts)
        verts.extend(corners)
        uv = _uv(origins[k], images[k].shape, atlas.shape, st[:, 0], st[:, 1])
        for tri in ((0, 1, 2), (0, 2, 3)):
            faces.append([base + i for i in tri])
            uvs.append(uv[list(tri)])

    n, h = cfg.ground_cells, cfg.half_extent_m
    step = 2 * h / n
    for r in range(n):
        for c in range(n):
            x0, y0 = -h + c * step, -h + r * step
            corners = [[x0, y0, 0], [x0 + step, y0, 0], [x0 + step, y0 + step, 0], [x0, y0 + step, 0]]
            st = np.array([[c, n - r], [c + 1, n - r], [c + 1, n - r - 1], [c, n - r - 1]], float) / n
            quad(corners, st, 0)

    wall_st = np.array([[0, 1], [1, 1], [1, 0], [0, 0]], float)
    for b, (cx, cy, w, d, top) in enumerate(boxes):
        x0, x1, y0, y1 = cx - w / 2, cx + w / 2, cy - d / 2, cy + d / 2
        ring = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        for k in range(4):
            (ax, ay), (bx, by) = ring[k], ring[(k + 1) % 4]
            quad([[ax, ay, 0], [bx, by, 0], [bx, by, top], [ax, ay, top]], wall_st, 1 + 2 * b)
        quad([[x, y, top] for x, y in ring], wall_st, 2 + 2 * b)

    return TriangleMesh(np.array(verts, float), np.array(faces), np.array(uvs), atlas)


def satellite_camera(heading_deg: float, cfg: ToySceneConfig) -> GroundCamera:
    """A high camera tilted ``sat_off_nadir_deg`` from nadir, aimed at the origin."""
    tilt = math.radians(cfg.sat_off_nadir_deg)
    h = math.radians(heading_deg)
    back = cfg.sat_altitude_m * math.tan(tilt)
    center = np.array([-back * math.sin(h), -back * math.cos(h), cfg.sat_altitude_m])
    pitch = -(90.0 - cfg.sat_off_nadir_deg)
    return GroundCamera(
        look_rotation(heading_deg, pitch),
        center,
        cfg.sat_fov_deg,
        cfg.sat_size_px,
        cfg.sat_size_px,
        near_m=1.0,
        far_m=10 * cfg.sat_altitude_m,
    )


def as_satellite_view(cam: GroundCamera, image: np.ndarray) -> SatelliteView:
    """Same camera in the integer-pixel-center convention of satellite views."""
    f = cam.focal_px
    return SatelliteView(
        image,
        f,
        f,
        cam.width_px / 2.0 - 0.5,
        cam.height_px / 2.0 - 0.5,
        cam.rotation,
        cam.translation,
    )


def render_satellite_views(mesh: TriangleMesh, cfg: ToySceneConfig = ToySceneConfig()):
    """``[(SatelliteView, depth)]`` for evenly spread azimuths; empty depth is 0."""
    out = []
    for k in range(cfg.sat_views):
        cam = satellite_camera(360.0 * k / cfg.sat_views + 15.0, cfg)
        fb = rasterize(mesh, cam)
        depth = np.where(np.isfinite(fb.depth), fb.depth, 0.0)
        out.append((as_satellite_view(cam, fb.color), depth))
    return out


def street_template(size_px: int = 256, fov_deg: float = 75.0) -> GroundCamera:
    return GroundCamera.looking([0.0, 0.0, 1.7], 0.0, 0.0, fov_deg=fov_deg, width_px=size_px, height_px=size_px)


def street_start(cfg: ToySceneConfig = ToySceneConfig()) -> np.ndarray:
    """Start of a northbound walk down the clear street at x = 0."""
    return np.array([0.0, -cfg.half_extent_m * 0.6, 1.7])


def write_toy_scene(out_dir, cfg: ToySceneConfig = ToySceneConfig()) -> dict:
    """Write ``satellite.cams`` with per-view PNG images and NPY depths.

    Returns the paths written, keyed ``cameras``, ``truth_mesh``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = toy_city(cfg)
    cams_path = out / "satellite.cams"
    views = {}
    for k, (view, depth) in enumerate(render_satellite_views(truth, cfg)):
        name = f"sat{k:02d}"
        views[name] = view
        write_image(out / f"{name}.png", view.image)
        write_depth(satellite_depth_path(cams_path, name), depth)
    write_cameras(cams_path, views)
    write_mesh(out / "truth.obj", truth)
    return {"cameras": cams_path, "truth_mesh": out / "truth.obj"}
