"""Equirectangular panoramas and their resampling into perspective views.

Conventions
-----------
* Panorama pixel coordinates are continuous with integer values at pixel
  centers: column ``u`` maps to azimuth ``(u + 0.5) / W * 360`` measured from
  the left edge, row ``v`` maps to altitude ``90 - (v + 0.5) / H * 180``.
* Directions use a y-up frame: azimuth ``atan2(x, z)`` (0 along +z, growing
  toward +x), altitude ``asin(y)``.
* Perspective cameras have +x right, +y up, +z forward and are oriented by a
  yaw (about +y) applied after a pitch (about -x); there is no roll.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError

STANDARD_VIEW_LABELS = ("LR", "LF", "RF", "RR")
STANDARD_VIEW_THETAS = (60.0, 120.0, 240.0, 300.0)
STANDARD_VIEW_PHI = 15.0
STANDARD_VIEW_FOV = 75.0
STANDARD_VIEW_SIZE = 256


@dataclass
class Panorama:
    pixels: np.ndarray
    heading_deg: float = 0.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim not in (2, 3):
            raise ParameterError(f"panorama pixels must be HxW or HxWxC, got {self.pixels.shape}")
        h, w = self.pixels.shape[:2]
        if w != 2 * h:
            raise ParameterError(f"equirectangular panorama must be 2:1, got {w}x{h}")
        if not 0.0 <= self.heading_deg < 360.0:
            raise ParameterError(f"heading_deg must lie in [0, 360), got {self.heading_deg}")

    @property
    def width_px(self) -> int:
        return self.pixels.shape[1]

    @property
    def height_px(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class PerspectiveSpec:
    theta_deg: float
    phi_deg: float
    fov_deg: float
    height_px: int
    width_px: int

    def __post_init__(self):
        if not 0.0 < self.fov_deg < 180.0:
            raise ParameterError(f"fov_deg must lie in (0, 180), got {self.fov_deg}")
        if not -90.0 <= self.phi_deg <= 90.0:
            raise ParameterError(f"phi_deg must lie in [-90, 90], got {self.phi_deg}")
        if self.height_px < 1 or self.width_px < 1:
            raise ParameterError("perspective image must be at least 1x1")

    @property
    def focal_px(self) -> float:
        return (self.width_px / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)


def standard_view_specs(size: int = STANDARD_VIEW_SIZE) -> dict[str, PerspectiveSpec]:
    """The four street-view crops (LR, LF, RF, RR) keyed by label."""
    return {
        label: PerspectiveSpec(theta, STANDARD_VIEW_PHI, STANDARD_VIEW_FOV, size, size)
        for label, theta in zip(STANDARD_VIEW_LABELS, STANDARD_VIEW_THETAS)
    }


def pano_pixel_to_angles(u: float, v: float, pano: Panorama) -> tuple[float, float]:
    w, h = pano.width_px, pano.height_px
    if not (0.0 <= u < w and 0.0 <= v < h):
        raise DomainError(f"pixel ({u}, {v}) outside {w}x{h} panorama")
    theta = (u + 0.5) / w * 360.0
    phi = 90.0 - (v + 0.5) / h * 180.0
    return theta, phi


def angles_to_pano_pixel(theta_deg: float, phi_deg: float, pano: Panorama) -> tuple[float, float]:
    w, h = pano.width_px, pano.height_px
    # Wrap in pixel space so u in [0, W) survives the forward map unchanged.
    # No clamp on phi: rows in (H - 0.5, H) sit half a pixel past the pole.
    u = (theta_deg / 360.0 * w - 0.5) % w
    v = (90.0 - phi_deg) / 180.0 * h - 0.5
    return u, v


def direction_to_angles(d) -> tuple:
    """Azimuth and altitude (degrees) of one or many direction vectors."""
    d = np.asarray(d, dtype=np.float64)
    n = np.linalg.norm(d, axis=-1)
    theta = np.degrees(np.arctan2(d[..., 0], d[..., 2])) % 360.0
    phi = np.degrees(np.arcsin(np.clip(d[..., 1] / n, -1.0, 1.0)))
    return theta, phi


def angles_to_direction(theta_deg, phi_deg) -> np.ndarray:
    t = np.radians(theta_deg)
    p = np.radians(phi_deg)
    return np.stack([np.cos(p) * np.sin(t), np.sin(p), np.cos(p) * np.cos(t)], axis=-1)


def yaw_matrix(theta_deg: float) -> np.ndarray:
    a = math.radians(theta_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def pitch_matrix(phi_deg: float) -> np.ndarray:
    a = math.radians(phi_deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def _local_rays(ii, jj, spec: PerspectiveSpec) -> np.ndarray:
    f = spec.focal_px
    x = ii + 0.5 - spec.width_px / 2.0
    y = -(jj + 0.5 - spec.height_px / 2.0)
    d = np.stack([x, y, np.full(np.shape(x), f)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def perspective_ray(i: float, j: float, spec: PerspectiveSpec) -> np.ndarray:
    """World-frame unit direction through pixel (column i, row j)."""
    if not (0.0 <= i < spec.width_px and 0.0 <= j < spec.height_px):
        raise DomainError(f"pixel ({i}, {j}) outside {spec.width_px}x{spec.height_px} view")
    d = _local_rays(np.float64(i), np.float64(j), spec)
    d = yaw_matrix(spec.theta_deg) @ pitch_matrix(spec.phi_deg) @ d
    return d / np.linalg.norm(d)


def perspective_sample_coords(
    pano: Panorama, spec: PerspectiveSpec, theta_offset_deg: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Panorama sampling positions for every output pixel.

    Returns ``(col0, frac, v)``: the integer column left of the sample, the
    fractional column weight, and the continuous row. The column is split so
    that shifting ``theta`` by a whole number of panorama columns shifts
    ``col0`` exactly and leaves ``frac`` bit-identical.
    """
    w, h = pano.width_px, pano.height_px
    jj, ii = np.mgrid[0 : spec.height_px, 0 : spec.width_px].astype(np.float64)
    d = _local_rays(ii, jj, spec) @ pitch_matrix(spec.phi_deg).T
    # Yaw only adds to azimuth, so the view-relative azimuth is pitch-only.
    rel_cols = np.arctan2(d[..., 0], d[..., 2]) * (w / (2.0 * math.pi))
    phi = np.degrees(np.arcsin(np.clip(d[..., 1], -1.0, 1.0)))
    center_cols = (spec.theta_deg + theta_offset_deg) / 360.0 * w - 0.5
    base = math.floor(center_cols)
    rest = (center_cols - base) + rel_cols
    rest_floor = np.floor(rest)
    col0 = (base + rest_floor.astype(np.int64)) % w
    frac = rest - rest_floor
    v = (90.0 - phi) / 180.0 * h - 0.5
    return col0, frac, v


def resample_perspective(
    pano: Panorama, spec: PerspectiveSpec, relative_to_heading: bool = False
) -> np.ndarray:
    """Bilinearly resample a perspective view out of an equirectangular panorama.

    With ``relative_to_heading`` the view azimuth is taken in the world frame
    (true north) and the panorama heading is subtracted before sampling.
    """
    offset = -pano.heading_deg if relative_to_heading else 0.0
    col0, frac, v = perspective_sample_coords(pano, spec, offset)
    w, h = pano.width_px, pano.height_px
    col1 = (col0 + 1) % w
    v = np.clip(v, 0.0, h - 1.0)
    row0 = np.floor(v).astype(np.int64)
    row1 = np.minimum(row0 + 1, h - 1)
    fv = v - row0

    src = pano.pixels.astype(np.float64)
    if src.ndim == 3:
        frac = frac[..., None]
        fv = fv[..., None]
    top = src[row0, col0] * (1.0 - frac) + src[row0, col1] * frac
    bottom = src[row1, col0] * (1.0 - frac) + src[row1, col1] * frac
    out = top * (1.0 - fv) + bottom * fv

    if np.issubdtype(pano.pixels.dtype, np.integer):
        info = np.iinfo(pano.pixels.dtype)
        out = np.clip(np.rint(out), info.min, info.max)
    return out.astype(pano.pixels.dtype)
