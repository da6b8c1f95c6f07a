"""Image and sequence quality metrics on [0, 1]-scaled images (peak value L = 1)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ParameterError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DEPTH_AGREEMENT = 0.05


@dataclass
class ImagePair:
    reference: np.ndarray
    candidate: np.ndarray

    def __post_init__(self):
        self.reference = _as_unit(self.reference)
        self.candidate = _as_unit(self.candidate)
        if self.reference.shape != self.candidate.shape:
            raise ShapeError(f"image shapes differ: {self.reference.shape} vs {self.candidate.shape}")
        for im in (self.reference, self.candidate):
            if im.size and (im.min() < 0 or im.max() > 1):
                raise ParameterError("image values must lie in [0, 1]")


@dataclass
class SequenceEval:
    scores: list = field(default_factory=list)
    coverage: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.scores)

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else math.nan


def _as_unit(x) -> np.ndarray:
    arr = np.asarray(x)
    if np.issubdtype(arr.dtype, np.integer):
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def _pair(reference, candidate) -> ImagePair:
    if isinstance(reference, ImagePair) and candidate is None:
        return reference
    return ImagePair(reference, candidate)


def psnr(reference, candidate=None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images.

    Accepts either two images or a single :class:`ImagePair`.
    """
    pair = _pair(reference, candidate)
    mse = float(np.mean((pair.reference - pair.candidate) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = sliding_window_view(x, k, axis=0) @ g
    return sliding_window_view(rows, k, axis=1) @ g


def ssim_map(reference, candidate=None) -> np.ndarray:
    """Local SSIM over valid window positions, shape (H-10, W-10[, C])."""
    pair = _pair(reference, candidate)
    x, y = pair.reference, pair.candidate
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ShapeError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[:2]}")
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    g = gaussian_window()
    c1, c2 = SSIM_K1**2, SSIM_K2**2
    maps = []
    for ch in range(x.shape[2]):
        a, b = x[..., ch], y[..., ch]
        mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
        var_a = _filter_valid(a * a, g) - mu_a**2
        var_b = _filter_valid(b * b, g) - mu_b**2
        cov = _filter_valid(a * b, g) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        maps.append(num / den)
    out = np.stack(maps, axis=-1)
    return out[..., 0] if pair.reference.ndim == 2 else out


def ssim(reference, candidate=None) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels."""
    return float(np.mean(ssim_map(reference, candidate)))


def _pixel_grid_to_world(depth: np.ndarray, cam):
    h, w = depth.shape
    jj, ii = np.mgrid[0:h, 0:w] + 0.5
    f = cam.focal_px
    pc = np.stack([(ii - w / 2.0) / f * depth, (jj - h / 2.0) / f * depth, depth], axis=-1)
    return pc @ cam.rotation + cam.center


def warp_frame(src_frame, src_depth, src_cam, dst_depth, dst_cam, tol: float = DEPTH_AGREEMENT):
    """Pull ``src_frame`` into the destination view using the destination depth.

    Returns ``(warped, mask)``; ``mask`` marks destination pixels whose 3-D
    point lands inside the source frame with source depth agreeing within
    ``tol`` (relative). Sampling is nearest-pixel.
    """
    src = _as_unit(src_frame)
    valid = np.isfinite(dst_depth)
    world = _pixel_grid_to_world(np.where(valid, dst_depth, 1.0), dst_cam)
    pc = src_cam.to_camera(world)
    z = pc[..., 2]
    xy = src_cam.project_camera_points(pc)
    h, w = src_depth.shape
    with np.errstate(invalid="ignore"):
        inside = valid & (z > 0) & (xy[..., 0] >= 0) & (xy[..., 0] < w) & (xy[..., 1] >= 0) & (xy[..., 1] < h)
    col = np.clip(np.floor(np.nan_to_num(xy[..., 0])).astype(np.int64), 0, w - 1)
    row = np.clip(np.floor(np.nan_to_num(xy[..., 1])).astype(np.int64), 0, h - 1)
    sd = src_depth[row, col]
    with np.errstate(invalid="ignore"):
        mask = inside & np.isfinite(sd) & (np.abs(sd - z) <= tol * z)
    warped = np.zeros_like(src)
    warped[mask] = src[row[mask], col[mask]]
    return warped, mask


def masked_psnr(a, b, mask) -> float:
    a, b = _as_unit(a), _as_unit(b)
    if not mask.any():
        return math.nan
    mse = float(np.mean((a[mask] - b[mask]) ** 2))
    return math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)


def warp_consistency(frames: Sequence, depths: Sequence, cameras: Sequence) -> SequenceEval:
    """Masked PSNR between each frame and its predecessor warped into its view."""
    if not len(frames) == len(depths) == len(cameras):
        raise ParameterError("frames, depths and cameras must have equal counts")
    if len(frames) < 2:
        raise ParameterError("warp consistency needs at least two frames")
    result = SequenceEval()
    for i in range(len(frames) - 1):
        warped, mask = warp_frame(frames[i], depths[i], cameras[i], depths[i + 1], cameras[i + 1])
        result.scores.append(masked_psnr(warped, frames[i + 1], mask))
        result.coverage.append(float(mask.sum()) / max(1, int(np.isfinite(depths[i + 1]).sum())))
    return result


def sequence_scores(references: Sequence, candidates: Sequence, metric) -> SequenceEval:
    if len(references) != len(candidates):
        raise ParameterError("reference and candidate sequences differ in length")
    return SequenceEval([metric(r, c) for r, c in zip(references, candidates)])
