"""Deterministic DDIM sampling with pluggable noise predictors.

Latents are plain ``float64`` arrays shaped ``(num_views, channels, h, w)``.
A noise predictor is any callable ``predictor(latent, timestep, cond)`` that
returns a noise estimate shaped like the noise block being denoised.

Initial noise comes from numpy's PCG64 bit generator seeded with the user
seed, drawn with ``Generator.standard_normal`` in C order.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractViolation, ParameterError, ShapeError

DEFAULT_TRAIN_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_INFERENCE_STEPS = 20
RNG_NAME = "numpy-PCG64/standard_normal/v1"


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(init=False, repr=False)
    alpha_bars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) == 0:
            raise ParameterError("betas must be a non-empty 1-D sequence")
        if ((betas <= 0) | (betas >= 1)).any():
            raise ParameterError("every beta must lie in (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        if (np.diff(alpha_bars) >= 0).any():
            raise ParameterError("alpha_bar must be strictly decreasing")
        for name, arr in (("betas", betas), ("alphas", alphas), ("alpha_bars", alpha_bars)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_train_steps(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        # t = -1 denotes the clean end of the chain.
        return 1.0 if t < 0 else float(self.alpha_bars[t])


def make_schedule(
    num_train_steps: int = DEFAULT_TRAIN_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta schedule."""
    if num_train_steps < 1:
        raise ParameterError("num_train_steps must be >= 1")
    if not 0 < beta_start <= beta_end < 1:
        raise ParameterError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    return NoiseSchedule(np.linspace(beta_start, beta_end, num_train_steps))


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


def _check_step(t: int, sched: NoiseSchedule):
    if not 0 <= t < sched.num_train_steps:
        raise ParameterError(f"timestep {t} outside [0, {sched.num_train_steps})")


def add_noise(z0, t: int, eps, sched: NoiseSchedule) -> np.ndarray:
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_same_shape(z0, eps, "add_noise")
    _check_step(t, sched)
    ab = sched.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def predict_x0(z_t, eps_hat, t: int, sched: NoiseSchedule) -> np.ndarray:
    ab = sched.alpha_bar(t)
    return (z_t - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddim_step(z_t, eps_hat, t: int, t_prev: int, sched: NoiseSchedule) -> np.ndarray:
    """One eta=0 DDIM update from ``t`` to ``t_prev`` (``-1`` returns the x0 estimate)."""
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    _check_same_shape(z_t, eps_hat, "ddim_step")
    if t_prev >= t:
        raise ParameterError(f"t_prev ({t_prev}) must be below t ({t})")
    _check_step(t, sched)
    x0 = predict_x0(z_t, eps_hat, t, sched)
    ab_prev = sched.alpha_bar(t_prev)
    return np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps_hat


def cfg_combine(eps_uncond, eps_cond, scale: float) -> np.ndarray:
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    _check_same_shape(eps_uncond, eps_cond, "cfg_combine")
    # Exact branches for the identity scales; the general formula rounds.
    if scale == 1:
        return eps_cond.copy()
    if scale == 0:
        return eps_uncond.copy()
    return eps_uncond + scale * (eps_cond - eps_uncond)


def inference_timesteps(num_steps: int, sched: NoiseSchedule) -> np.ndarray:
    """Descending, uniformly spaced integer timesteps from t_max down to 0."""
    n = sched.num_train_steps
    if not 1 <= num_steps <= n:
        raise ParameterError(f"num_steps must lie in [1, {n}], got {num_steps}")
    return np.rint(np.linspace(n - 1, 0, num_steps)).astype(np.int64)


def initial_noise(shape: Sequence[int], seed: int) -> np.ndarray:
    return np.random.Generator(np.random.PCG64(seed)).standard_normal(tuple(shape))


# --- conditioning --------------------------------------------------------


class CfgDrop(str, enum.Enum):
    """Which condition the unconditional CFG branch removes."""

    SAT = "sat"
    MOTION = "motion"
    BOTH = "both"


@dataclass
class ConditionBundle:
    sat_features: Optional[np.ndarray] = None
    motion_features: Optional[np.ndarray] = None
    ground_views: Optional[list] = None
    is_null: bool = False

    def null(self, drop: CfgDrop = CfgDrop.BOTH) -> "ConditionBundle":
        """The unconditional counterpart: dropped features zeroed, flag set."""
        drop = CfgDrop(drop)
        sat, motion = self.sat_features, self.motion_features
        if drop in (CfgDrop.SAT, CfgDrop.BOTH) and sat is not None:
            sat = np.zeros_like(sat)
        if drop in (CfgDrop.MOTION, CfgDrop.BOTH) and motion is not None:
            motion = np.zeros_like(motion)
        return replace(self, sat_features=sat, motion_features=motion, is_null=True)


def stand_in_features(images: Sequence[np.ndarray], factor: int = 8) -> np.ndarray:
    """Deterministic feature grids from rendered views: box-downsampled pixels.

    Images are (H, W, C) in [0, 1] or uint8; output is (len(images), C, H/f, W/f)
    scaled to [-1, 1].
    """
    feats = []
    for im in images:
        x = np.asarray(im, dtype=np.float64)
        if np.issubdtype(np.asarray(im).dtype, np.integer):
            x = x / 255.0
        feats.append(_box_down(np.moveaxis(x * 2.0 - 1.0, -1, 0), factor))
    return np.stack(feats)


def _box_down(x: np.ndarray, factor: int) -> np.ndarray:
    c, h, w = x.shape
    if h % factor or w % factor:
        raise ParameterError(f"factor {factor} does not divide {h}x{w}")
    return x.reshape(c, h // factor, factor, w // factor, factor).mean(axis=(2, 4))


# --- predictors -----------------------------------------------------------

NoisePredictor = Callable[[np.ndarray, int, ConditionBundle], np.ndarray]


def _noise_block(latent: np.ndarray, channels: Optional[int]) -> np.ndarray:
    return latent if channels is None else latent[:, -channels:]


@dataclass(frozen=True)
class ZeroDenoiser:
    """Predicts zero noise; ``channels`` selects the trailing noise block of z'."""

    channels: Optional[int] = None

    def __call__(self, latent, t, cond):
        return np.zeros_like(_noise_block(latent, self.channels))


@dataclass(frozen=True)
class OracleGaussianDenoiser:
    """Closed-form optimal noise predictor for data ~ N(mu, sigma^2 I)."""

    mu: float
    sigma: float
    schedule: NoiseSchedule
    channels: Optional[int] = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ParameterError("sigma must be non-negative")

    def mean(self, latent, cond):
        return self.mu

    def __call__(self, latent, t, cond):
        z = _noise_block(np.asarray(latent, dtype=np.float64), self.channels)
        ab = self.schedule.alpha_bar(t)
        mu = self.mean(latent, cond)
        return np.sqrt(1.0 - ab) * (z - np.sqrt(ab) * mu) / (ab * self.sigma**2 + 1.0 - ab)


def oracle_gaussian_denoiser(mu: float, sigma: float, sched: NoiseSchedule) -> OracleGaussianDenoiser:
    return OracleGaussianDenoiser(mu, sigma, sched)


@dataclass(frozen=True)
class ConditionalGaussianDenoiser(OracleGaussianDenoiser):
    """Gaussian oracle whose per-element mean comes from the condition.

    ``source`` picks the mean: ``"sat"`` / ``"motion"`` read the feature grid
    (broadcast to the noise block), ``"init"`` reads the leading init block of
    a temporal latent. A null condition falls back to the scalar ``mu``.
    A stand-in for trained networks that makes guidance observable.
    """

    source: str = "sat"

    def mean(self, latent, cond):
        if cond is None or cond.is_null:
            return self.mu
        if self.source == "init":
            return np.asarray(latent)[:, : self.channels]
        feats = cond.sat_features if self.source == "sat" else cond.motion_features
        return self.mu if feats is None else feats


class FilePredictor:
    """Replays precomputed noise predictions stored in a tensor container.

    The stored array is ``(S, *block)`` with one row per inference timestep,
    or ``(S, 2, *block)`` holding ``[uncond, cond]`` rows for guided runs.
    ``timesteps`` maps each requested timestep to its row.
    """

    def __init__(self, predictions: np.ndarray | str | Path, timesteps: Sequence[int]):
        if isinstance(predictions, (str, Path)):
            from .fileio import read_tensor

            predictions = read_tensor(predictions)
        self.predictions = np.asarray(predictions, dtype=np.float64)
        self.rows = {int(t): k for k, t in enumerate(timesteps)}
        if len(self.predictions) != len(self.rows):
            raise ContractViolation(
                f"prediction file holds {len(self.predictions)} steps, schedule has {len(self.rows)}"
            )

    def __call__(self, latent, t, cond):
        if int(t) not in self.rows:
            raise ContractViolation(f"no stored prediction for timestep {t}")
        row = self.predictions[self.rows[int(t)]]
        if row.ndim == 5:
            row = row[0] if (cond is not None and cond.is_null) else row[1]
        return row.copy()


# --- sampling loops --------------------------------------------------------


def _checked(eps, expected_shape, where: str) -> np.ndarray:
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != tuple(expected_shape):
        raise ContractViolation(f"{where}: predictor returned shape {eps.shape}, expected {tuple(expected_shape)}")
    if not np.isfinite(eps).all():
        raise ContractViolation(f"{where}: predictor returned non-finite values")
    return eps


def _guided_eps(predictor, model_input, t, cond, cfg_scale, cfg_drop, block_shape):
    cond = cond if cond is not None else ConditionBundle()
    eps_c = _checked(predictor(model_input, int(t), cond), block_shape, "conditional branch")
    if cfg_scale == 1:
        return eps_c
    eps_u = _checked(predictor(model_input, int(t), cond.null(cfg_drop)), block_shape, "unconditional branch")
    return cfg_combine(eps_u, eps_c, cfg_scale)


def sample_guided(
    predictor: NoisePredictor,
    cond: Optional[ConditionBundle],
    shape: Sequence[int],
    num_steps: int = DEFAULT_INFERENCE_STEPS,
    cfg_scale: float = 1.0,
    seed: int = 0,
    sched: Optional[NoiseSchedule] = None,
    cfg_drop: CfgDrop = CfgDrop.BOTH,
) -> np.ndarray:
    """Satellite-guided denoising: z_T ~ N(0, I) iterated to z_0 with DDIM."""
    sched = sched or make_schedule()
    shape = tuple(shape)
    if len(shape) != 4 or min(shape) < 1:
        raise ShapeError(f"latent shape must be (views, channels, h, w), got {shape}")
    steps = inference_timesteps(num_steps, sched)
    z = initial_noise(shape, seed)
    for k, t in enumerate(steps):
        t_prev = int(steps[k + 1]) if k + 1 < len(steps) else -1
        eps = _guided_eps(predictor, z, t, cond, cfg_scale, cfg_drop, shape)
        z = ddim_step(z, eps, int(t), t_prev, sched)
    return z


def sample_temporal(
    predictor_phi: NoisePredictor,
    z_init_slice: np.ndarray,
    cond: Optional[ConditionBundle],
    num_views: int,
    shape: Optional[Sequence[int]] = None,
    num_steps: int = DEFAULT_INFERENCE_STEPS,
    cfg_scale: float = 1.0,
    seed: int = 0,
    sched: Optional[NoiseSchedule] = None,
    cfg_drop: CfgDrop = CfgDrop.BOTH,
) -> np.ndarray:
    """Satellite-temporal denoising over ``num_views`` views.

    The predictor sees ``[z_init, z_t]`` concatenated on channels and must
    return noise for the trailing ``C`` channels only; the init block is
    never updated.
    """
    sched = sched or make_schedule()
    z_init_slice = np.asarray(z_init_slice, dtype=np.float64)
    if z_init_slice.ndim != 4 or z_init_slice.shape[0] != 1:
        raise ShapeError(f"init latent must be (1, C, h, w), got {z_init_slice.shape}")
    if num_views < 1:
        raise ParameterError("num_views must be >= 1")
    block = (num_views,) + z_init_slice.shape[1:]
    if shape is not None and tuple(shape) not in (block, block[1:]):
        raise ShapeError(f"requested shape {tuple(shape)} disagrees with init latent {block}")
    z_init = np.repeat(z_init_slice, num_views, axis=0)
    z_init.setflags(write=False)
    steps = inference_timesteps(num_steps, sched)
    z = initial_noise(block, seed)
    for k, t in enumerate(steps):
        t_prev = int(steps[k + 1]) if k + 1 < len(steps) else -1
        z_prime = np.concatenate([z_init, z], axis=1)
        eps = _guided_eps(predictor_phi, z_prime, t, cond, cfg_scale, cfg_drop, block)
        z = ddim_step(z, eps, int(t), t_prev, sched)
    return z


def training_loss(predictor, z_prime_0, t: int, cond, eps, sched: NoiseSchedule) -> float:
    """Noise-prediction MSE on the trailing noise block of a clean z'."""
    z_prime_0 = np.asarray(z_prime_0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if z_prime_0.ndim != 4 or z_prime_0.shape[1] % 2:
        raise ShapeError(f"z' must be (views, 2C, h, w), got {z_prime_0.shape}")
    c = z_prime_0.shape[1] // 2
    init, z0 = z_prime_0[:, :c], z_prime_0[:, c:]
    _check_same_shape(z0, eps, "training_loss")
    z_t = add_noise(z0, t, eps, sched)
    pred = predictor(np.concatenate([init, z_t], axis=1), int(t), cond)
    pred = np.asarray(pred, dtype=np.float64)
    _check_same_shape(eps, pred, "training_loss prediction")
    return float(np.mean((eps - pred) ** 2))


# --- latent codecs ------------------------------------------------------------


@dataclass(frozen=True)
class LatentCodec:
    name: str
    factor: int = 1

    def encode(self, image: np.ndarray) -> np.ndarray:
        """(H, W, C) image -> (1, C, H/f, W/f) latent."""
        x = np.asarray(image, dtype=np.float64)
        if x.ndim == 2:
            x = x[..., None]
        chw = np.moveaxis(x, -1, 0)
        if self.factor == 1:
            return chw[None].copy()
        return _box_down(chw, self.factor)[None]

    def decode(self, latent: np.ndarray) -> np.ndarray:
        z = np.asarray(latent, dtype=np.float64)
        if z.ndim != 4 or z.shape[0] != 1:
            raise ShapeError(f"latent slice must be (1, C, h, w), got {z.shape}")
        chw = z[0]
        if self.factor > 1:
            chw = chw.repeat(self.factor, axis=1).repeat(self.factor, axis=2)
        return np.moveaxis(chw, 0, -1).copy()


def identity_codec() -> LatentCodec:
    return LatentCodec("identity", 1)


def downscale_codec(factor: int = 8) -> LatentCodec:
    if factor < 1:
        raise ParameterError("codec factor must be >= 1")
    return LatentCodec(f"downscale{factor}", factor)


def codec_from_name(name: str) -> LatentCodec:
    if name == "identity":
        return identity_codec()
    if name.startswith("downscale"):
        tail = name[len("downscale") :].lstrip(":")
        return downscale_codec(int(tail) if tail else 8)
    raise ParameterError(f"unknown codec {name!r}")
