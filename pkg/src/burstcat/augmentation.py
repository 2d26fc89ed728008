"""Seeded training-time augmentation applied consistently across a channel stack.

Order: horizontal flip (all channels) -> colour jitter (RGB image triplets
only) -> zoom crop and resize back (all channels).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optical_flow import hsv_to_rgb, rgb_to_hsv
from .tensor_core import ChannelRole, ChannelStack, resize_bilinear


class AugmentContractError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    color_prob: float = 0.5
    zoom_prob: float = 0.5
    hue_delta: tuple[float, float] = (-0.08, 0.08)
    saturation: tuple[float, float] = (0.6, 1.6)
    brightness: tuple[float, float] = (-0.05, 0.05)
    contrast: tuple[float, float] = (0.7, 1.3)
    zoom_fraction: tuple[float, float] = (0.02, 0.10)
    seed: int = 0

    def __post_init__(self):
        for name in ("flip_prob", "color_prob", "zoom_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("hue_delta", "saturation", "brightness", "contrast", "zoom_fraction"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty: {lo} > {hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class AugmentDraw:
    """Parameters drawn for one sample; ``None`` means the transform is skipped."""

    flip: bool
    hue: float | None
    saturation: float | None
    brightness: float | None
    contrast: float | None
    zoom: tuple[int, int, int, int] | None  # top, left, crop_h, crop_w


def draw_params(cfg: AugmentConfig, sample_key, height: int, width: int) -> AugmentDraw:
    """All random numbers for one sample, drawn in a fixed order from one stream."""
    rng = np.random.default_rng([cfg.seed, *sample_key])
    flip = rng.random() < cfg.flip_prob

    def maybe(lo_hi):
        fire = rng.random() < cfg.color_prob
        value = rng.uniform(*lo_hi)
        return value if fire else None

    hue = maybe(cfg.hue_delta)
    sat = maybe(cfg.saturation)
    bright = maybe(cfg.brightness)
    contrast = maybe(cfg.contrast)

    zoom_fire = rng.random() < cfg.zoom_prob
    frac = rng.uniform(*cfg.zoom_fraction)
    ch = max(1, int(round(height * (1 - frac))))
    cw = max(1, int(round(width * (1 - frac))))
    top = int(rng.integers(0, height - ch + 1))
    left = int(rng.integers(0, width - cw + 1))
    zoom = (top, left, ch, cw) if zoom_fire and (ch, cw) != (height, width) else None
    return AugmentDraw(flip, hue, sat, bright, contrast, zoom)


def hsv_color_jitter(rgb: np.ndarray, hue_delta=0.0, sat_factor=1.0, bright_delta=0.0,
                     contrast_factor=1.0) -> np.ndarray:
    """Hue shift, saturation scale, additive brightness, contrast about the channel mean."""
    rgb = np.asarray(rgb)
    out = rgb
    if hue_delta != 0.0 or sat_factor != 1.0:
        hsv = rgb_to_hsv(rgb.astype(np.float64))
        hsv[..., 0] = (hsv[..., 0] + hue_delta) % 1.0
        hsv[..., 1] = np.clip(hsv[..., 1] * sat_factor, 0.0, 1.0)
        out = hsv_to_rgb(hsv)
    if bright_delta != 0.0:
        out = out + bright_delta
    if contrast_factor != 1.0:
        mean = out.mean(axis=(0, 1), keepdims=True)
        out = (out - mean) * contrast_factor + mean
    return np.clip(out, 0.0, 1.0).astype(rgb.dtype, copy=False)


def flip_horizontal(data: np.ndarray) -> np.ndarray:
    return data[:, ::-1].copy()


def zoom_crop(data: np.ndarray, top: int, left: int, crop_h: int, crop_w: int) -> np.ndarray:
    h, w = data.shape[:2]
    crop = data[top : top + crop_h, left : left + crop_w]
    return resize_bilinear(crop, h, w).astype(data.dtype, copy=False)


def apply_draw(stack: ChannelStack, draw: AugmentDraw) -> ChannelStack:
    data = stack.data
    if draw.flip:
        data = flip_horizontal(data)
    color = (draw.hue, draw.saturation, draw.brightness, draw.contrast)
    if any(v is not None for v in color):
        data = data.copy()
        hue, sat, bright, con = color
        for k in stack.triplets(lambda r: r.is_image):
            data[..., k : k + 3] = hsv_color_jitter(
                data[..., k : k + 3],
                0.0 if hue is None else hue,
                1.0 if sat is None else sat,
                0.0 if bright is None else bright,
                1.0 if con is None else con,
            )
    if draw.zoom is not None:
        data = zoom_crop(data, *draw.zoom)
    if data is stack.data:
        return stack
    return ChannelStack(np.clip(data, 0.0, 1.0).astype(stack.data.dtype, copy=False), stack.roles)


def augment_stack(stack: ChannelStack, cfg: AugmentConfig, sample_key=(0, 0)) -> ChannelStack:
    if not isinstance(stack, ChannelStack) or not stack.roles or any(r == ChannelRole.RAW for r in stack.roles):
        raise AugmentContractError("augmentation needs a stack with channel roles")
    draw = draw_params(cfg, sample_key, stack.height, stack.width)
    return apply_draw(stack, draw)
