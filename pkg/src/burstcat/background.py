"""Adaptive per-pixel Gaussian-mixture background subtraction (MOG2 style).

The model runs on grayscale intensities in [0, 1].  A burst's foreground
channel is the union of the masks produced while feeding frames 2 and 3 to a
model initialised from frame 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor_core import Burst, DimensionError, rgb_to_gray


@dataclass(frozen=True)
class Mog2Params:
    max_components: int = 5
    alpha: float = 0.3
    var_threshold: float = 16.0
    background_ratio: float = 0.9
    var_init: float = 0.0225
    var_min: float = 0.0004
    var_max: float = 0.25
    complexity_prune: float = 0.05

    def __post_init__(self):
        if not (self.var_min <= self.var_init <= self.var_max):
            raise ValueError("need var_min <= var_init <= var_max")
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 < self.background_ratio < 1:
            raise ValueError(f"background_ratio must be in (0, 1), got {self.background_ratio}")
        if self.max_components < 1:
            raise ValueError("max_components must be >= 1")


@dataclass
class MixtureGrid:
    """Per-pixel mixtures, components sorted by weight / sigma (descending).

    Slots at index >= ``nmodes`` are unused and zeroed.
    """

    weight: np.ndarray  # (H, W, M)
    mean: np.ndarray
    var: np.ndarray
    nmodes: np.ndarray  # (H, W) int32
    params: Mog2Params = field(default_factory=Mog2Params)

    @classmethod
    def from_frame(cls, gray: np.ndarray, params: Mog2Params = Mog2Params()) -> "MixtureGrid":
        gray = _gray(gray)
        h, w = gray.shape
        m = params.max_components
        weight = np.zeros((h, w, m))
        mean = np.zeros((h, w, m))
        var = np.zeros((h, w, m))
        weight[..., 0] = 1.0
        mean[..., 0] = gray
        var[..., 0] = params.var_init
        return cls(weight, mean, var, np.ones((h, w), dtype=np.int32), params)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nmodes.shape

    def copy(self) -> "MixtureGrid":
        return MixtureGrid(self.weight.copy(), self.mean.copy(), self.var.copy(),
                           self.nmodes.copy(), self.params)


def _gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        img = rgb_to_gray(img)
    elif img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim != 2:
        raise DimensionError(f"expected a grayscale or RGB image, got shape {img.shape}")
    return img


def mog2_update(model: MixtureGrid, frame: np.ndarray, impl=None) -> tuple[MixtureGrid, np.ndarray]:
    """Feed one frame; returns the updated model and a binary float mask (1 = foreground).

    The input model is left untouched.  ``impl`` selects a kernel module
    (defaults to the one chosen at import).
    """
    gray = _gray(frame)
    if gray.shape != model.shape:
        raise DimensionError(f"frame {gray.shape} does not match model {model.shape}")
    h, w = model.shape
    m = model.params.max_components
    new = model.copy()
    p = new.params
    update = (impl or kernels).mog2_update
    fg = update(
        new.weight.reshape(h * w, m), new.mean.reshape(h * w, m), new.var.reshape(h * w, m),
        new.nmodes.reshape(h * w), np.ascontiguousarray(gray.reshape(h * w)),
        p.alpha, p.var_threshold, p.background_ratio, p.var_init, p.var_min, p.var_max,
        p.complexity_prune,
    )
    return new, np.asarray(fg, dtype=np.float32).reshape(h, w)


def burst_foreground(burst: Burst | tuple, params: Mog2Params = Mog2Params()) -> np.ndarray:
    """Union of the frame-2 and frame-3 foreground masks, shape (H, W), values {0, 1}."""
    frames = burst.frames if isinstance(burst, Burst) else tuple(burst)
    if len(frames) != 3:
        raise DimensionError(f"a burst has exactly 3 frames, got {len(frames)}")
    model = MixtureGrid.from_frame(frames[0], params)
    model, fg2 = mog2_update(model, frames[1])
    _, fg3 = mog2_update(model, frames[2])
    return np.maximum(fg2, fg3)
