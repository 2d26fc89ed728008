"""Synthetic fixtures with known ground truth shared across test modules."""

import numpy as np
from scipy import ndimage

from burstcat.kernels import compiled_module, fallback


def kernel_impls():
    mod = compiled_module()
    return [fallback] if mod is None else [fallback, mod]


def smooth_texture(shape, seed, sigma=2.0):
    rng = np.random.default_rng(seed)
    tex = ndimage.gaussian_filter(rng.random(shape), sigma, mode="wrap")
    tex = (tex - tex.min()) / (tex.max() - tex.min())
    return 0.1 + 0.8 * tex


def shifted_pair(size, dx, dy, seed, sigma=2.0):
    """Two crops of one texture; content moves by (dx, dy) from first to second."""
    pad = 16
    tex = smooth_texture((size + 2 * pad, size + 2 * pad), seed, sigma)
    a = tex[pad : pad + size, pad : pad + size]
    b = tex[pad - dy : pad - dy + size, pad - dx : pad - dx + size]
    return a, b


def moving_square_burst(seed, size=48, side=8, speed=4, noise=0.01):
    """Bright square moving ``speed`` px/frame along x on a dark noisy background.

    Returns (frames, ground-truth union of the frame-2 and frame-3 squares).
    """
    rng = np.random.default_rng(seed)
    y0 = int(rng.integers(4, size - side - 4))
    x0 = int(rng.integers(2, size - side - 2 * speed - 2))
    bg = 0.15 + 0.05 * rng.random()
    frames, masks = [], []
    for t in range(3):
        img = bg + noise * rng.standard_normal((size, size))
        m = np.zeros((size, size), bool)
        m[y0 : y0 + side, x0 + speed * t : x0 + speed * t + side] = True
        img[m] = 0.85
        frames.append(np.clip(img, 0, 1))
        masks.append(m)
    return tuple(frames), masks[1] | masks[2]


def finite_difference_grads(model, x, y, h=1e-5):
    """Central finite differences of the mean BCE loss for every parameter element."""
    grads = {}
    for name, p in model.params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp = model.loss(x, y)
            flat[i] = old - h
            lm = model.loss(x, y)
            flat[i] = old
            gflat[i] = (lp - lm) / (2 * h)
        grads[name] = g
    return grads


def relative_error(a, b):
    """Norm-based relative error between two gradient tensors."""
    num = np.linalg.norm(a - b)
    den = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return num / den
