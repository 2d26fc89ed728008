"""Dense two-frame optical flow by polynomial expansion (Farnebäck), and flow images.

Coordinates: ``x`` runs along columns, ``y`` along rows (downwards).  Flow
vectors are ``(dx, dy)`` in pixels and map a point in the earlier frame to its
position in the later frame.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .tensor_core import Burst, DimensionError, resize_bilinear, rgb_to_gray

# (x power, y power) of the basis 1, x, y, x^2, y^2, xy
_BASIS = ((0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1))

# Regulariser for the 2x2 solve; 1e-3 on a 0..255 intensity scale.
_DET_EPS = 1e-3 / 255.0**4
_MIN_LEVEL_SIZE = 16


@dataclass(frozen=True)
class FlowParams:
    pyramid_scale: float = 0.5
    levels: int = 3
    window: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.2

    def __post_init__(self):
        if not 0 < self.pyramid_scale < 1:
            raise ValueError(f"pyramid_scale must be in (0, 1), got {self.pyramid_scale}")
        if self.levels < 1 or self.iterations < 1:
            raise ValueError("levels and iterations must be >= 1")
        for name in ("window", "poly_n"):
            v = getattr(self, name)
            if v < 3 or v % 2 == 0:
                raise ValueError(f"{name} must be odd and >= 3, got {v}")


@dataclass(frozen=True)
class PolyExpansion:
    """Per-pixel fit f(p + u) ~ u'Au + b'u + c.

    ``coeffs`` has shape (H, W, 6) ordered c, b_x, b_y, A_xx, A_yy, 2*A_xy.
    """

    coeffs: np.ndarray

    @property
    def A(self) -> np.ndarray:
        r = self.coeffs
        off = r[..., 5] / 2
        return np.stack([np.stack([r[..., 3], off], -1), np.stack([off, r[..., 4]], -1)], -2)

    @property
    def b(self) -> np.ndarray:
        return self.coeffs[..., 1:3]

    @property
    def c(self) -> np.ndarray:
        return self.coeffs[..., 0]


def _applicability(poly_n: int, sigma: float):
    t = np.arange(-(poly_n // 2), poly_n // 2 + 1, dtype=np.float64)
    return t, np.exp(-(t**2) / (2 * sigma**2))


def _correlate_axis(img, weights, axis):
    return ndimage.correlate1d(img, weights, axis=axis, mode="constant", cval=0.0)


@functools.lru_cache(maxsize=32)
def _inverse_normal_matrices(h: int, w: int, poly_n: int, sigma: float) -> np.ndarray:
    """Per-pixel inverse of the 6x6 weighted normal matrix, windows cut at the border."""
    t, a = _applicability(poly_n, sigma)
    ones_x = np.ones(w)
    ones_y = np.ones(h)
    # 1-D moment sums over the part of the window that lies inside the image
    sx = [_correlate_axis(ones_x, a * t**p, 0) for p in range(5)]
    sy = [_correlate_axis(ones_y, a * t**q, 0) for q in range(5)]
    g = np.empty((h, w, 6, 6))
    for i, (pi, qi) in enumerate(_BASIS):
        for j, (pj, qj) in enumerate(_BASIS):
            g[:, :, i, j] = sy[qi + qj][:, None] * sx[pi + pj][None, :]
    inv = np.linalg.inv(g)
    inv.setflags(write=False)
    return inv


def poly_expand(gray: np.ndarray, poly_n: int = 5, poly_sigma: float = 1.2) -> PolyExpansion:
    """Gaussian-weighted least-squares quadratic fit around every pixel."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim == 3 and gray.shape[2] == 1:
        gray = gray[:, :, 0]
    if gray.ndim != 2:
        raise DimensionError(f"poly_expand needs a single-channel image, got shape {gray.shape}")
    if poly_n < 1 or poly_n % 2 == 0:
        raise ValueError(f"poly_n must be odd, got {poly_n}")
    h, w = gray.shape
    if h < poly_n or w < poly_n:
        raise DimensionError(f"image {h}x{w} is smaller than the {poly_n}-pixel window")
    t, a = _applicability(poly_n, poly_sigma)
    along_x = [_correlate_axis(gray, a * t**p, 1) for p in range(3)]
    rhs = np.empty((h, w, 6))
    for i, (p, q) in enumerate(_BASIS):
        rhs[..., i] = _correlate_axis(along_x[p], a * t**q, 0)
    inv = _inverse_normal_matrices(h, w, poly_n, float(poly_sigma))
    return PolyExpansion(np.einsum("hwij,hwj->hwi", inv, rhs))


def _sample_bilinear(arr, ys, xs):
    """Sample (H, W, C) ``arr`` at float coordinates, clamped to the image."""
    h, w = arr.shape[:2]
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2 if h > 1 else 0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2 if w > 1 else 0)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _update_matrices(r0, r1, flow):
    """Per-pixel products (G11, G12, G22, h1, h2) of the displacement equations."""
    h, w = flow.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = xx + flow[..., 0]
    sy = yy + flow[..., 1]
    inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
    r1s = _sample_bilinear(r1, sy, sx)

    a11 = (r0[..., 3] + r1s[..., 3]) * 0.5
    a22 = (r0[..., 4] + r1s[..., 4]) * 0.5
    a12 = (r0[..., 5] + r1s[..., 5]) * 0.25
    db1 = -0.5 * (r1s[..., 1] - r0[..., 1]) + a11 * flow[..., 0] + a12 * flow[..., 1]
    db2 = -0.5 * (r1s[..., 2] - r0[..., 2]) + a12 * flow[..., 0] + a22 * flow[..., 1]

    m = np.empty((h, w, 5))
    m[..., 0] = a11 * a11 + a12 * a12
    m[..., 1] = a12 * (a11 + a22)
    m[..., 2] = a12 * a12 + a22 * a22
    m[..., 3] = a11 * db1 + a12 * db2
    m[..., 4] = a12 * db1 + a22 * db2
    m[~inside] = 0.0
    return m


def _solve_flow(m):
    g11, g12, g22, h1, h2 = (m[..., k] for k in range(5))
    det = g11 * g22 - g12 * g12 + _DET_EPS
    return np.stack([(g22 * h1 - g12 * h2) / det, (g11 * h2 - g12 * h1) / det], axis=-1)


def _as_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return rgb_to_gray(img)
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim != 2:
        raise DimensionError(f"expected a single-channel image, got shape {img.shape}")
    return img


def estimate_flow(prev: np.ndarray, nxt: np.ndarray, params: FlowParams = FlowParams()) -> np.ndarray:
    """Coarse-to-fine dense flow from ``prev`` to ``nxt``; returns (H, W, 2) float64."""
    prev = _as_gray(prev)
    nxt = _as_gray(nxt)
    if prev.shape != nxt.shape:
        raise DimensionError(f"frame shapes differ: {prev.shape} vs {nxt.shape}")
    h, w = prev.shape

    sizes = []
    for level in range(params.levels):
        scale = params.pyramid_scale**level
        lh, lw = max(1, round(h * scale)), max(1, round(w * scale))
        if level > 0 and min(lh, lw) < max(_MIN_LEVEL_SIZE, params.poly_n):
            break
        sizes.append((scale, lh, lw))

    flow = None
    for scale, lh, lw in reversed(sizes):
        if scale < 1:
            sigma = (1 / scale - 1) * 0.5
            p_img = resize_bilinear(ndimage.gaussian_filter(prev, sigma, mode="nearest"), lh, lw)
            n_img = resize_bilinear(ndimage.gaussian_filter(nxt, sigma, mode="nearest"), lh, lw)
        else:
            p_img, n_img = prev, nxt
        if flow is None:
            flow = np.zeros((lh, lw, 2))
        else:
            ph, pw = flow.shape[:2]
            flow = resize_bilinear(flow, lh, lw)
            flow[..., 0] *= lw / pw
            flow[..., 1] *= lh / ph
        r0 = poly_expand(p_img, params.poly_n, params.poly_sigma).coeffs
        r1 = poly_expand(n_img, params.poly_n, params.poly_sigma).coeffs
        for _ in range(params.iterations):
            m = _update_matrices(r0, r1, flow)
            m = ndimage.uniform_filter(m, size=(params.window, params.window, 1), mode="nearest")
            flow = _solve_flow(m)
    return flow


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    """Vectorised HSV -> RGB, all components in [0, 1], hue wraps at 1."""
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(np.intp) % 6
    f = h6 - np.floor(h6)
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    choices_r = np.choose(i, [v, q, p, p, t, v])
    choices_g = np.choose(i, [t, v, v, q, p, p])
    choices_b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([choices_r, choices_g, choices_b], axis=-1)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(mx == r, ((g - b) / safe) % 6.0,
                 np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0))
    h = np.where(delta > 0, h / 6.0, 0.0)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx], axis=-1)


def flow_to_rgb(flow: np.ndarray, magnitude_cap: float = 8.0) -> np.ndarray:
    """Hue = direction atan2(dy, dx), value = |d| / cap clipped to 1, full saturation."""
    if magnitude_cap <= 0:
        raise ValueError(f"magnitude_cap must be positive, got {magnitude_cap}")
    flow = np.asarray(flow, dtype=np.float64)
    if not np.all(np.isfinite(flow)):
        raise FloatingPointError("flow field contains non-finite values")
    dx, dy = flow[..., 0], flow[..., 1]
    hue = (np.arctan2(dy, dx) / (2 * np.pi)) % 1.0
    val = np.minimum(np.hypot(dx, dy) / magnitude_cap, 1.0)
    rgb = hsv_to_rgb(np.stack([hue, np.ones_like(hue), val], axis=-1))
    return np.clip(rgb, 0.0, 1.0)


def average_flow_images(img12: np.ndarray, img23: np.ndarray) -> np.ndarray:
    img12 = np.asarray(img12)
    img23 = np.asarray(img23)
    if img12.shape != img23.shape:
        raise DimensionError(f"flow images differ in shape: {img12.shape} vs {img23.shape}")
    return (img12 + img23) / 2


def burst_flow_images(burst: Burst | tuple, params: FlowParams = FlowParams(), magnitude_cap: float = 8.0):
    """Flow images for frame pairs (1, 2) and (2, 3) plus their average."""
    frames = burst.frames if isinstance(burst, Burst) else tuple(burst)
    if len(frames) != 3:
        raise DimensionError(f"a burst has exactly 3 frames, got {len(frames)}")
    gray = [_as_gray(f) for f in frames]
    f12 = flow_to_rgb(estimate_flow(gray[0], gray[1], params), magnitude_cap)
    f23 = flow_to_rgb(estimate_flow(gray[1], gray[2], params), magnitude_cap)
    return f12, f23, average_flow_images(f12, f23)
