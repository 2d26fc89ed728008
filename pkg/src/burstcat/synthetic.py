"""Synthetic camera-trap bursts with known ground truth.

Each site has its own static background texture and colour cast.  Positive
bursts contain an animal that moves at a constant velocity: by day a
camouflaged blob whose skin is drawn from the same texture process as the
site background, blended in with weight ``animal_contrast``; by night a pair of
eye-shine dots.  Both classes receive the same background, illumination,
sensor noise, night-time reflector specks and (optionally) local vegetation
jitter, so with ``animal_contrast == 0`` positives and negatives are
identically distributed.

Random streams: background/nuisance content of burst ``i`` comes from
``default_rng([seed, i, 0])``, the animal from ``default_rng([seed, i, 1])``,
site textures from ``default_rng([seed, SITE_STREAM, site])``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dataset import BurstRecord, write_manifest
from .tensor_core import save_image

SITE_STREAM = 1_000_003
LABEL_STREAM = 1_000_033
DAY_SPECIES = ("bird", "possum", "cat", "rat", "mustelid")
NIGHT_SPECIES = ("hedgehog", "rabbit", "possum", "rat", "mouse")


@dataclass(frozen=True)
class SyntheticParams:
    size: int = 64
    bursts_per_class: int = 100
    n_sites: int = 20
    animal_contrast: float = 0.8
    speed: tuple[float, float] = (2.0, 5.0)
    radius: tuple[float, float] = (5.0, 8.0)
    jitter_prob: float = 0.5
    jitter_amplitude: float = 1.5
    night_prob: float = 0.3
    direction: float | None = None  # radians; None draws a uniform direction per burst
    noise: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.size < 16:
            raise ValueError("synthetic images must be at least 16 px")
        if not 0.0 <= self.animal_contrast <= 1.0:
            raise ValueError("animal_contrast must be in [0, 1]")
        lo, hi = self.speed
        if not 0 <= lo <= hi <= self.size / 4:
            raise ValueError(f"speed range must lie within [0, size/4], got {self.speed}")
        rlo, rhi = self.radius
        if not 1 <= rlo <= rhi:
            raise ValueError(f"bad radius range {self.radius}")
        if 2 * (rhi + 1) + 2 * hi >= self.size:
            raise ValueError("animal radius and speed leave no room for the path inside the frame")
        for name in ("jitter_prob", "night_prob"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.n_sites < 1 or self.bursts_per_class < 1:
            raise ValueError("need at least one site and one burst per class")
        object.__setattr__(self, "speed", (float(lo), float(hi)))
        object.__setattr__(self, "radius", (float(rlo), float(rhi)))


@dataclass
class SyntheticBurst:
    frames: list[np.ndarray]  # (H, W, 3) float in [0, 1]
    masks: list[np.ndarray]  # (H, W) bool
    label: int
    night: bool
    velocity: tuple[float, float]  # (vx, vy) px/frame


def _smooth_noise(rng, shape, sigma):
    tex = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return tex / tex.std()


class _Site:
    """Static scene of one camera: a texture larger than the frame plus colour cast."""

    def __init__(self, params: SyntheticParams, site: int):
        rng = np.random.default_rng([params.seed, SITE_STREAM, site])
        self.sigma = rng.uniform(1.2, 3.5)
        self.pad = int(np.ceil(params.jitter_amplitude)) + 2
        n = params.size + 2 * self.pad
        self.luma = _smooth_noise(rng, (n, n), self.sigma)
        self.chroma = _smooth_noise(rng, (n, n, 2), 2 * self.sigma)
        self.base = rng.uniform(0.35, 0.6)
        self.amp = rng.uniform(0.09, 0.15)
        self.tint = 1.0 + rng.uniform(-0.15, 0.15, size=3)

    def render(self, amp_scale, offset=(0.0, 0.0), size=None):
        """Background colour image, optionally sampled at a sub-pixel offset."""
        if offset == (0.0, 0.0):
            p = self.pad
            luma = self.luma[p : p + size, p : p + size]
            chroma = self.chroma[p : p + size, p : p + size]
        else:
            yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
            coords = [yy + self.pad - offset[1], xx + self.pad - offset[0]]
            luma = ndimage.map_coordinates(self.luma, coords, order=1, mode="wrap")
            chroma = np.stack([ndimage.map_coordinates(self.chroma[..., k], coords, order=1, mode="wrap")
                               for k in range(2)], axis=-1)
        return _colourize(self.base + amp_scale * self.amp * luma, chroma, self.tint)


def _colourize(luma, chroma, tint):
    c = 0.015 * chroma
    rgb = np.stack([luma + c[..., 0], luma - 0.5 * c[..., 0] - 0.5 * c[..., 1], luma + c[..., 1]], axis=-1)
    return rgb * tint


def _soft_disc(size, cx, cy, rx, ry):
    """Coverage in [0, 1] of an axis-aligned ellipse with a 1-px linear edge."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    r = np.sqrt(((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2)
    edge = 1.0 / min(rx, ry)
    return np.clip((1.0 - r) / edge + 0.5, 0.0, 1.0)


def render_burst(params: SyntheticParams, index: int, label: int, site: _Site) -> SyntheticBurst:
    size = params.size
    rng = np.random.default_rng([params.seed, index, 0])
    arng = np.random.default_rng([params.seed, index, 1])

    night = bool(rng.random() < params.night_prob)
    gain = rng.uniform(0.85, 1.15)
    flicker = rng.uniform(-0.01, 0.01, size=3)
    jitter = bool(rng.random() < params.jitter_prob)
    box_lo, box_hi = min(12, size // 3), min(20, size // 2)  # 12..20 px patches from 40 px up
    jx, jy = rng.integers(0, size - box_hi, size=2)
    jw, jh = rng.integers(box_lo, box_hi + 1, size=2)
    joffsets = rng.uniform(-params.jitter_amplitude, params.jitter_amplitude, size=(3, 2))
    joffsets[0] = 0.0
    n_specks = int(rng.integers(0, 3))
    specks = rng.uniform(4, size - 4, size=(n_specks, 2))
    noise = rng.standard_normal((3, size, size, 3))

    still = site.render(1.0, size=size)
    frames = []
    for t in range(3):
        bg = still
        if jitter and t > 0:
            moved = site.render(1.0, offset=tuple(joffsets[t]), size=size)
            box = np.zeros((size, size))
            box[jy : jy + jh, jx : jx + jw] = 1.0
            box = ndimage.uniform_filter(box, 3)[..., None]
            bg = (1 - box) * still + box * moved
        img = bg * gain + flicker[t]
        if night:
            img = 0.25 * img
            for sx, sy in specks:
                for dx in (-2.0, 2.0):
                    img += 0.8 * _soft_disc(size, sx + dx, sy, 1.5, 1.5)[..., None]
        frames.append(img)

    masks = [np.zeros((size, size), bool) for _ in range(3)]
    velocity = (0.0, 0.0)
    if label == 1:
        speed = arng.uniform(*params.speed)
        theta = arng.uniform(0, 2 * np.pi)
        if params.direction is not None:
            theta = params.direction
        v = np.array([np.cos(theta), np.sin(theta)]) * speed
        velocity = (float(v[0]), float(v[1]))
        if night:
            rx = ry = 1.5
            extent = 2.0 + rx
        else:
            r = arng.uniform(*params.radius)
            aspect = arng.uniform(0.7, 1.4)
            rx, ry = r * np.sqrt(aspect), r / np.sqrt(aspect)
            extent = max(rx, ry)
        start = []
        for k in range(2):
            lo = extent + 1 - min(0.0, 2 * v[k])
            hi = size - 2 - extent - max(0.0, 2 * v[k])
            start.append(arng.uniform(lo, hi))
        skin = _smooth_noise(arng, (size, size), site.sigma)
        skin_chroma = _smooth_noise(arng, (size, size, 2), 2 * site.sigma)
        shade = arng.uniform(-1.0, 1.0)
        for t in range(3):
            cx, cy = start[0] + t * v[0], start[1] + t * v[1]
            if night:
                alpha = np.maximum(_soft_disc(size, cx - 2.0, cy, rx, ry), _soft_disc(size, cx + 2.0, cy, rx, ry))
                # eye shine saturates quickly with visibility
                frames[t] = frames[t] + 0.8 * min(1.0, 2 * params.animal_contrast) * alpha[..., None]
            else:
                alpha = _soft_disc(size, cx, cy, rx, ry)
                shift = [cy - start[1], cx - start[0]]
                moved_skin = ndimage.shift(skin, shift, order=1, mode="wrap")
                moved_chroma = ndimage.shift(skin_chroma, shift + [0], order=1, mode="wrap")
                luma = site.base + site.amp * (moved_skin + 0.5 * shade)
                animal = _colourize(luma, moved_chroma, site.tint) * gain + flicker[t]
                a = (params.animal_contrast * alpha)[..., None]
                frames[t] = (1 - a) * frames[t] + a * animal
            masks[t] = alpha >= 0.5

    sigma = params.noise * (2.0 if night else 1.0)
    frames = [np.clip(f + sigma * noise[t], 0.0, 1.0) for t, f in enumerate(frames)]
    return SyntheticBurst(frames, masks, label, night, velocity)


def burst_labels(params: SyntheticParams) -> np.ndarray:
    labels = np.array([1] * params.bursts_per_class + [0] * params.bursts_per_class)
    return np.random.default_rng([params.seed, LABEL_STREAM]).permutation(labels)


def generate_synthetic(params: SyntheticParams, out_dir) -> Path:
    """Write PNG frames, PNG ground-truth masks and ``manifest.csv``; return the manifest path."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    sites = {}
    records = []
    for i, label in enumerate(burst_labels(params)):
        s = i % params.n_sites
        if s not in sites:
            sites[s] = _Site(params, s)
        b = render_burst(params, i, int(label), sites[s])
        bid = f"b{i:06d}"
        paths = []
        for t in range(3):
            p = out / "images" / f"{bid}_{t + 1}.png"
            save_image(p, b.frames[t])
            save_image(out / "masks" / f"{bid}_{t + 1}.png", b.masks[t].astype(np.float64))
            paths.append(p)
        species = (NIGHT_SPECIES if b.night else DAY_SPECIES)[i % 5] if label else "empty"
        records.append(BurstRecord(bid, f"site{s:03d}", species, tuple(paths)))
    (out / "synthetic_params.json").write_text(json.dumps(asdict(params), indent=2, sort_keys=True) + "\n")
    return write_manifest(records, out / "manifest.csv", with_split=False)
