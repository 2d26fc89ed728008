"""Image tensors, channel roles and the BTSR on-disk tensor format.

Pixels are float values in [0, 1]; images are ``(H, W)`` or ``(H, W, C)``
arrays, row-major.  8-bit sources are divided by 255 on load.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    pass


class ChannelError(ValueError):
    pass


class TensorFormatError(ValueError):
    """Malformed tensor file; ``offset`` is the byte position of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ChannelRole(enum.IntEnum):
    """Role of one stacked channel.  Values are the on-disk role codes."""

    RAW = 0
    IMAGE1 = 1
    IMAGE2 = 2
    IMAGE3 = 3
    FLOW12 = 4
    FLOW23 = 5
    FLOW_AVG = 6
    MOG2 = 7

    @property
    def is_image(self) -> bool:
        return self in (ChannelRole.IMAGE1, ChannelRole.IMAGE2, ChannelRole.IMAGE3)

    @property
    def is_flow(self) -> bool:
        return self in (ChannelRole.FLOW12, ChannelRole.FLOW23, ChannelRole.FLOW_AVG)


IMAGE_ROLES = (ChannelRole.IMAGE1, ChannelRole.IMAGE2, ChannelRole.IMAGE3)


def _as_hwc(data: np.ndarray) -> np.ndarray:
    if data.ndim == 2:
        return data[:, :, None]
    if data.ndim != 3:
        raise DimensionError(f"expected (H, W) or (H, W, C) array, got shape {data.shape}")
    return data


@dataclass(frozen=True)
class Frame:
    """A validated image with 1 or 3 channels and values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = _as_hwc(np.array(self.data, copy=True))
        if data.shape[2] not in (1, 3):
            raise ChannelError(f"frames have 1 or 3 channels, got {data.shape[2]}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"empty frame {data.shape}")
        if not np.all(np.isfinite(data)) or data.min() < 0 or data.max() > 1:
            raise ValueError("frame values must be finite and in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ChannelStack:
    """``(H, W, K)`` tensor with one :class:`ChannelRole` per channel."""

    data: np.ndarray
    roles: tuple[ChannelRole, ...]

    def __post_init__(self):
        data = _as_hwc(np.asarray(self.data))
        roles = tuple(ChannelRole(r) for r in self.roles)
        if len(roles) != data.shape[2]:
            raise ChannelError(f"{len(roles)} roles for {data.shape[2]} channels")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "roles", roles)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def triplets(self, predicate) -> list[int]:
        """Start indices of 3-channel groups whose role satisfies ``predicate``."""
        starts = []
        k = 0
        while k < self.channels:
            role = self.roles[k]
            if k + 2 < self.channels and self.roles[k + 1] == role == self.roles[k + 2] and predicate(role):
                starts.append(k)
                k += 3
            else:
                k += 1
        return starts


@dataclass(frozen=True)
class Burst:
    """Three frames of one trigger event."""

    frames: tuple[np.ndarray, np.ndarray, np.ndarray]
    burst_id: str = ""
    site_id: str = ""
    label: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.frames) != 3:
            raise DimensionError(f"a burst has exactly 3 frames, got {len(self.frames)}")
        shapes = {np.shape(f) for f in self.frames}
        if len(shapes) != 1:
            raise DimensionError(f"burst frames differ in shape: {sorted(shapes)}")


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel centre alignment and edge clamping."""
    img = np.asarray(img)
    if out_h < 1 or out_w < 1:
        raise DimensionError(f"output size must be positive, got {out_h}x{out_w}")
    if img.ndim not in (2, 3) or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"cannot resize array of shape {img.shape}")
    in_h, in_w = img.shape[:2]
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()

    y0, y1, wy = _interp_axis(in_h, out_h)
    x0, x1, wx = _interp_axis(in_w, out_w)
    if img.ndim == 3:
        wy = wy[:, None, None]
        wx = wx[None, :, None]
    else:
        wy = wy[:, None]
        wx = wx[None, :]
    wy = wy.astype(img.dtype if img.dtype.kind == "f" else np.float64)
    wx = wx.astype(wy.dtype)
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bottom = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def _interp_axis(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, src - i0


GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def rgb_to_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ChannelError(f"rgb_to_gray needs a 3-channel image, got shape {img.shape}")
    r, g, b = GRAY_WEIGHTS
    gray = r * img[..., 0] + g * img[..., 1] + b * img[..., 2]
    return np.clip(gray, 0.0, 1.0)


def load_image(path, size: int | None = None) -> np.ndarray:
    """Read an 8-bit PNG/PPM/JPEG as float32 RGB in [0, 1], optionally resized square."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    if size is not None:
        arr = resize_bilinear(arr, size, size).astype(np.float32)
    return arr


def save_image(path, img: np.ndarray) -> None:
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


# --- BTSR tensor files -------------------------------------------------------

MAGIC = b"BTSR"
VERSION = 1
DTYPE_F32 = 0
_HEAD = struct.Struct("<4sBBBB")


def encode_tensor(data: np.ndarray, roles: Sequence[ChannelRole] = ()) -> bytes:
    """Serialize ``data`` to BTSR bytes.  An empty ``roles`` writes no role codes."""
    arr = np.ascontiguousarray(data, dtype="<f4")
    roles = [int(r) for r in roles]
    if all(r == ChannelRole.RAW for r in roles):
        roles = []
    if len(roles) > 255 or arr.ndim > 255:
        raise ValueError("too many roles or dimensions for BTSR")
    parts = [
        _HEAD.pack(MAGIC, VERSION, DTYPE_F32, arr.ndim, 0),
        struct.pack(f"<{arr.ndim}I", *arr.shape),
        struct.pack("<B", len(roles)),
        bytes(roles),
        arr.tobytes(),
    ]
    return b"".join(parts)


def decode_tensor(buf: bytes, offset: int = 0) -> tuple[np.ndarray, tuple[ChannelRole, ...], int]:
    """Parse one BTSR tensor at ``offset``; returns (array, roles, end offset)."""
    if len(buf) - offset < _HEAD.size:
        raise TensorFormatError("truncated header", len(buf))
    magic, version, dtype, ndim, _ = _HEAD.unpack_from(buf, offset)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}", offset)
    if version != VERSION:
        raise TensorFormatError(f"unsupported version {version}", offset + 4)
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype code {dtype}", offset + 5)
    pos = offset + _HEAD.size
    if len(buf) - pos < 4 * ndim + 1:
        raise TensorFormatError("truncated dimensions", len(buf))
    shape = struct.unpack_from(f"<{ndim}I", buf, pos)
    pos += 4 * ndim
    (n_roles,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    if len(buf) - pos < n_roles:
        raise TensorFormatError("truncated role block", len(buf))
    try:
        roles = tuple(ChannelRole(c) for c in buf[pos : pos + n_roles])
    except ValueError as exc:
        raise TensorFormatError(f"unknown role code: {exc}", pos) from None
    pos += n_roles
    count = int(np.prod(shape, dtype=np.int64))
    need = 4 * count
    if len(buf) - pos < need:
        raise TensorFormatError(f"truncated payload: need {need} bytes, have {len(buf) - pos}", len(buf))
    arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos).reshape(shape).astype(np.float32)
    return arr, roles, pos + need


def write_tensor(path, stack: ChannelStack | np.ndarray) -> None:
    if isinstance(stack, ChannelStack):
        payload = encode_tensor(stack.data, stack.roles)
    else:
        payload = encode_tensor(stack)
    Path(path).write_bytes(payload)


def read_tensor(path) -> ChannelStack:
    """Read a BTSR file.  Files without a role block come back with RAW roles."""
    buf = Path(path).read_bytes()
    arr, roles, end = decode_tensor(buf)
    if end != len(buf):
        raise TensorFormatError(f"{len(buf) - end} trailing bytes", end)
    if arr.ndim not in (2, 3):
        raise DimensionError(f"stack tensors are 2-D or 3-D, file holds shape {arr.shape}")
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    if not roles:
        roles = (ChannelRole.RAW,) * channels
    return ChannelStack(arr, roles)


def read_array(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, _, _ = decode_tensor(buf)
    return arr
