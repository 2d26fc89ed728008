"""Checkpoint files: named BTSR tensors in one container plus a JSON sidecar.

Container layout (little-endian): magic ``BTSC``, u32 entry count, then per
entry a u16 name length, the UTF-8 name, a u64 byte length and one complete
BTSR tensor.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..tensor_core import TensorFormatError, decode_tensor, encode_tensor

CONTAINER_MAGIC = b"BTSC"


@dataclass
class Checkpoint:
    step: int
    params: dict
    val_auc: float
    epoch: int = 0
    checkpoint_index: int = 0
    meta: dict = field(default_factory=dict)


def encode_params(params: dict) -> bytes:
    out = [CONTAINER_MAGIC, struct.pack("<I", len(params))]
    for name in sorted(params):
        blob = encode_tensor(np.asarray(params[name], dtype=np.float32))
        raw = name.encode("utf-8")
        out += [struct.pack("<H", len(raw)), raw, struct.pack("<Q", len(blob)), blob]
    return b"".join(out)


def decode_params(buf: bytes) -> dict:
    if buf[:4] != CONTAINER_MAGIC:
        raise TensorFormatError(f"bad container magic {buf[:4]!r}", 0)
    if len(buf) < 8:
        raise TensorFormatError("truncated container header", len(buf))
    (count,) = struct.unpack_from("<I", buf, 4)
    pos = 8
    params = {}
    for _ in range(count):
        if len(buf) - pos < 2:
            raise TensorFormatError("truncated entry name", len(buf))
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        if len(buf) - pos < 8:
            raise TensorFormatError("truncated entry length", len(buf))
        (blen,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        arr, _, end = decode_tensor(buf[: pos + blen], pos)
        if end != pos + blen:
            raise TensorFormatError(f"entry {name!r} length mismatch", pos)
        params[name] = arr
        pos = end
    if pos != len(buf):
        raise TensorFormatError(f"{len(buf) - pos} trailing bytes", pos)
    return params


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_params(ckpt.params))
    sidecar = {
        "step": ckpt.step,
        "epoch": ckpt.epoch,
        "checkpoint_index": ckpt.checkpoint_index,
        "val_auc": ckpt.val_auc,
        **ckpt.meta,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    params = decode_params(path.read_bytes())
    side = json.loads(path.with_suffix(".json").read_text())
    meta = {k: v for k, v in side.items() if k not in ("step", "epoch", "checkpoint_index", "val_auc")}
    return Checkpoint(side["step"], params, side["val_auc"], side.get("epoch", 0),
                      side.get("checkpoint_index", 0), meta)
