"""Model-specific input stacks built from a burst and its temporal features."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tensor_core import ChannelRole as R
from .tensor_core import ChannelStack, DimensionError


class AssemblyError(ValueError):
    pass


class ModelVariant(str, enum.Enum):
    Baseline = "Baseline"
    LSTM = "LSTM"
    Mog2_4 = "Mog2_4"
    Mog2_10 = "Mog2_10"
    OptFlow_6 = "OptFlow_6"
    OptFlow_15 = "OptFlow_15"
    Hybrid_13 = "Hybrid_13"
    OptFlowOnly_6 = "OptFlowOnly_6"
    OptFlowMog2Only_7 = "OptFlowMog2Only_7"

    @classmethod
    def parse(cls, name: str) -> "ModelVariant":
        try:
            return cls(name)
        except ValueError:
            raise ValueError(f"unknown variant {name!r}; choose from {', '.join(v.value for v in cls)}") from None

    @property
    def needs_features(self) -> bool:
        return self not in (ModelVariant.Baseline, ModelVariant.LSTM)

    @property
    def is_sequence_cnn(self) -> bool:
        return self.needs_features


# (source, role) pieces per variant; source is a frame index, a flow image or "mog2"
_LAYOUTS = {
    ModelVariant.Mog2_4: [0, "mog2"],
    ModelVariant.Mog2_10: [0, 1, 2, "mog2"],
    ModelVariant.OptFlow_6: [0, "flow_avg"],
    ModelVariant.OptFlow_15: [0, 1, 2, "flow12", "flow23"],
    ModelVariant.Hybrid_13: [0, 1, 2, "flow_avg", "mog2"],
    ModelVariant.OptFlowOnly_6: ["flow12", "flow23"],
    ModelVariant.OptFlowMog2Only_7: ["flow12", "flow23", "mog2"],
}
_FEATURE_ROLES = {"flow12": R.FLOW12, "flow23": R.FLOW23, "flow_avg": R.FLOW_AVG, "mog2": R.MOG2}
_FRAME_ROLES = (R.IMAGE1, R.IMAGE2, R.IMAGE3)


@dataclass(frozen=True)
class BurstFeatures:
    flow12: np.ndarray  # (H, W, 3)
    flow23: np.ndarray
    flow_avg: np.ndarray
    mog2: np.ndarray  # (H, W)

    def get(self, name: str) -> np.ndarray:
        return getattr(self, name)


def variant_roles(variant: ModelVariant) -> tuple[R, ...]:
    """Per-channel roles of one input stack of ``variant``."""
    variant = ModelVariant(variant)
    if variant == ModelVariant.Baseline:
        return (R.IMAGE1,) * 3
    if variant == ModelVariant.LSTM:
        return sum(((r,) * 3 for r in _FRAME_ROLES), ())
    roles = []
    for piece in _LAYOUTS[variant]:
        if isinstance(piece, int):
            roles += [_FRAME_ROLES[piece]] * 3
        else:
            role = _FEATURE_ROLES[piece]
            roles += [role] * (1 if role == R.MOG2 else 3)
    return tuple(roles)


def channel_count(variant: ModelVariant) -> int:
    return len(variant_roles(variant))


def _piece(frames, features, piece, variant):
    if isinstance(piece, int):
        return np.asarray(frames[piece])
    if features is None:
        raise AssemblyError(f"variant {variant.value} needs precomputed flow/MOG2 features")
    arr = np.asarray(features.get(piece))
    return arr[:, :, None] if arr.ndim == 2 else arr


def build_stack(frames, features: BurstFeatures | None, variant, mode: str = "eval", dtype=np.float32):
    """Assemble the model input for one burst.

    Returns a single :class:`ChannelStack`, except for Baseline in ``train`` mode
    (three single-frame stacks) and LSTM (three per-frame stacks).
    """
    variant = ModelVariant(variant)
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    frames = tuple(frames)
    if len(frames) != 3:
        raise DimensionError(f"a burst has exactly 3 frames, got {len(frames)}")
    if variant == ModelVariant.Baseline:
        if mode == "eval":
            return ChannelStack(np.asarray(frames[0], dtype), (R.IMAGE1,) * 3)
        return [ChannelStack(np.asarray(f, dtype), (r,) * 3) for f, r in zip(frames, _FRAME_ROLES)]
    if variant == ModelVariant.LSTM:
        return [ChannelStack(np.asarray(f, dtype), (r,) * 3) for f, r in zip(frames, _FRAME_ROLES)]

    parts = [_piece(frames, features, p, variant) for p in _LAYOUTS[variant]]
    shapes = {p.shape[:2] for p in parts}
    if len(shapes) != 1:
        raise DimensionError(f"feature sizes differ from frame size: {sorted(shapes)}")
    return ChannelStack(np.concatenate(parts, axis=2).astype(dtype, copy=False), variant_roles(variant))


def lstm_stack(per_frame: list[ChannelStack]) -> ChannelStack:
    """Concatenate the LSTM's per-frame stacks into one 9-channel stack (frame-major)."""
    return ChannelStack(np.concatenate([s.data for s in per_frame], axis=2),
                        sum((s.roles for s in per_frame), ()))
