import numpy as np
import pytest

from burstcat.assembler import (
    AssemblyError,
    BurstFeatures,
    ModelVariant,
    build_stack,
    channel_count,
    lstm_stack,
    variant_roles,
)
from burstcat.tensor_core import ChannelRole as R
from burstcat.tensor_core import DimensionError

EXPECTED_CHANNELS = {
    "Baseline": 3, "LSTM": 9, "Mog2_4": 4, "Mog2_10": 10, "OptFlow_6": 6, "OptFlow_15": 15,
    "Hybrid_13": 13, "OptFlowOnly_6": 6, "OptFlowMog2Only_7": 7,
}


def _burst(size=8):
    frames = [np.full((size, size, 3), t + 1, np.float32) / 10 for t in range(3)]
    feats = BurstFeatures(np.full((size, size, 3), 0.4, np.float32), np.full((size, size, 3), 0.5, np.float32),
                          np.full((size, size, 3), 0.6, np.float32), np.ones((size, size), np.float32))
    return frames, feats


@pytest.mark.parametrize("name, count", sorted(EXPECTED_CHANNELS.items()))
def test_channel_counts(name, count):
    v = ModelVariant.parse(name)
    assert channel_count(v) == count
    frames, feats = _burst()
    out = build_stack(frames, feats, v)
    if isinstance(out, list):
        out = lstm_stack(out)
    assert out.data.shape == (8, 8, count)
    assert out.roles == variant_roles(v)


def test_hybrid_layout_order():
    frames, feats = _burst()
    s = build_stack(frames, feats, ModelVariant.Hybrid_13)
    assert s.roles == (R.IMAGE1,) * 3 + (R.IMAGE2,) * 3 + (R.IMAGE3,) * 3 + (R.FLOW_AVG,) * 3 + (R.MOG2,)
    np.testing.assert_allclose(s.data[0, 0], [0.1] * 3 + [0.2] * 3 + [0.3] * 3 + [0.6] * 3 + [1.0])


def test_flow_mog2_only_layout():
    frames, feats = _burst()
    s = build_stack(frames, feats, ModelVariant.OptFlowMog2Only_7)
    np.testing.assert_allclose(s.data[0, 0], [0.4] * 3 + [0.5] * 3 + [1.0])


def test_baseline_modes():
    frames, _ = _burst()
    ev = build_stack(frames, None, ModelVariant.Baseline, "eval")
    np.testing.assert_allclose(ev.data, frames[0])
    tr = build_stack(frames, None, ModelVariant.Baseline, "train")
    assert len(tr) == 3 and [s.roles[0] for s in tr] == [R.IMAGE1, R.IMAGE2, R.IMAGE3]


def test_errors():
    frames, feats = _burst()
    with pytest.raises(AssemblyError):
        build_stack(frames, None, ModelVariant.Mog2_4)
    with pytest.raises(DimensionError):
        build_stack(frames[:2], feats, ModelVariant.Mog2_4)
    small = BurstFeatures(feats.flow12, feats.flow23, feats.flow_avg, np.ones((4, 4), np.float32))
    with pytest.raises(DimensionError):
        build_stack(frames, small, ModelVariant.Mog2_4)
    with pytest.raises(ValueError):
        ModelVariant.parse("Hybrid13")
    with pytest.raises(ValueError):
        build_stack(frames, feats, ModelVariant.Mog2_4, mode="test")
