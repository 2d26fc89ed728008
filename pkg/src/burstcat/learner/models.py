"""Small CNN and CNN+LSTM binary classifiers with analytic gradients.

Both models take channel-last batches ``(N, H, W, K)``.  The LSTM model reads
``K = 9`` as three consecutive RGB frames.
"""

from __future__ import annotations

import numpy as np

from ..tensor_core import ChannelRole
from . import layers as L

CONV1_FILTERS = 16
CONV2_FILTERS = 32
LSTM_HIDDEN = 32


class ContractError(ValueError):
    pass


class NumericError(FloatingPointError):
    pass


def _he_uniform(rng, shape, fan_in, dtype):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _glorot_uniform(rng, shape, dtype):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _init_trunk(rng, in_channels, dtype):
    return {
        "conv1_w": _he_uniform(rng, (CONV1_FILTERS, in_channels, 3, 3), in_channels * 9, dtype),
        "conv1_b": np.zeros(CONV1_FILTERS, dtype),
        "conv2_w": _he_uniform(rng, (CONV2_FILTERS, CONV1_FILTERS, 3, 3), CONV1_FILTERS * 9, dtype),
        "conv2_b": np.zeros(CONV2_FILTERS, dtype),
    }


def trunk_forward(params, x):
    """x: (N, C, H, W) -> (N, 32) pooled features."""
    a1, c1 = L.conv3x3_forward(x, params["conv1_w"], params["conv1_b"])
    r1, _ = L.relu_forward(a1)
    p1, cp1 = L.maxpool_forward(r1)
    a2, c2 = L.conv3x3_forward(p1, params["conv2_w"], params["conv2_b"])
    r2, _ = L.relu_forward(a2)
    p2, cp2 = L.maxpool_forward(r2)
    feat, cg = L.gap_forward(p2)
    return feat, (c1, a1, cp1, c2, a2, cp2, cg)


def trunk_backward(dfeat, cache):
    c1, a1, cp1, c2, a2, cp2, cg = cache
    d = L.gap_backward(dfeat, cg)
    d = L.maxpool_backward(d, cp2)
    d = L.relu_backward(d, a2)
    d, dw2, db2 = L.conv3x3_backward(d, c2)
    d = L.maxpool_backward(d, cp1)
    d = L.relu_backward(d, a1)
    _, dw1, db1 = L.conv3x3_backward(d, c1, need_dx=False)
    return {"conv1_w": dw1, "conv1_b": db1, "conv2_w": dw2, "conv2_b": db2}


class _Model:
    params: dict

    @property
    def dtype(self):
        return self.params["dense_w"].dtype

    def astype(self, dtype):
        clone = self.copy()
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return clone

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def forward(self, x) -> np.ndarray:
        """Probabilities for a batch (or a single stack, which returns a 0-d array)."""
        x = np.asarray(x)
        single = x.ndim == 3
        logits, _ = self.logits(x[None] if single else x)
        p = L.sigmoid(logits)
        return p[0] if single else p

    def loss(self, x, y) -> float:
        logits, _ = self.logits(x)
        return L.bce_with_logits(logits, np.asarray(y))[0]

    def loss_and_grads(self, x, y):
        """Mean binary cross-entropy over the batch and its gradient for every parameter."""
        logits, cache = self.logits(x)
        loss, dlogits = L.bce_with_logits(logits, np.asarray(y))
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss {loss}")
        return loss, self._backward(dlogits, cache)

    def _check_input(self, x):
        if x.ndim != 4 or x.shape[3] != self.in_channels:
            raise ContractError(f"{type(self).__name__} expects (N, H, W, {self.in_channels}), got {x.shape}")


class CnnModel(_Model):
    """conv3x3(K->16)-ReLU-pool, conv3x3(16->32)-ReLU-pool, global average, dense, sigmoid."""

    def __init__(self, in_channels: int, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = _init_trunk(rng, in_channels, dtype)
        self.params["dense_w"] = _he_uniform(rng, (CONV2_FILTERS,), CONV2_FILTERS, dtype)
        self.params["dense_b"] = np.zeros(1, dtype)

    @property
    def in_channels(self) -> int:
        return self.params["conv1_w"].shape[1]

    def logits(self, x):
        x = np.asarray(x)
        self._check_input(x)
        x = np.ascontiguousarray(x.transpose(0, 3, 1, 2), dtype=self.dtype)
        feat, tcache = trunk_forward(self.params, x)
        return feat @ self.params["dense_w"] + self.params["dense_b"][0], (feat, tcache)

    def _backward(self, dlogits, cache):
        feat, tcache = cache
        grads = trunk_backward(np.outer(dlogits, self.params["dense_w"]), tcache)
        grads["dense_w"] = feat.T @ dlogits
        grads["dense_b"] = np.array([dlogits.sum()], dtype=dlogits.dtype)
        return grads


class LstmModel(_Model):
    """Shared per-frame CNN trunk, one LSTM layer over the 3 frames, dense on the last state."""

    steps = 3
    in_channels = 9

    def __init__(self, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        hd = LSTM_HIDDEN
        self.params = _init_trunk(rng, 3, dtype)
        self.params["lstm_wx"] = _glorot_uniform(rng, (CONV2_FILTERS, 4 * hd), dtype)
        self.params["lstm_wh"] = _glorot_uniform(rng, (hd, 4 * hd), dtype)
        self.params["lstm_b"] = np.zeros(4 * hd, dtype)
        self.params["dense_w"] = _glorot_uniform(rng, (hd, 1), dtype)[:, 0].copy()
        self.params["dense_b"] = np.zeros(1, dtype)

    def logits(self, x):
        x = np.asarray(x)
        self._check_input(x)
        n, h, w, _ = x.shape
        frames = x.reshape(n, h, w, self.steps, 3).transpose(0, 3, 4, 1, 2).reshape(n * self.steps, 3, h, w)
        frames = np.ascontiguousarray(frames, dtype=self.dtype)
        feat, tcache = trunk_forward(self.params, frames)
        feat = feat.reshape(n, self.steps, -1)
        p = self.params
        hstate = np.zeros((n, LSTM_HIDDEN), self.dtype)
        cstate = np.zeros_like(hstate)
        step_caches = []
        for t in range(self.steps):
            hstate, cstate, sc = L.lstm_step_forward(feat[:, t], hstate, cstate,
                                                     p["lstm_wx"], p["lstm_wh"], p["lstm_b"])
            step_caches.append(sc)
        logits = hstate @ p["dense_w"] + p["dense_b"][0]
        return logits, (n, tcache, step_caches, hstate)

    def _backward(self, dlogits, cache):
        n, tcache, step_caches, h_last = cache
        p = self.params
        grads = {
            "dense_w": h_last.T @ dlogits,
            "dense_b": np.array([dlogits.sum()], dtype=dlogits.dtype),
            "lstm_wx": np.zeros_like(p["lstm_wx"]),
            "lstm_wh": np.zeros_like(p["lstm_wh"]),
            "lstm_b": np.zeros_like(p["lstm_b"]),
        }
        dh = np.outer(dlogits, p["dense_w"])
        dc = np.zeros_like(dh)
        dfeat = np.zeros((n, self.steps, CONV2_FILTERS), dh.dtype)
        for t in reversed(range(self.steps)):
            dx, dh, dc, dwx, dwh, db = L.lstm_step_backward(dh, dc, step_caches[t], p["lstm_wx"], p["lstm_wh"])
            dfeat[:, t] = dx
            grads["lstm_wx"] += dwx
            grads["lstm_wh"] += dwh
            grads["lstm_b"] += db
        # the trunk ran once on all N*T frames, so this sums the per-step gradients
        grads.update(trunk_backward(dfeat.reshape(n * self.steps, -1), tcache))
        return grads


def warm_start_input_layer(target: CnnModel, source: CnnModel, roles, rng) -> CnnModel:
    """Widen a trained 3-channel model's input layer to ``roles``.

    Every image or flow triplet gets a copy of the source's RGB kernels; MOG2
    channels get N(0, 0.01^2) kernels.  All later layers are copied from the source.
    """
    roles = tuple(ChannelRole(r) for r in roles)
    if source.in_channels != 3:
        raise ContractError(f"source model must take 3 channels, takes {source.in_channels}")
    if target.in_channels != len(roles):
        raise ContractError(f"target takes {target.in_channels} channels but {len(roles)} roles given")
    out = source.copy()
    src_w = source.params["conv1_w"]
    w = np.empty((src_w.shape[0], len(roles), 3, 3), dtype=src_w.dtype)
    k = 0
    while k < len(roles):
        role = roles[k]
        if role == ChannelRole.MOG2:
            w[:, k] = rng.normal(0.0, 0.01, size=(src_w.shape[0], 3, 3))
            k += 1
        elif (role.is_image or role.is_flow) and roles[k : k + 3] == (role,) * 3:
            w[:, k : k + 3] = src_w
            k += 3
        else:
            raise ContractError(f"channel {k} ({role.name}) is neither a MOG2 channel nor part of a triplet")
    out.params["conv1_w"] = w
    return out


def lstm_from_baseline(source: CnnModel, rng) -> LstmModel:
    """LSTM model whose per-frame trunk starts from a trained baseline's conv layers."""
    if source.in_channels != 3:
        raise ContractError(f"source model must take 3 channels, takes {source.in_channels}")
    model = LstmModel(rng, dtype=source.dtype)
    for name in ("conv1_w", "conv1_b", "conv2_w", "conv2_b"):
        model.params[name] = source.params[name].copy()
    return model
