"""Forward/backward primitives for the small CNN and LSTM.

Activations are NCHW.  Every ``*_forward`` returns ``(out, cache)`` and the
matching ``*_backward`` consumes ``(dout, cache)``.
"""

import numpy as np
from scipy.special import expit

from ..kernels import maxpool2_forward, maxpool2_backward, im2col3, col2im3


def conv3x3_forward(x, w, b):
    """3x3 convolution, stride 1, zero padding 1 ("same").

    x: (N, C, H, W); w: (F, C, 3, 3); b: (F,).  Returns (N, F, H, W).
    """
    n, c, h, wd = x.shape
    f = w.shape[0]
    cols = im2col3(x)  # (N*H*W, C*9)
    out = cols @ w.reshape(f, -1).T + b
    out = out.reshape(n, h, wd, f).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, cols, w)


def conv3x3_backward(dout, cache, need_dx=True):
    x_shape, cols, w = cache
    f = w.shape[0]
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    dx = None
    if need_dx:
        dcols = dflat @ w.reshape(f, -1)
        dx = col2im3(dcols, x_shape)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, x):
    return dout * (x > 0)


def maxpool_forward(x):
    """2x2 max pool, stride 2.  Gradient is routed to the first maximal element."""
    out, arg = maxpool2_forward(x)
    return out, (x.shape, arg)


def maxpool_backward(dout, cache):
    shape, arg = cache
    return maxpool2_backward(dout, arg, shape)


def gap_forward(x):
    n, c, h, w = x.shape
    return x.mean(axis=(2, 3)), x.shape


def gap_backward(dout, shape):
    n, c, h, w = shape
    return np.broadcast_to((dout / (h * w))[:, :, None, None], shape).copy()


def sigmoid(z):
    return expit(z)


def bce_with_logits(logits, y):
    """Mean binary cross-entropy of sigmoid(logits) against y, and d loss / d logits."""
    y = y.astype(logits.dtype)
    # log(1 + exp(-|z|)) + max(z, 0) - z*y
    loss = np.logaddexp(0, -np.abs(logits)) + np.maximum(logits, 0) - logits * y
    p = sigmoid(logits)
    return float(loss.mean()), (p - y) / logits.shape[0]


def lstm_step_forward(x, h_prev, c_prev, wx, wh, b):
    """One LSTM step; gate order i, f, g, o.  wx: (D, 4H), wh: (H, 4H), b: (4H,)."""
    hd = h_prev.shape[1]
    a = x @ wx + h_prev @ wh + b
    s = expit(a)
    i = s[:, :hd]
    f = s[:, hd : 2 * hd]
    g = np.tanh(a[:, 2 * hd : 3 * hd])
    o = s[:, 3 * hd :]
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, g, o, tc)


def lstm_step_backward(dh, dc, cache, wx, wh):
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    da = np.concatenate(
        [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
    )
    dx = da @ wx.T
    dh_prev = da @ wh.T
    dwx = x.T @ da
    dwh = h_prev.T @ da
    db = da.sum(axis=0)
    return dx, dh_prev, dc_prev, dwx, dwh, db
