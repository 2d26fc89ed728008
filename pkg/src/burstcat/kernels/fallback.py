"""Pure numpy implementations of the hot kernels.

These are the reference behaviour; the compiled module must agree with them
bit for bit (the test suite runs both).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col3(x):
    """(N, C, H, W) -> (N*H*W, C*9) patches of the zero-padded input."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # N, C, H, W, 3, 3
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * 9)


def col2im3(dcols, x_shape):
    n, c, h, w = x_shape
    d = dcols.reshape(n, h, w, c, 3, 3)
    dxp = np.zeros((n, c, h + 2, w + 2), dtype=dcols.dtype)
    for dy in range(3):
        for dx in range(3):
            dxp[:, :, dy : dy + h, dx : dx + w] += d[:, :, :, :, dy, dx].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1].copy()


def _blocks(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"2x2 pooling needs even spatial size, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)


def maxpool2_forward(x):
    blocks = _blocks(x)
    arg = blocks.argmax(axis=-1).astype(np.int8)
    out = np.take_along_axis(blocks, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def maxpool2_backward(dout, arg, x_shape):
    n, c, h, w = x_shape
    d = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(d, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    return d.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def mog2_update(weight, mean, var, nmodes, frame, alpha, var_threshold, background_ratio,
                var_init, var_min, var_max, complexity_prune):
    """In-place MOG2 update of a (P, M) mixture grid with a (P,) frame.

    Returns the (P,) foreground mask as uint8.  The arithmetic order mirrors the
    scalar definition exactly, so results are reproducible bit for bit.
    """
    p, m = weight.shape
    x = frame
    slots = np.arange(m)
    active = slots[None, :] < nmodes[:, None]
    safe_var = np.where(active, var, 1.0)

    diff = x[:, None] - mean
    d2 = diff * diff / safe_var
    cand = active & (d2 < var_threshold)
    d2c = np.where(cand, d2, np.inf)
    best = d2c.argmin(axis=1)
    matched = cand.any(axis=1)

    cum_before = np.zeros((p, m))
    for k in range(1, m):
        cum_before[:, k] = cum_before[:, k - 1] + np.where(active[:, k - 1], weight[:, k - 1], 0.0)
    rows = np.arange(p)
    in_prefix = cum_before[rows, best] < background_ratio
    foreground = ~(matched & in_prefix)

    one_minus = 1.0 - alpha
    weight[...] = np.where(active, one_minus * weight, 0.0)

    mr = rows[matched]
    mb = best[matched]
    wb = weight[mr, mb] + alpha
    weight[mr, mb] = wb
    rho = alpha / wb
    xm = x[matched]
    mu = mean[mr, mb]
    dm = xm - mu
    mean[mr, mb] = (1.0 - rho) * mu + rho * xm
    v = (1.0 - rho) * var[mr, mb] + rho * (dm * dm)
    var[mr, mb] = np.minimum(np.maximum(v, var_min), var_max)

    um = ~matched
    ur = rows[um]
    n_u = nmodes[um]
    slot = np.where(n_u < m, n_u, n_u - 1)
    weight[ur, slot] = alpha
    mean[ur, slot] = x[um]
    var[ur, slot] = var_init
    nmodes[um] = np.where(n_u < m, n_u + 1, n_u)

    active = slots[None, :] < nmodes[:, None]
    keep = active & (weight >= alpha * complexity_prune)
    total = np.zeros(p)
    for k in range(m):
        total = total + np.where(keep[:, k], weight[:, k], 0.0)
    w = np.where(keep, weight / total[:, None], 0.0)
    key = np.where(keep, w / np.sqrt(np.where(keep, var, 1.0)), -np.inf)
    order = np.argsort(-key, axis=1, kind="stable")
    weight[...] = np.take_along_axis(w, order, axis=1)
    mean[...] = np.take_along_axis(np.where(keep, mean, 0.0), order, axis=1)
    var[...] = np.take_along_axis(np.where(keep, var, 0.0), order, axis=1)
    nmodes[...] = keep.sum(axis=1)
    return foreground.astype(np.uint8)
