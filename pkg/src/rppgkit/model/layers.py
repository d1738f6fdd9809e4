"""1-D convolution, nearest upsampling and ReLU with hand-written gradients.

Arrays are ``(batch, channels, time)``. Convolutions lower to a single matrix
product through an im2col view so the heavy lifting stays in BLAS.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_out_length(t, kernel, stride, pad):
    return (t + 2 * pad - kernel) // stride + 1


def _im2col(x, kernel, stride, pad):
    b, c, t = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad))) if pad else x
    win = sliding_window_view(xp, kernel, axis=2)[:, :, ::stride, :]
    t_out = win.shape[2]
    cols = win.transpose(0, 2, 1, 3).reshape(b * t_out, c * kernel)
    return cols, t_out


def conv1d(x, w, bias, stride=1, pad=0):
    """Cross-correlation with zero padding; returns ``(y, cache)``."""
    o, c, k = w.shape
    if x.shape[1] != c:
        raise ValueError(f"expected {c} input channels, got {x.shape[1]}")
    cols, t_out = _im2col(x, k, stride, pad)
    y = cols @ w.reshape(o, c * k).T + bias
    y = y.reshape(x.shape[0], t_out, o).transpose(0, 2, 1)
    return y, (cols, x.shape, w, stride, pad)


def conv1d_backward(dy, cache):
    """Gradients ``(dx, dw, dbias)`` for :func:`conv1d`."""
    cols, xshape, w, stride, pad = cache
    o, c, k = w.shape
    b, _, t = xshape
    t_out = dy.shape[2]
    dy2 = dy.transpose(0, 2, 1).reshape(b * t_out, o)
    dw = (dy2.T @ cols).reshape(o, c, k)
    dbias = dy2.sum(axis=0)
    dcols = (dy2 @ w.reshape(o, c * k)).reshape(b, t_out, c, k)
    dxp = np.zeros((b, c, t + 2 * pad))
    for j in range(k):
        dxp[:, :, j:j + stride * (t_out - 1) + 1:stride] += dcols[:, :, :, j].transpose(0, 2, 1)
    dx = dxp[:, :, pad:pad + t] if pad else dxp
    return dx, dw, dbias


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(dy, y):
    return dy * (y > 0)


def upsample2(x, length):
    """Nearest-neighbour x2 along time, cropped to ``length``."""
    return np.repeat(x, 2, axis=2)[:, :, :length]


def upsample2_backward(dy, coarse_length):
    b, c, t = dy.shape
    full = np.zeros((b, c, 2 * coarse_length))
    full[:, :, :t] = dy
    return full.reshape(b, c, coarse_length, 2).sum(axis=3)
