"""Vectorized numpy implementations of the heavy kernels.

Arrays arrive pre-padded, C-contiguous and float32; shape validation happens
in the dispatch layer. Convolutions are evaluated as patch-matrix products so
the inner work lands in BLAS.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def conv2d(x: np.ndarray, ker: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    n, ic, hp, wp = x.shape
    oc, _, kh, kw = ker.shape
    if kh == 1 and kw == 1 and stride == 1:
        # pointwise fast path: plain channel mixing, no patch extraction
        cols = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, ic)
        out = cols @ ker.reshape(oc, ic).T
        out += bias
        return np.ascontiguousarray(out.reshape(n, hp, wp, oc).transpose(0, 3, 1, 2))
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(n * oh * ow, ic * kh * kw)
    out = cols @ ker.reshape(oc, ic * kh * kw).T
    out += bias
    return np.ascontiguousarray(out.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2))


def depthwise_conv2d(x: np.ndarray, ker: np.ndarray, bias: np.ndarray, stride: int) -> np.ndarray:
    n, c, hp, wp = x.shape
    kh, kw = ker.shape[2], ker.shape[3]
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    acc = np.zeros((n, c, oh, ow), dtype=np.float32)
    for ky in range(kh):
        ylim = ky + (oh - 1) * stride + 1
        for kx in range(kw):
            xlim = kx + (ow - 1) * stride + 1
            acc += x[:, :, ky:ylim:stride, kx:xlim:stride] * ker[None, :, 0, ky, kx, None, None]
    acc += bias[None, :, None, None]
    return acc


def dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    out = x @ weights.T
    out += bias
    return out
