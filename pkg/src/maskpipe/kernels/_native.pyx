# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for the convolution and fully-connected kernels.

Inputs arrive pre-padded and C-contiguous float32, so every tap is in
bounds. Accumulation is float32, matching the numpy backend's contract.
"""

import numpy as np


def conv2d(const float[:, :, :, ::1] x, const float[:, :, :, ::1] ker,
           const float[::1] bias, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], ic = x.shape[1], hp = x.shape[2], wp = x.shape[3]
    cdef Py_ssize_t oc = ker.shape[0], kh = ker.shape[2], kw = ker.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // stride + 1
    cdef Py_ssize_t ow = (wp - kw) // stride + 1
    out_arr = np.empty((n, oc, oh, ow), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, i, y, xo, ky, kx, iy, ix
    cdef float acc
    with nogil:
        for b in range(n):
            for o in range(oc):
                for y in range(oh):
                    iy = y * stride
                    for xo in range(ow):
                        ix = xo * stride
                        acc = bias[o]
                        for i in range(ic):
                            for ky in range(kh):
                                for kx in range(kw):
                                    acc = acc + x[b, i, iy + ky, ix + kx] * ker[o, i, ky, kx]
                        out[b, o, y, xo] = acc
    return out_arr


def pointwise_conv(const float[:, :, ::1] x, const float[:, ::1] ker,
                   const float[::1] bias):
    # x: [n, ic, h*w], ker: [oc, ic] -> out: [n, oc, h*w]
    # Loop order keeps each output row hot while streaming the input rows.
    cdef Py_ssize_t n = x.shape[0], ic = x.shape[1], hw = x.shape[2]
    cdef Py_ssize_t oc = ker.shape[0]
    out_arr = np.empty((n, oc, hw), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, i, p
    cdef float kv, bv
    with nogil:
        for b in range(n):
            for o in range(oc):
                bv = bias[o]
                for p in range(hw):
                    out[b, o, p] = bv
                for i in range(ic):
                    kv = ker[o, i]
                    for p in range(hw):
                        out[b, o, p] = out[b, o, p] + kv * x[b, i, p]
    return out_arr


def depthwise_conv2d(const float[:, :, :, ::1] x, const float[:, :, :, ::1] ker,
                     const float[::1] bias, Py_ssize_t stride):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], hp = x.shape[2], wp = x.shape[3]
    cdef Py_ssize_t kh = ker.shape[2], kw = ker.shape[3]
    cdef Py_ssize_t oh = (hp - kh) // stride + 1
    cdef Py_ssize_t ow = (wp - kw) // stride + 1
    out_arr = np.empty((n, c, oh, ow), dtype=np.float32)
    cdef float[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t b, ch, y, xo, ky, kx, iy, ix
    cdef float acc
    with nogil:
        for b in range(n):
            for ch in range(c):
                for y in range(oh):
                    iy = y * stride
                    for xo in range(ow):
                        ix = xo * stride
                        acc = bias[ch]
                        for ky in range(kh):
                            for kx in range(kw):
                                acc = acc + x[b, ch, iy + ky, ix + kx] * ker[ch, 0, ky, kx]
                        out[b, ch, y, xo] = acc
    return out_arr


def dense(const float[:, ::1] x, const float[:, ::1] w, const float[::1] bias):
    # x: [n, c], w: [units, c] -> out: [n, units]
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], units = w.shape[0]
    out_arr = np.empty((n, units), dtype=np.float32)
    cdef float[:, ::1] out = out_arr
    cdef Py_ssize_t b, o, i
    cdef float acc
    with nogil:
        for b in range(n):
            for o in range(units):
                acc = bias[o]
                for i in range(c):
                    acc = acc + x[b, i] * w[o, i]
                out[b, o] = acc
    return out_arr
