"""Kernel correctness against independent naive-loop oracles.

The oracles below re-derive every output element with plain Python loops
straight from the tap formula (out-of-bounds taps read zero, ``same``
padding keeps ceil(size/stride) with the extra zero on the bottom/right).
Every available backend must match them, and the backends must match each
other.
"""

import math

import numpy as np
import pytest

from maskpipe import ParameterError, ShapeError, Tensor
from maskpipe import kernels


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    previous = kernels.active_backend()
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def _pads(size, k, stride, padding):
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k - size, 0)
        return out, total // 2
    return (size - k) // stride + 1, 0


def oracle_conv2d(x, k, b, stride, padding):
    n, ic, h, w = x.shape
    oc, _, kh, kw = k.shape
    oh, pt = _pads(h, kh, stride, padding)
    ow, pl = _pads(w, kw, stride, padding)
    out = np.zeros((n, oc, oh, ow), dtype=np.float64)
    for ni in range(n):
        for o in range(oc):
            for y in range(oh):
                for xo in range(ow):
                    acc = float(b[o])
                    for i in range(ic):
                        for dy in range(kh):
                            for dx in range(kw):
                                yy = y * stride + dy - pt
                                xx = xo * stride + dx - pl
                                if 0 <= yy < h and 0 <= xx < w:
                                    acc += float(x[ni, i, yy, xx]) * float(k[o, i, dy, dx])
                    out[ni, o, y, xo] = acc
    return out


def oracle_depthwise(x, k, b, stride, padding):
    n, c, h, w = x.shape
    _, _, kh, kw = k.shape
    oh, pt = _pads(h, kh, stride, padding)
    ow, pl = _pads(w, kw, stride, padding)
    out = np.zeros((n, c, oh, ow), dtype=np.float64)
    for ni in range(n):
        for i in range(c):
            for y in range(oh):
                for xo in range(ow):
                    acc = float(b[i])
                    for dy in range(kh):
                        for dx in range(kw):
                            yy = y * stride + dy - pt
                            xx = xo * stride + dx - pl
                            if 0 <= yy < h and 0 <= xx < w:
                                acc += float(x[ni, i, yy, xx]) * float(k[i, 0, dy, dx])
                    out[ni, i, y, xo] = acc
    return out


def oracle_dense(x, w, b):
    n, c = x.shape
    units = w.shape[0]
    out = np.zeros((n, units), dtype=np.float64)
    for ni in range(n):
        for o in range(units):
            acc = float(b[o])
            for i in range(c):
                acc += float(w[o, i]) * float(x[ni, i])
            out[ni, o] = acc
    return out


def _rand(rng, shape):
    return (rng.uniform(-2.0, 2.0, size=shape)).astype(np.float32)


# --- randomized oracle sweeps -------------------------------------------------

def test_conv2d_matches_naive_loop_oracle(backend, rng):
    for trial in range(210):
        n = int(rng.integers(1, 3))
        ic = int(rng.integers(1, 5))
        oc = int(rng.integers(1, 5))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        kh = int(rng.integers(1, min(h, 3) + 1))
        kw = int(rng.integers(1, min(w, 3) + 1))
        stride = int(rng.integers(1, 3))
        padding = "same" if rng.integers(2) else "valid"
        if padding == "valid" and ((h - kh) // stride < 0 or (w - kw) // stride < 0):
            padding = "same"
        x = _rand(rng, (n, ic, h, w))
        k = _rand(rng, (oc, ic, kh, kw))
        b = _rand(rng, (oc,))
        got = kernels.conv2d(Tensor(x), Tensor(k), b, stride, padding).array
        want = oracle_conv2d(x, k, b, stride, padding)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_depthwise_matches_naive_loop_oracle(backend, rng):
    for trial in range(210):
        n = int(rng.integers(1, 3))
        c = int(rng.integers(1, 7))
        h = int(rng.integers(1, 9))
        w = int(rng.integers(1, 9))
        kh = int(rng.integers(1, min(h, 3) + 1))
        kw = int(rng.integers(1, min(w, 3) + 1))
        stride = int(rng.integers(1, 3))
        padding = "same" if rng.integers(2) else "valid"
        x = _rand(rng, (n, c, h, w))
        k = _rand(rng, (c, 1, kh, kw))
        b = _rand(rng, (c,))
        got = kernels.depthwise_conv2d(Tensor(x), Tensor(k), b, stride, padding).array
        want = oracle_depthwise(x, k, b, stride, padding)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_dense_matches_naive_loop_oracle(backend, rng):
    for trial in range(100):
        n = int(rng.integers(1, 4))
        c = int(rng.integers(1, 65))
        units = int(rng.integers(1, 65))
        x = _rand(rng, (n, c))
        w = _rand(rng, (units, c))
        b = _rand(rng, (units,))
        got = kernels.dense(Tensor(x.reshape(n, c, 1, 1)), w, b).array
        want = oracle_dense(x, w, b).reshape(n, units, 1, 1)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_backends_agree_elementwise(rng):
    names = sorted(kernels.available_backends())
    if len(names) < 2:
        pytest.skip("only one backend built here")
    x = _rand(rng, (1, 4, 9, 9))
    k = _rand(rng, (6, 4, 3, 3))
    dk = _rand(rng, (4, 1, 3, 3))
    b6 = _rand(rng, (6,))
    b4 = _rand(rng, (4,))
    outs = {}
    previous = kernels.active_backend()
    try:
        for name in names:
            kernels.set_backend(name)
            outs[name] = (
                kernels.conv2d(Tensor(x), Tensor(k), b6, 2, "same").array,
                kernels.depthwise_conv2d(Tensor(x), Tensor(dk), b4, 1, "same").array,
            )
    finally:
        kernels.set_backend(previous)
    ref = outs[names[0]]
    for name in names[1:]:
        np.testing.assert_allclose(outs[name][0], ref[0], rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(outs[name][1], ref[1], rtol=1e-5, atol=1e-6)


# --- worked examples ----------------------------------------------------------

def test_conv2d_all_ones_kernel_center_sum(backend):
    x = Tensor(np.arange(1, 10, dtype=np.float32).reshape(1, 1, 3, 3))
    k = Tensor(np.ones((1, 1, 3, 3), dtype=np.float32))
    out = kernels.conv2d(x, k, None, 1, "same")
    assert out.shape == (1, 1, 3, 3)
    assert out.array[0, 0, 1, 1] == 45.0


def test_conv2d_identity_kernel_is_identity(backend, rng):
    x = Tensor(_rand(rng, (2, 3, 5, 4)))
    k = Tensor(np.ones((3, 3, 1, 1), dtype=np.float32) * np.eye(3)[:, :, None, None])
    out = kernels.conv2d(x, k, None, 1, "same")
    np.testing.assert_array_equal(out.array, x.array)


def test_conv2d_zero_kernel_annihilates(backend, rng):
    x = Tensor(_rand(rng, (1, 2, 5, 5)))
    k = Tensor(np.zeros((4, 2, 3, 3), dtype=np.float32))
    out = kernels.conv2d(x, k, None, 2, "same")
    assert out.shape == (1, 4, 3, 3)
    assert not out.array.any()


def test_conv2d_same_keeps_ceil_of_size_over_stride(backend, rng):
    for h, w, stride in ((7, 7, 2), (5, 6, 2), (9, 3, 3), (1, 1, 2)):
        x = Tensor(_rand(rng, (1, 1, h, w)))
        k = Tensor(_rand(rng, (1, 1, 3, 3)))
        out = kernels.conv2d(x, k, None, stride, "same")
        assert out.shape == (1, 1, math.ceil(h / stride), math.ceil(w / stride))


def test_conv2d_same_pads_extra_on_bottom_right(backend):
    # 2x2 input, 2x2 kernel, stride 2: one output tap, no padding needed at
    # the top/left, so the window sits at the origin.
    x = Tensor(np.array([[1, 2], [3, 4]], dtype=np.float32).reshape(1, 1, 2, 2))
    k = Tensor(np.zeros((1, 1, 2, 2), dtype=np.float32))
    k.array[0, 0, 0, 0] = 1.0
    out = kernels.conv2d(x, k, None, 2, "same")
    assert out.array.reshape(-1).tolist() == [1.0]
    # 3-wide input, 2-wide kernel, stride 2: out = 2, total pad = 1, and it
    # must land on the right: the second window reads [x2, 0].
    x = Tensor(np.array([5, 6, 7], dtype=np.float32).reshape(1, 1, 1, 3))
    k = Tensor(np.ones((1, 1, 1, 2), dtype=np.float32))
    out = kernels.conv2d(x, k, None, 2, "same")
    assert out.array.reshape(-1).tolist() == [11.0, 7.0]


def test_depthwise_centered_delta_scales_input(backend, rng):
    x = Tensor(_rand(rng, (1, 3, 6, 6)))
    k = np.zeros((3, 1, 3, 3), dtype=np.float32)
    k[:, 0, 1, 1] = 2.0
    out = kernels.depthwise_conv2d(x, Tensor(k), None, 1, "same")
    np.testing.assert_allclose(out.array, 2.0 * x.array, rtol=1e-6)


def test_depthwise_valid_window_sums_per_channel(backend):
    x = Tensor(np.array([[[1, 2], [3, 4]], [[5, 6], [7, 8]]],
                        dtype=np.float32).reshape(1, 2, 2, 2))
    k = Tensor(np.ones((2, 1, 2, 2), dtype=np.float32))
    out = kernels.depthwise_conv2d(x, k, None, 1, "valid")
    assert out.shape == (1, 2, 1, 1)
    assert out.array.reshape(-1).tolist() == [10.0, 26.0]


def test_depthwise_equals_block_diagonal_conv(backend):
    # the two kernels accumulate taps in different orders, so agreement is
    # algebraic up to float32 rounding, not bit-exact
    local = np.random.default_rng(7041)
    for _ in range(10):
        x = Tensor(_rand(local, (1, 3, 5, 5)))
        dk = _rand(local, (3, 1, 3, 3))
        b = _rand(local, (3,))
        block = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for i in range(3):
            block[i, i] = dk[i, 0]
        got = kernels.depthwise_conv2d(x, Tensor(dk), b, 1, "same").array
        want = kernels.conv2d(x, Tensor(block), b, 1, "same").array
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)


def test_affine_channel_identity_and_arithmetic(rng):
    x = Tensor(_rand(rng, (1, 3, 4, 4)))
    out = kernels.affine_channel(x, np.ones(3, np.float32), np.zeros(3, np.float32))
    np.testing.assert_array_equal(out.array, x.array)
    three = Tensor(np.full((1, 1, 1, 1), 3.0, dtype=np.float32))
    out = kernels.affine_channel(three, np.array([2.0], np.float32),
                                 np.array([1.0], np.float32))
    assert out.array.reshape(-1).tolist() == [7.0]


def test_affine_channel_carries_folded_normalization(rng):
    # gamma=2, beta=1, mean=0, var=1, eps=0 folds to scale 2, shift 1.
    gamma, beta, mean, var, eps = 2.0, 1.0, 0.0, 1.0, 0.0
    scale = gamma / math.sqrt(var + eps)
    shift = beta - mean * scale
    assert (scale, shift) == (2.0, 1.0)
    x = Tensor(_rand(rng, (2, 1, 3, 3)))
    out = kernels.affine_channel(x, np.array([scale], np.float32),
                                 np.array([shift], np.float32))
    np.testing.assert_allclose(out.array, 2.0 * x.array + 1.0, rtol=1e-6)


def test_relu6_clamps_both_sides(rng):
    x = Tensor(np.array([-1.0, 3.0, 7.0, 0.0, 6.0], np.float32).reshape(1, 1, 1, 5))
    out = kernels.relu6(x)
    assert out.array.reshape(-1).tolist() == [0.0, 3.0, 6.0, 0.0, 6.0]
    r = kernels.relu6(Tensor(_rand(rng, (2, 3, 4, 4)) * 10)).array
    assert r.min() >= 0.0 and r.max() <= 6.0


def test_global_avg_pool_means_each_plane():
    const = Tensor(np.full((1, 2, 3, 3), 4.5, dtype=np.float32))
    np.testing.assert_array_equal(kernels.global_avg_pool(const).array.reshape(-1),
                                  [4.5, 4.5])
    x = Tensor(np.array([1, 2, 3, 4], np.float32).reshape(1, 1, 2, 2))
    assert kernels.global_avg_pool(x).array.reshape(-1).tolist() == [2.5]
    big = Tensor.zeros((1, 1280, 7, 7))
    assert kernels.global_avg_pool(big).shape == (1, 1280, 1, 1)


def test_dense_identity_and_dot_product(backend):
    x = Tensor(np.array([2.0, 3.0], np.float32).reshape(1, 2, 1, 1))
    out = kernels.dense(x, np.eye(2, dtype=np.float32), None)
    assert out.array.reshape(-1).tolist() == [2.0, 3.0]
    out = kernels.dense(x, np.array([[1.0, 1.0]], np.float32),
                        np.array([1.0], np.float32))
    assert out.array.reshape(-1).tolist() == [6.0]


def test_softmax_closed_forms_and_shift_invariance(rng):
    out = kernels.softmax(Tensor(np.zeros((1, 2, 1, 1), np.float32)))
    np.testing.assert_allclose(out.array.reshape(-1), [0.5, 0.5], atol=1e-7)
    out = kernels.softmax(Tensor(np.array([math.log(3.0), 0.0],
                                          np.float32).reshape(1, 2, 1, 1)))
    np.testing.assert_allclose(out.array.reshape(-1), [0.75, 0.25], atol=1e-6)
    for _ in range(20):
        x = _rand(rng, (2, 5, 1, 1)) * 3
        a = kernels.softmax(Tensor(x)).array
        bshift = kernels.softmax(Tensor(x + 2.75)).array
        np.testing.assert_allclose(a, bshift, rtol=0, atol=1e-6)
        sums = a.sum(axis=1)
        np.testing.assert_allclose(sums, np.ones_like(sums), atol=1e-6)
        assert np.array_equal(np.argmax(a, axis=1), np.argmax(x, axis=1))


def test_kernels_are_deterministic(backend, rng):
    x = Tensor(_rand(rng, (1, 3, 8, 8)))
    k = Tensor(_rand(rng, (4, 3, 3, 3)))
    b = _rand(rng, (4,))
    first = kernels.conv2d(x, k, b, 2, "same").array
    second = kernels.conv2d(x, k, b, 2, "same").array
    assert np.array_equal(first, second)


# --- error contracts ----------------------------------------------------------

def test_conv2d_rejects_channel_mismatch():
    x = Tensor.zeros((1, 3, 4, 4))
    k = Tensor.zeros((2, 4, 3, 3))
    with pytest.raises(ShapeError):
        kernels.conv2d(x, k)


def test_depthwise_rejects_channel_mismatch():
    x = Tensor.zeros((1, 3, 4, 4))
    with pytest.raises(ShapeError):
        kernels.depthwise_conv2d(x, Tensor.zeros((2, 1, 3, 3)))
    with pytest.raises(ShapeError):
        kernels.depthwise_conv2d(x, Tensor.zeros((3, 2, 3, 3)))


def test_stride_and_padding_arguments_are_checked():
    x = Tensor.zeros((1, 1, 4, 4))
    k = Tensor.zeros((1, 1, 3, 3))
    with pytest.raises(ParameterError):
        kernels.conv2d(x, k, None, 0, "same")
    with pytest.raises(ParameterError):
        kernels.conv2d(x, k, None, 1, "reflect")


def test_zero_size_spatial_output_is_rejected():
    x = Tensor.zeros((1, 1, 2, 2))
    k = Tensor.zeros((1, 1, 3, 3))
    with pytest.raises(ShapeError):
        kernels.conv2d(x, k, None, 1, "valid")


def test_bias_and_vector_lengths_are_checked():
    x = Tensor.zeros((1, 2, 4, 4))
    k = Tensor.zeros((3, 2, 1, 1))
    with pytest.raises(ShapeError):
        kernels.conv2d(x, k, np.zeros(2, np.float32))
    with pytest.raises(ShapeError):
        kernels.affine_channel(x, np.zeros(3, np.float32), np.zeros(2, np.float32))


def test_dense_needs_pooled_input():
    with pytest.raises(ShapeError):
        kernels.dense(Tensor.zeros((1, 4, 2, 2)), np.zeros((3, 4), np.float32))
    with pytest.raises(ShapeError):
        kernels.dense(Tensor.zeros((1, 4, 1, 1)), np.zeros((3, 5), np.float32))


def test_global_avg_pool_rejects_empty_plane():
    with pytest.raises(ShapeError):
        kernels.global_avg_pool(Tensor.zeros((1, 2, 0, 3)))


def test_backend_registry_round_trip():
    names = kernels.available_backends()
    assert "numpy" in names
    previous = kernels.active_backend()
    assert previous in names
    with pytest.raises(ParameterError):
        kernels.set_backend("cuda")
    kernels.set_backend(previous)
    assert kernels.active_backend() == previous
