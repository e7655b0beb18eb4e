"""Numeric kernels every layer of the network is built from.

The heavy operations (regular and depthwise convolution, fully connected)
exist in two interchangeable backends: ``native``, a compiled extension, and
``numpy``, a vectorized fallback. The native backend is preferred at import
time when present; set ``MASKPIPE_BACKEND=native|numpy`` to force one, or
call :func:`set_backend` at runtime. Both backends pass the same oracle test
suite and differ only in speed.

All operations are pure functions over immutable inputs and are safe to call
from many threads concurrently. Identical inputs produce bit-identical
outputs within a backend.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ParameterError, ShapeError
from ..tensor import Tensor
from . import numpy_backend

_BACKENDS = {"numpy": numpy_backend}
try:  # the compiled extension is optional; the numpy path always exists
    from . import native_backend

    _BACKENDS["native"] = native_backend
except ImportError:  # pragma: no cover - depends on the build environment
    pass


def available_backends() -> tuple[str, ...]:
    """Names of the kernel backends importable in this environment."""
    return tuple(sorted(_BACKENDS))


def active_backend() -> str:
    """Name of the backend currently executing the heavy kernels."""
    return _impl.NAME


def set_backend(name: str) -> None:
    """Switch the heavy kernels to the named backend.

    Not safe to call while other threads are running kernels.
    """
    global _impl
    try:
        _impl = _BACKENDS[name]
    except KeyError:
        raise ParameterError(
            f"unknown backend {name!r}; available: {', '.join(available_backends())}"
        ) from None


def _select_initial_backend() -> str:
    requested = os.environ.get("MASKPIPE_BACKEND", "auto").lower()
    if requested == "auto":
        return "native" if "native" in _BACKENDS else "numpy"
    if requested not in _BACKENDS:
        raise ParameterError(
            f"MASKPIPE_BACKEND={requested!r} is not available; "
            f"choose from: auto, {', '.join(available_backends())}"
        )
    return requested


_impl = _BACKENDS[_select_initial_backend()]


def _channel_vector(vec, length: int, what: str) -> np.ndarray:
    if vec is None:
        return np.zeros(length, dtype=np.float32)
    arr = np.ascontiguousarray(vec, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] != length:
        raise ShapeError(f"{what} must be a vector of length {length}, got shape {arr.shape}")
    return arr


def _pad_amounts(size: int, k: int, stride: int, padding: str) -> tuple[int, int, int]:
    """Output extent and (leading, trailing) zero padding for one axis.

    ``same`` keeps output = ceil(size / stride) using the asymmetric ceil
    split: when the total padding is odd the extra zero lands on the
    bottom/right edge.
    """
    if padding == "same":
        out = -(-size // stride)
        total = max((out - 1) * stride + k - size, 0)
        lead = total // 2
        return out, lead, total - lead
    if padding == "valid":
        return (size - k) // stride + 1, 0, 0
    raise ParameterError(f"padding must be 'same' or 'valid', got {padding!r}")


def _padded_input(inp: Tensor, kh: int, kw: int, stride: int, padding: str):
    n, c, h, w = inp.shape
    oh, pt, pb = _pad_amounts(h, kh, stride, padding)
    ow, pl, pr = _pad_amounts(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ShapeError(
            f"zero-size spatial output: input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride}, padding {padding!r}"
        )
    x = inp.array
    if pt or pb or pl or pr:
        x = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    return x


def conv2d(inp: Tensor, kernel: Tensor, bias=None, stride: int = 1,
           padding: str = "same") -> Tensor:
    """2-D convolution with per-output-channel bias.

    ``kernel`` has layout [oc, ic, kh, kw]; out-of-bounds taps read zero.
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    n, ic, h, w = inp.shape
    oc, kic, kh, kw = kernel.shape
    if kic != ic:
        raise ShapeError(
            f"kernel expects {kic} input channels but tensor has {ic} "
            f"(input {inp.shape}, kernel {kernel.shape})"
        )
    b = _channel_vector(bias, oc, "bias")
    x = _padded_input(inp, kh, kw, stride, padding)
    return Tensor(_impl.conv2d(x, kernel.array, b, stride))


def depthwise_conv2d(inp: Tensor, kernel: Tensor, bias=None, stride: int = 1,
                     padding: str = "same") -> Tensor:
    """Per-channel spatial convolution: output channel i sees only input channel i.

    ``kernel`` has layout [c, 1, kh, kw].
    """
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")
    n, c, h, w = inp.shape
    kc, one, kh, kw = kernel.shape
    if kc != c or one != 1:
        raise ShapeError(
            f"depthwise kernel must have shape [{c}, 1, kh, kw], got {kernel.shape}"
        )
    b = _channel_vector(bias, c, "bias")
    x = _padded_input(inp, kh, kw, stride, padding)
    return Tensor(_impl.depthwise_conv2d(x, kernel.array, b, stride))


def affine_channel(inp: Tensor, scale, shift) -> Tensor:
    """Per-channel affine map ``x * scale[c] + shift[c]`` (folded batch norm)."""
    c = inp.c
    s = _channel_vector(scale, c, "scale")
    t = _channel_vector(shift, c, "shift")
    return Tensor(inp.array * s[None, :, None, None] + t[None, :, None, None])


def relu6(inp: Tensor) -> Tensor:
    """Elementwise min(max(x, 0), 6)."""
    return Tensor(np.minimum(np.maximum(inp.array, np.float32(0.0)), np.float32(6.0)))


def global_avg_pool(inp: Tensor) -> Tensor:
    """Arithmetic mean over each channel's spatial positions, kept as [n, c, 1, 1]."""
    if inp.h * inp.w < 1:
        raise ShapeError(f"global average pool needs a non-empty spatial extent, got {inp.shape}")
    return Tensor(inp.array.mean(axis=(2, 3), keepdims=True, dtype=np.float32))


def dense(inp: Tensor, weights, bias=None) -> Tensor:
    """Fully connected layer on [n, c, 1, 1] tensors; ``weights`` is [units, c]."""
    n, c, h, w = inp.shape
    if h != 1 or w != 1:
        raise ShapeError(f"dense expects spatial extent 1x1, got {inp.shape}")
    wmat = np.ascontiguousarray(weights, dtype=np.float32)
    if wmat.ndim != 2 or wmat.shape[1] != c:
        raise ShapeError(f"weights must be [units, {c}], got {wmat.shape}")
    b = _channel_vector(bias, wmat.shape[0], "bias")
    out = _impl.dense(inp.array.reshape(n, c), wmat, b)
    return Tensor(out.reshape(n, wmat.shape[0], 1, 1))


def softmax(inp: Tensor) -> Tensor:
    """Numerically stable softmax across the channel axis.

    Per-sample outputs sum to 1 within 1e-6 and preserve the argmax.
    """
    if inp.c < 1:
        raise ShapeError(f"softmax needs at least one channel, got {inp.shape}")
    x = inp.array
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return Tensor(e / e.sum(axis=1, keepdims=True))
