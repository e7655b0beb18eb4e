"""Dense rank-4 float32 tensors in [batch, channels, height, width] layout."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


class Tensor:
    """Wrapper around a C-contiguous float32 array of shape [n, c, h, w].

    The flat buffer runs row-major in the order batch -> channel -> row ->
    column, so ``data`` of an [n, c, h, w] tensor holds exactly n*c*h*w
    elements. Instances are treated as immutable by every operation in this
    package: kernels allocate fresh outputs and never write to their inputs.
    """

    __slots__ = ("array",)

    def __init__(self, array) -> None:
        arr = np.asarray(array)
        if arr.ndim != 4:
            raise ShapeError(f"tensor must have rank 4 [n, c, h, w], got rank {arr.ndim}")
        self.array = np.ascontiguousarray(arr, dtype=np.float32)

    @classmethod
    def from_flat(cls, shape, data) -> "Tensor":
        """Build a tensor from an explicit shape and a flat buffer."""
        dims = tuple(int(v) for v in shape)
        if len(dims) != 4 or any(d < 0 for d in dims):
            raise ShapeError(f"shape must be four non-negative integers, got {shape!r}")
        flat = np.ascontiguousarray(data, dtype=np.float32).reshape(-1)
        expected = dims[0] * dims[1] * dims[2] * dims[3]
        if flat.size != expected:
            raise ShapeError(
                f"data length {flat.size} does not match shape {dims} (expected {expected})"
            )
        return cls(flat.reshape(dims))

    @classmethod
    def zeros(cls, shape) -> "Tensor":
        return cls(np.zeros(tuple(int(v) for v in shape), dtype=np.float32))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.array.shape  # type: ignore[return-value]

    @property
    def n(self) -> int:
        return self.array.shape[0]

    @property
    def c(self) -> int:
        return self.array.shape[1]

    @property
    def h(self) -> int:
        return self.array.shape[2]

    @property
    def w(self) -> int:
        return self.array.shape[3]

    @property
    def data(self) -> np.ndarray:
        """Flat float32 view of the buffer in n -> c -> h -> w order."""
        return self.array.reshape(-1)

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"
