"""Rank-4 tensor container used by every layer operation.

Axis convention, fixed across the package:

    (height, width, channels, batch)

For time-series inputs, height is the time axis (48 half-hour samples),
width carries parallel series (1 for a single building, the variable count
for multi-channel inputs, 39 for whole-network inputs) and channels carries
co-located planes (for example the three energy vectors). All data is
float64; no other dtype is ever used in the numeric core.
"""

from __future__ import annotations

import numpy as np

from .errors import EmptyTensorError


class Tensor4:
    """Thin, validated wrapper around a float64 ndarray of rank 4."""

    __slots__ = ("data",)

    def __init__(self, data) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise ValueError(f"expected a rank-4 array, got rank {arr.ndim}")
        if min(arr.shape) < 1:
            raise EmptyTensorError(f"all dims must be >= 1, got shape {arr.shape}")
        self.data = arr

    # -- construction helpers --

    @classmethod
    def zeros(cls, height: int, width: int, channels: int, batch: int) -> "Tensor4":
        return cls(np.zeros((height, width, channels, batch)))

    @classmethod
    def from_vector(cls, values) -> "Tensor4":
        """Lift a 1-d series into a (len, 1, 1, 1) column tensor."""
        v = np.asarray(values, dtype=np.float64).reshape(-1, 1, 1, 1)
        return cls(v)

    # -- views --

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def batch(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    def copy(self) -> "Tensor4":
        return Tensor4(self.data.copy())

    def __repr__(self) -> str:
        h, w, c, n = self.data.shape
        return f"Tensor4({h}x{w}x{c}x{n})"
