"""Pyramid spatial max pooling and descriptor flattening.

Each W x H feature map collapses to five maxima: the global maximum plus
the maximum of each quadrant.  Slot order is fixed as

    [global, top-left, top-right, bottom-left, bottom-right]

so that descriptors and files are deterministic.  Quadrants partition the
grid with a floor split: rows 0..H//2-1 are "top", columns 0..W//2-1 are
"left", every cell lands in exactly one quadrant.  When a split side is
empty (W == 1 or H == 1) the affected slots repeat the global maximum,
which keeps descriptors free of sentinel values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .tensor_io import FeatureTensor
from .validation import check_kept

POOLED_SLOTS = 5


@dataclass(eq=False)
class PooledMatrix:
    """Per-channel pooled descriptors, shape (channels, slots), float64."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2 or min(arr.shape) < 1:
            raise ValueError(f"pooled values must be a (C, P) matrix, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("pooled values contain non-finite entries")
        self.values = arr

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def per_map_dim(self) -> int:
        return self.values.shape[1]


def pyramid_pool(tensor: FeatureTensor) -> PooledMatrix:
    """Pool each feature map of ``tensor`` into its 5-value descriptor."""
    data = tensor.data.astype(np.float64)
    height, width = tensor.height, tensor.width
    half_h, half_w = height // 2, width // 2

    global_max = data.max(axis=(0, 1))
    quadrants = (
        (slice(0, half_h), slice(0, half_w)),
        (slice(0, half_h), slice(half_w, width)),
        (slice(half_h, height), slice(0, half_w)),
        (slice(half_h, height), slice(half_w, width)),
    )
    columns = [global_max]
    for rows, cols in quadrants:
        block = data[rows, cols, :]
        if block.size == 0:
            columns.append(global_max)
        else:
            columns.append(block.max(axis=(0, 1)))
    return PooledMatrix(np.stack(columns, axis=1))


def flatten(pooled: PooledMatrix, kept: Iterable[int]) -> np.ndarray:
    """Concatenate the pooled rows of the kept channels, ascending by index.

    ``kept`` has set semantics: order and duplicates are normalized away.
    """
    idx = check_kept(kept, pooled.channels)
    return pooled.values[idx].ravel()


class PyramidPooler(TransformerMixin, BaseEstimator):
    """Stateless transformer from activation tensors to pooled descriptors.

    ``transform`` accepts a single :class:`FeatureTensor` or a sequence of
    them and returns the pooled counterpart(s).
    """

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        if isinstance(X, FeatureTensor):
            return pyramid_pool(X)
        return [pyramid_pool(t) for t in X]
