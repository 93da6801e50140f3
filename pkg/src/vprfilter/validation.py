"""Input validation helpers shared across the package."""

from __future__ import annotations

from typing import Iterable

import numpy as np


def check_finite(arr: np.ndarray, name: str = "array") -> None:
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")


def check_kept(kept: Iterable[int], channels: int) -> np.ndarray:
    """Normalize a kept-channel collection to a sorted, unique index array.

    Raises ValueError on an empty collection or on out-of-range indices.
    """
    idx = np.unique(np.asarray(list(kept), dtype=np.intp))
    if idx.size == 0:
        raise ValueError("kept channel set is empty")
    if idx[0] < 0 or idx[-1] >= channels:
        raise ValueError(
            f"kept channel indices must lie in [0, {channels - 1}], "
            f"got range [{idx[0]}, {idx[-1]}]"
        )
    return idx


def check_same_grid(a, b, names: str = "matrices") -> None:
    """Require two pooled matrices to share channel count and slot count."""
    if a.values.shape != b.values.shape:
        raise ValueError(
            f"{names} must share (channels, slots); "
            f"got {a.values.shape} vs {b.values.shape}"
        )


def check_vector_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"vectors must have equal length, got {a.size} vs {b.size}")
    return a, b
