"""Input validation helpers used across the estimator API and core ops."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def as_float_array(x, name: str = "array") -> np.ndarray:
    """Convert to a contiguous float64 array, rejecting non-finite entries."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains non-finite entries")
    return arr


def check_positions(x, num_dofs: int, name: str = "positions") -> np.ndarray:
    """Validate a flat length-3n coordinate vector."""
    arr = as_float_array(x, name)
    if arr.ndim != 1 or arr.shape[0] != num_dofs:
        raise ValueError(
            f"{name} must be a flat vector of length {num_dofs}, got shape {arr.shape}"
        )
    return arr


def check_position_batch(x, num_dofs: int, name: str = "positions") -> np.ndarray:
    """Validate a (batch, 3n) coordinate array; promotes a single vector."""
    arr = as_float_array(x, name)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != num_dofs:
        raise ValueError(
            f"{name} must have shape (batch, {num_dofs}), got {arr.shape}"
        )
    return arr


def check_modal_coords(z, num_modes: int, name: str = "z") -> np.ndarray:
    """Validate a (batch, m) array of modal coordinates; promotes a vector."""
    arr = as_float_array(z, name)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != num_modes:
        raise ValueError(
            f"{name} must have shape (batch, {num_modes}), got {arr.shape}"
        )
    return arr


def check_box(box, num_modes: int | None = None) -> np.ndarray:
    """Validate a non-degenerate per-axis domain box of shape (m, 2)."""
    arr = as_float_array(box, "domain box")
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"domain box must have shape (m, 2), got {arr.shape}")
    if num_modes is not None and arr.shape[0] != num_modes:
        raise ValueError(f"domain box must have {num_modes} rows, got {arr.shape[0]}")
    if np.any(arr[:, 1] <= arr[:, 0]):
        raise ValueError("domain box is degenerate: need hi > lo on every axis")
    return arr


def readonly(arr: np.ndarray) -> np.ndarray:
    """Return the array with its write flag cleared (shared, immutable)."""
    arr.flags.writeable = False
    return arr
