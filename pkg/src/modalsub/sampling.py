"""Modal-domain sampling: boxes, regular grids, uniform random draws."""

from __future__ import annotations

import numpy as np

from .errors import ModalSubError
from .validation import check_box


def box_from_half_width(num_modes: int, half_width: float) -> np.ndarray:
    """Symmetric box [-a, a]^m as an (m, 2) array."""
    if half_width <= 0:
        raise ModalSubError("half_width must be positive")
    return np.array([[-half_width, half_width]] * num_modes)


def grid_coords(box, resolution: int) -> np.ndarray:
    """Regular grid over the box, lexicographic order (first axis slowest)."""
    box = check_box(box)
    if resolution < 2:
        raise ModalSubError("grid resolution must be >= 2 per axis")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def random_coords(box, count: int, rng: np.random.Generator) -> np.ndarray:
    """count uniform samples over the box, order fixed by the generator."""
    box = check_box(box)
    if count < 1:
        raise ModalSubError("count must be >= 1")
    u = rng.uniform(size=(count, box.shape[0]))
    return box[:, 0] + u * (box[:, 1] - box[:, 0])


def split_counts(total: int, counts) -> list[slice]:
    """Contiguous slices (e.g. 1300 -> 900/100/300) in dataset order."""
    counts = [int(c) for c in counts]
    if sum(counts) != total:
        raise ModalSubError(f"split {counts} does not sum to {total}")
    out, k = [], 0
    for c in counts:
        out.append(slice(k, k + c))
        k += c
    return out
