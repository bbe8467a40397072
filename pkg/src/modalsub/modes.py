"""Linear vibration modes: smallest eigenpairs of the rest-state Hessian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ModalSubError
from .validation import as_float_array, readonly

RIGID_TOL_FACTOR = 1.0e-8
DENSE_CUTOFF = 4000


@dataclass(frozen=True)
class LinearModeBasis:
    """Unit-norm eigenvectors of the rest Hessian, eigenvalues ascending."""

    modes: np.ndarray  # (3n, m), orthonormal columns
    eigenvalues: np.ndarray  # (m,), ascending, all above the rigid cutoff
    num_filtered_rigid: int
    lambda_max: float

    def __post_init__(self):
        object.__setattr__(self, "modes", readonly(np.asarray(self.modes, dtype=np.float64)))
        object.__setattr__(
            self, "eigenvalues", readonly(np.asarray(self.eigenvalues, dtype=np.float64))
        )

    @property
    def num_modes(self) -> int:
        return self.modes.shape[1]

    @property
    def num_dofs(self) -> int:
        return self.modes.shape[0]

    def project(self, u: np.ndarray) -> np.ndarray:
        """Modal coordinates z_i = e_i . u for one or a batch of displacements."""
        return np.asarray(u) @ self.modes

    def to_dict(self) -> dict:
        return {
            "modes": [[float(v) for v in col] for col in self.modes.T],
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "num_filtered_rigid": int(self.num_filtered_rigid),
            "lambda_max": float(self.lambda_max),
        }

    @staticmethod
    def from_dict(d: dict) -> "LinearModeBasis":
        modes = np.array(d["modes"], dtype=np.float64).T
        return LinearModeBasis(
            modes=modes,
            eigenvalues=np.array(d["eigenvalues"], dtype=np.float64),
            num_filtered_rigid=int(d["num_filtered_rigid"]),
            lambda_max=float(d["lambda_max"]),
        )


def _smallest_eigenpairs(h: sp.spmatrix, k: int) -> tuple[np.ndarray, np.ndarray, float]:
    """k smallest eigenpairs plus lambda_max of a symmetric sparse matrix."""
    n = h.shape[0]
    if n <= DENSE_CUTOFF:
        vals, vecs = np.linalg.eigh(h.toarray())
        return vals[:k], vecs[:, :k], float(vals[-1])
    lam_max = float(spla.eigsh(h, k=1, which="LA", return_eigenvectors=False)[0])
    # Shift-invert around a strictly negative sigma: H - sigma I stays
    # positive definite even with rigid null modes present.
    sigma = -1.0e-6 * max(lam_max, 1.0)
    vals, vecs = spla.eigsh(h, k=min(k, n - 1), sigma=sigma, which="LM")
    order = np.argsort(vals)
    return vals[order], vecs[:, order], lam_max


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    """Deterministic orientation: the largest-magnitude component is positive."""
    out = vecs.copy()
    for j in range(out.shape[1]):
        lead = int(np.argmax(np.abs(out[:, j])))
        if out[lead, j] < 0:
            out[:, j] = -out[:, j]
    return out


def linear_modes(hessian: sp.spmatrix, num_modes: int) -> LinearModeBasis:
    """The num_modes smallest non-rigid eigenpairs of the rest Hessian.

    Eigenvalues below tau = RIGID_TOL_FACTOR * lambda_max are rigid or null
    modes and are discarded (6 of them for an unpinned body).
    """
    if num_modes < 1:
        raise ModalSubError("num_modes must be >= 1")
    n = hessian.shape[0]
    # Rigid modes never exceed 6; a small cushion absorbs near-threshold ties.
    want = min(n, num_modes + 6 + 4)
    vals, vecs, lam_max = _smallest_eigenpairs(hessian, want)
    tau = RIGID_TOL_FACTOR * lam_max
    keep = vals > tau
    num_rigid = int(np.sum(~keep))
    if int(np.sum(keep)) < num_modes:
        raise ModalSubError(
            f"requested {num_modes} modes but only {int(np.sum(keep))} "
            f"non-rigid modes available ({num_rigid} filtered)"
        )
    kept_vals = vals[keep][:num_modes]
    kept_vecs = vecs[:, keep][:, :num_modes]
    kept_vecs = _fix_signs(kept_vecs)
    return LinearModeBasis(
        modes=kept_vecs,
        eigenvalues=kept_vals,
        num_filtered_rigid=num_rigid,
        lambda_max=lam_max,
    )


def linear_displacement(basis: LinearModeBasis, z) -> np.ndarray:
    """l = sum_i z_i e_i for a single z (m,) or a batch (..., m)."""
    z = as_float_array(z, "z")
    if z.shape[-1] != basis.num_modes:
        raise ModalSubError(
            f"z has {z.shape[-1]} coordinates, basis has {basis.num_modes} modes"
        )
    return z @ basis.modes.T
