"""Ground-truth nonlinear compliant modes by hard-constrained minimization.

For modal coordinates z the oracle solves min_u E(X + u) subject to
e_i . u = z_i via a null-space method: L-BFGS on the full displacement with
gradients projected by P = I - E E^T, seeded at the linear displacement
l = E z (feasible). Every two-loop direction is a combination of projected
vectors, so iterates stay on the constraint plane up to round-off; a final
re-affinization u <- l + P(u - l) removes the accumulated drift.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, ModalSubError
from .lbfgs import LbfgsOptions, lbfgs_minimize
from .modes import LinearModeBasis, linear_displacement
from .sampling import grid_coords, random_coords
from .validation import check_box, check_modal_coords

DATASET_FORMAT = "compliant-mode-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class OracleSample:
    z: np.ndarray
    x_star: np.ndarray  # equilibrium positions (3n,)
    e_star: float
    converged: bool
    grad_norm: float  # projected gradient norm at the solution
    iterations: int


@dataclass
class OracleDataset:
    """Columnar oracle records plus a manifest describing their provenance."""

    zs: np.ndarray  # (N, m)
    positions: np.ndarray  # (N, 3n)
    energies: np.ndarray  # (N,)
    grad_norms: np.ndarray
    converged: np.ndarray  # bool (N,)
    manifest: dict

    def __len__(self) -> int:
        return self.zs.shape[0]

    def displacements(self, rest_positions: np.ndarray) -> np.ndarray:
        return self.positions - rest_positions

    def subset(self, index) -> "OracleDataset":
        manifest = dict(self.manifest)
        manifest["subset_of"] = manifest.get("spec")
        return OracleDataset(
            zs=self.zs[index],
            positions=self.positions[index],
            energies=self.energies[index],
            grad_norms=self.grad_norms[index],
            converged=self.converged[index],
            manifest=manifest,
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.zs, self.positions, self.energies,
                    self.grad_norms, self.converged.astype(np.uint8)):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(json.dumps(self.manifest, sort_keys=True).encode())
        return h.hexdigest()


def oracle_solve(
    energy_model,
    basis: LinearModeBasis,
    z,
    tol_factor: float = 1.0e-6,
    max_iter: int = 2000,
    u0: np.ndarray | None = None,
) -> OracleSample:
    """Solve one hard-constrained minimization; warm start via u0 optional."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (basis.num_modes,):
        raise ModalSubError(f"z must have shape ({basis.num_modes},)")
    modes = basis.modes
    rest = energy_model.mesh.rest_positions
    l = linear_displacement(basis, z)

    def project(v):
        return v - modes @ (modes.T @ v)

    # Scale-invariant tolerance from the force level at the feasible seed.
    f_scale = max(1.0, float(np.linalg.norm(energy_model.gradient(rest + l))))
    tol = tol_factor * f_scale

    def fun_grad(u):
        e, g = energy_model.energy_and_gradient(rest + u)
        return e, project(g)

    start = l if u0 is None else l + project(u0 - l)
    res = lbfgs_minimize(
        fun_grad, start,
        LbfgsOptions(grad_tol=tol, max_iter=max_iter),
    )
    u = l + project(res.x - l)
    x_star = rest + u
    e_star = energy_model.energy(x_star)
    grad_norm = float(np.linalg.norm(project(energy_model.gradient(x_star))))
    return OracleSample(
        z=z,
        x_star=x_star,
        e_star=float(e_star),
        converged=bool(res.converged and grad_norm <= 2.0 * tol),
        grad_norm=grad_norm,
        iterations=res.iterations,
    )


def generate_oracle_dataset(
    energy_model,
    basis: LinearModeBasis,
    spec: dict,
    box,
    tol_factor: float = 1.0e-6,
    max_iter: int = 2000,
    warm_start: bool = True,
    max_unconverged_fraction: float = 0.01,
    progress=None,
) -> OracleDataset:
    """Solve the oracle over a grid or random sample plan.

    spec: {"kind": "grid", "resolution": R} (lexicographic order) or
    {"kind": "random", "count": N, "seed": S} (generator-defined order).
    Grid traversal warm-starts from the previous sample; every sample is
    still polished to the same projected-gradient tolerance.
    """
    box = check_box(box, basis.num_modes)
    kind = spec.get("kind")
    if kind == "grid":
        zs = grid_coords(box, int(spec["resolution"]))
    elif kind == "random":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        zs = random_coords(box, int(spec["count"]), rng)
    else:
        raise ModalSubError(f"unknown dataset spec kind {kind!r}")

    n = zs.shape[0]
    positions = np.empty((n, energy_model.num_dofs))
    energies = np.empty(n)
    grad_norms = np.empty(n)
    converged = np.zeros(n, dtype=bool)
    rest = energy_model.mesh.rest_positions
    prev_u = None
    for i in range(n):
        sample = oracle_solve(
            energy_model, basis, zs[i],
            tol_factor=tol_factor, max_iter=max_iter,
            u0=prev_u if warm_start else None,
        )
        positions[i] = sample.x_star
        energies[i] = sample.e_star
        grad_norms[i] = sample.grad_norm
        converged[i] = sample.converged
        if warm_start:
            prev_u = sample.x_star - rest
        if progress is not None:
            progress(i + 1, n, sample)

    frac_bad = 1.0 - converged.mean() if n else 0.0
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "spec": {k: (int(v) if isinstance(v, (int, np.integer)) else v)
                 for k, v in spec.items()},
        "box": [[float(lo), float(hi)] for lo, hi in box],
        "tol_factor": float(tol_factor),
        "max_iter": int(max_iter),
        "warm_start": bool(warm_start),
        "fingerprint": energy_model.fingerprint(),
        "num_samples": int(n),
        "num_converged": int(converged.sum()),
        "max_grad_norm": float(grad_norms.max()) if n else 0.0,
    }
    ds = OracleDataset(zs, positions, energies, grad_norms, converged, manifest)
    if frac_bad > max_unconverged_fraction:
        raise ConvergenceError(
            f"{converged.size - converged.sum()} of {n} oracle samples "
            f"unconverged (> {max_unconverged_fraction:.0%})"
        )
    return ds


def save_dataset(dataset: OracleDataset, path) -> None:
    np.savez_compressed(
        path,
        zs=dataset.zs,
        positions=dataset.positions,
        energies=dataset.energies,
        grad_norms=dataset.grad_norms,
        converged=dataset.converged,
        manifest=np.frombuffer(
            json.dumps(dataset.manifest, sort_keys=True).encode(), dtype=np.uint8
        ),
    )


def load_dataset(path) -> OracleDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    with np.load(path) as data:
        manifest = json.loads(bytes(data["manifest"].tobytes()).decode())
        if manifest.get("format") != DATASET_FORMAT:
            raise ModalSubError(f"{path} is not an oracle dataset")
        return OracleDataset(
            zs=data["zs"],
            positions=data["positions"],
            energies=data["energies"],
            grad_norms=data["grad_norms"],
            converged=data["converged"].astype(bool),
            manifest=manifest,
        )


def export_csv(dataset: OracleDataset, path) -> None:
    """(z, e_star) table for quick inspection."""
    m = dataset.zs.shape[1]
    cols = [f"z{i}" for i in range(m)] + ["e_star", "converged", "grad_norm"]
    lines = [",".join(cols)]
    for i in range(len(dataset)):
        vals = [repr(float(v)) for v in dataset.zs[i]]
        vals.append(repr(float(dataset.energies[i])))
        vals.append(str(bool(dataset.converged[i])))
        vals.append(repr(float(dataset.grad_norms[i])))
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")
