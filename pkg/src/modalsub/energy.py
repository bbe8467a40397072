"""Differentiable elastic energy models for tet solids and discrete shells.

Both models expose energy/gradient/Hessian/per-element stress over flat
length-3n position vectors, plus batched energy/gradient paths used by
training and evaluation. Optional attachment penalties (1/2)*k*|x_v - p(t)|^2
carry sinusoidal time-varying targets.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import elements as el
from .errors import ModalSubError
from .mesh import SHELL, SOLID, MaterialParams, Mesh, RestData, compute_rest_data
from .validation import check_position_batch, check_positions


@dataclass(frozen=True)
class Attachment:
    """Quadratic penalty tying a vertex to a (possibly moving) target.

    target(t) = base + amplitude * sin(2*pi*frequency*t + phase), so a plain
    pin is amplitude == 0.
    """

    vertex: int
    stiffness: float
    base: tuple = (0.0, 0.0, 0.0)
    amplitude: tuple = (0.0, 0.0, 0.0)
    frequency: float = 0.0
    phase: float = 0.0

    def target(self, t: float) -> np.ndarray:
        base = np.asarray(self.base, dtype=np.float64)
        amp = np.asarray(self.amplitude, dtype=np.float64)
        if self.frequency == 0.0 and self.phase == 0.0:
            return base
        return base + amp * math.sin(2.0 * math.pi * self.frequency * t + self.phase)

    def to_dict(self) -> dict:
        return {
            "vertex": int(self.vertex),
            "stiffness": float(self.stiffness),
            "base": [float(v) for v in self.base],
            "amplitude": [float(v) for v in self.amplitude],
            "frequency": float(self.frequency),
            "phase": float(self.phase),
        }

    @staticmethod
    def from_dict(d: dict) -> "Attachment":
        return Attachment(
            vertex=int(d["vertex"]),
            stiffness=float(d["stiffness"]),
            base=tuple(d.get("base", (0.0, 0.0, 0.0))),
            amplitude=tuple(d.get("amplitude", (0.0, 0.0, 0.0))),
            frequency=float(d.get("frequency", 0.0)),
            phase=float(d.get("phase", 0.0)),
        )


def _scatter_matrix(num_dofs: int, indices: np.ndarray) -> sp.csr_matrix:
    """Sparse (3n, ne*k*3) map from per-element vertex slots to global dofs."""
    ne, k = indices.shape
    dof = (3 * indices[:, :, None] + np.arange(3)).ravel()
    cols = np.arange(ne * k * 3)
    data = np.ones(ne * k * 3)
    return sp.csr_matrix((data, (dof, cols)), shape=(num_dofs, ne * k * 3))


class EnergyModel:
    """Shared interface: pure functions of (immutable model, x, t)."""

    def __init__(
        self,
        mesh: Mesh,
        material: MaterialParams,
        rest: RestData | None = None,
        attachments: tuple = (),
    ):
        self.mesh = mesh
        self.material = material
        self.rest = rest if rest is not None else compute_rest_data(mesh, material)
        self.attachments = tuple(attachments)
        self.num_dofs = mesh.num_dofs
        self._attach_idx = np.array([a.vertex for a in self.attachments], dtype=np.int64)
        self._attach_k = np.array([a.stiffness for a in self.attachments])

    # -- attachments ------------------------------------------------------

    def _attachment_targets(self, t: float) -> np.ndarray:
        if not self.attachments:
            return np.zeros((0, 3))
        return np.stack([a.target(t) for a in self.attachments])

    def _attachment_energy(self, xs: np.ndarray, t: float) -> np.ndarray:
        if not self.attachments:
            return np.zeros(xs.shape[:-2])
        d = xs[..., self._attach_idx, :] - self._attachment_targets(t)
        return 0.5 * np.einsum("...ai,...ai,a->...", d, d, self._attach_k)

    def _attachment_gradient(self, xs: np.ndarray, t: float, out: np.ndarray) -> None:
        targets = self._attachment_targets(t)
        for a, attach in enumerate(self.attachments):
            d = xs[..., attach.vertex, :] - targets[a]
            out[..., attach.vertex, :] += attach.stiffness * d

    def _attachment_hessian(self) -> sp.csr_matrix:
        n = self.num_dofs
        if not self.attachments:
            return sp.csr_matrix((n, n))
        dof = (3 * self._attach_idx[:, None] + np.arange(3)).ravel()
        data = np.repeat(self._attach_k, 3)
        return sp.csr_matrix((data, (dof, dof)), shape=(n, n))

    # -- public interface --------------------------------------------------

    def energy(self, x, t: float = 0.0) -> float:
        x = check_positions(x, self.num_dofs, "x")
        return float(self.energy_batch(x[None, :], t)[0])

    def gradient(self, x, t: float = 0.0) -> np.ndarray:
        x = check_positions(x, self.num_dofs, "x")
        return self.gradient_batch(x[None, :], t)[0]

    def energy_batch(self, xs, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def gradient_batch(self, xs, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def energy_and_gradient(self, x, t: float = 0.0):
        x = check_positions(x, self.num_dofs, "x")
        e, g = self.energy_and_gradient_batch(x[None, :], t)
        return float(e[0]), g[0]

    def energy_and_gradient_batch(self, xs, t: float = 0.0):
        """Fused evaluation; subclasses share element geometry across both."""
        return self.energy_batch(xs, t), self.gradient_batch(xs, t)

    def hessian(self, x, t: float = 0.0) -> sp.csr_matrix:
        raise NotImplementedError

    def element_stress(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Per-element PK2 Frobenius norms and reference weights."""
        x = check_positions(x, self.num_dofs, "x")
        return self.element_stress_batch(x[None, :])[0], self.element_weights()

    def element_stress_batch(self, xs) -> np.ndarray:
        raise NotImplementedError

    def element_weights(self) -> np.ndarray:
        raise NotImplementedError

    def mass_diagonal(self) -> np.ndarray:
        return self.rest.mass_diagonal

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.mesh.fingerprint(self.material).encode())
        h.update(json.dumps([a.to_dict() for a in self.attachments]).encode())
        return h.hexdigest()


class StvkSolidModel(EnergyModel):
    """Linear tetrahedra with a Saint Venant-Kirchhoff material."""

    kind = SOLID

    def __init__(self, mesh, material, rest=None, attachments=()):
        if mesh.kind != SOLID:
            raise ModalSubError("StvkSolidModel requires a solid mesh")
        super().__init__(mesh, material, rest, attachments)
        self.mu = material.lame_mu
        self.lam = material.lame_lambda
        self._scatter = _scatter_matrix(self.num_dofs, mesh.elements)

    def energy_batch(self, xs, t: float = 0.0) -> np.ndarray:
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        e = el.tet_energy(
            xs, self.mesh.elements, self.rest.tet_inverse_shape,
            self.rest.tet_volumes, self.mu, self.lam,
        )
        return e + self._attachment_energy(xs, t)

    def gradient_batch(self, xs, t: float = 0.0) -> np.ndarray:
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        contrib = el.tet_gradient(
            xs, self.mesh.elements, self.rest.tet_inverse_shape,
            self.rest.tet_volumes, self.mu, self.lam,
        )
        b = xs.shape[0]
        grad = (self._scatter @ contrib.reshape(b, -1).T).T
        grad = grad.reshape(b, self.mesh.num_vertices, 3)
        self._attachment_gradient(xs, t, grad)
        return grad.reshape(b, -1)

    def hessian(self, x, t: float = 0.0) -> sp.csr_matrix:
        x = check_positions(x, self.num_dofs, "x").reshape(-1, 3)
        blocks = el.tet_hessian_blocks(
            x, self.mesh.elements, self.rest.tet_inverse_shape,
            self.rest.tet_volumes, self.mu, self.lam,
        )
        h = _assemble_blocks(self.num_dofs, self.mesh.elements, blocks)
        h = h + self._attachment_hessian()
        return _exact_symmetrize(h)

    def energy_and_gradient_batch(self, xs, t: float = 0.0):
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        e, contrib = el.tet_energy_gradient(
            xs, self.mesh.elements, self.rest.tet_inverse_shape,
            self.rest.tet_volumes, self.mu, self.lam,
        )
        b = xs.shape[0]
        grad = (self._scatter @ contrib.reshape(b, -1).T).T
        grad = grad.reshape(b, self.mesh.num_vertices, 3)
        self._attachment_gradient(xs, t, grad)
        return e + self._attachment_energy(xs, t), grad.reshape(b, -1)

    def element_stress_batch(self, xs) -> np.ndarray:
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        return el.tet_stress_norms(
            xs, self.mesh.elements, self.rest.tet_inverse_shape, self.mu, self.lam
        )

    def element_weights(self) -> np.ndarray:
        return self.rest.tet_volumes

    def has_inverted_elements(self, x) -> bool:
        x = check_positions(x, self.num_dofs, "x").reshape(-1, 3)
        return bool(
            np.any(el.tet_inversion_flags(x, self.mesh.elements, self.rest.tet_inverse_shape))
        )


class DiscreteShellModel(EnergyModel):
    """Membrane StVK (plane stress) plus hinge-based bending."""

    kind = SHELL

    def __init__(self, mesh, material, rest=None, attachments=()):
        if mesh.kind != SHELL:
            raise ModalSubError("DiscreteShellModel requires a shell mesh")
        super().__init__(mesh, material, rest, attachments)
        self.mu = material.lame_mu
        self.lam = material.lame_lambda_plane_stress
        self.kappa = material.bending_constant
        self.thickness = material.thickness
        self._tri_scatter = _scatter_matrix(self.num_dofs, mesh.elements)
        self._has_hinges = self.rest.hinges is not None and len(self.rest.hinges) > 0
        if self._has_hinges:
            self._hinge_scatter = _scatter_matrix(self.num_dofs, self.rest.hinges)

    def energy_batch(self, xs, t: float = 0.0) -> np.ndarray:
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        e = el.membrane_energy(
            xs, self.mesh.elements, self.rest.tri_inverse_shape,
            self.rest.tri_areas, self.thickness, self.mu, self.lam,
        )
        if self._has_hinges:
            e = e + el.bending_energy(
                xs, self.rest.hinges, self.rest.hinge_rest_angles,
                self.rest.hinge_weights, self.kappa,
            )
        return e + self._attachment_energy(xs, t)

    def gradient_batch(self, xs, t: float = 0.0) -> np.ndarray:
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        b = xs.shape[0]
        contrib = el.membrane_gradient(
            xs, self.mesh.elements, self.rest.tri_inverse_shape,
            self.rest.tri_areas, self.thickness, self.mu, self.lam,
        )
        grad = (self._tri_scatter @ contrib.reshape(b, -1).T).T
        if self._has_hinges:
            bend = el.bending_gradient(
                xs, self.rest.hinges, self.rest.hinge_rest_angles,
                self.rest.hinge_weights, self.kappa,
            )
            grad = grad + (self._hinge_scatter @ bend.reshape(b, -1).T).T
        grad = grad.reshape(b, self.mesh.num_vertices, 3)
        self._attachment_gradient(xs, t, grad)
        return grad.reshape(b, -1)

    def hessian(self, x, t: float = 0.0) -> sp.csr_matrix:
        x = check_positions(x, self.num_dofs, "x").reshape(-1, 3)
        blocks = el.membrane_hessian_blocks(
            x, self.mesh.elements, self.rest.tri_inverse_shape,
            self.rest.tri_areas, self.thickness, self.mu, self.lam,
        )
        h = _assemble_blocks(self.num_dofs, self.mesh.elements, blocks)
        if self._has_hinges:
            bend = el.bending_hessian_blocks(
                x, self.rest.hinges, self.rest.hinge_rest_angles,
                self.rest.hinge_weights, self.kappa,
            )
            h = h + _assemble_blocks(self.num_dofs, self.rest.hinges, bend)
        h = h + self._attachment_hessian()
        return _exact_symmetrize(h)

    def energy_and_gradient_batch(self, xs, t: float = 0.0):
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        b = xs.shape[0]
        e, contrib = el.membrane_energy_gradient(
            xs, self.mesh.elements, self.rest.tri_inverse_shape,
            self.rest.tri_areas, self.thickness, self.mu, self.lam,
        )
        grad = (self._tri_scatter @ contrib.reshape(b, -1).T).T
        if self._has_hinges:
            be, bend = el.bending_energy_gradient(
                xs, self.rest.hinges, self.rest.hinge_rest_angles,
                self.rest.hinge_weights, self.kappa,
            )
            e = e + be
            grad = grad + (self._hinge_scatter @ bend.reshape(b, -1).T).T
        grad = grad.reshape(b, self.mesh.num_vertices, 3)
        self._attachment_gradient(xs, t, grad)
        return e + self._attachment_energy(xs, t), grad.reshape(b, -1)

    def element_stress_batch(self, xs) -> np.ndarray:
        xs = check_position_batch(xs, self.num_dofs, "x").reshape(-1, self.mesh.num_vertices, 3)
        return el.membrane_stress_norms(
            xs, self.mesh.elements, self.rest.tri_inverse_shape, self.mu, self.lam
        )

    def element_weights(self) -> np.ndarray:
        return self.rest.tri_areas


def _assemble_blocks(num_dofs, indices, blocks) -> sp.csr_matrix:
    ne, k = indices.shape
    dof = (3 * indices[:, :, None] + np.arange(3)).reshape(ne, 3 * k)
    rows = np.repeat(dof, 3 * k, axis=1).ravel()
    cols = np.tile(dof, (1, 3 * k)).ravel()
    return sp.coo_matrix(
        (blocks.ravel(), (rows, cols)), shape=(num_dofs, num_dofs)
    ).tocsr()


def _exact_symmetrize(h: sp.csr_matrix) -> sp.csr_matrix:
    """(H + H^T)/2; commutative addition makes the result exactly symmetric."""
    return (h + h.T).multiply(0.5).tocsr()


def build_energy_model(
    mesh: Mesh,
    material: MaterialParams,
    attachments: tuple = (),
    pin_stiffness: float = 1.0e6,
) -> EnergyModel:
    """Dispatch on mesh kind; mesh.pinned entries become static attachments."""
    attach = list(attachments)
    if mesh.pinned:
        for v in sorted(mesh.pinned):
            attach.append(
                Attachment(vertex=int(v), stiffness=pin_stiffness,
                           base=tuple(np.asarray(mesh.pinned[v], dtype=float)))
            )
    cls = StvkSolidModel if mesh.kind == SOLID else DiscreteShellModel
    return cls(mesh, material, attachments=tuple(attach))
