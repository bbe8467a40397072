"""Variational implicit-Euler time stepping in the learned subspace.

Each step minimizes I(q) = (1/2h^2) |u(q) - 2 u_n + u_prev|_M^2 + E(x(q))
over the reduced coordinates q = (z) or (z, axis-angle, translation). The
inertia history u_n, u_prev is kept in full space so the metric term is
exact; the elastic term only sees the unrotated decoded shape because the
energy is rigid-invariant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModalSubError
from .lbfgs import LbfgsOptions, lbfgs_minimize
from .subspace import SubspaceModel

RIGID_FD_STEP = 1.0e-6


def rodrigues(w: np.ndarray) -> np.ndarray:
    """Rotation matrix from an axis-angle triple."""
    theta = float(np.linalg.norm(w))
    if theta < 1.0e-12:
        k = np.array([
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ])
        return np.eye(3) + k  # first-order term keeps FD through zero smooth
    axis = w / theta
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


@dataclass(frozen=True)
class DynamicsState:
    """Reduced state plus the full-space displacement history."""

    u: np.ndarray  # current displacement (3n,)
    u_prev: np.ndarray  # previous displacement (3n,)
    z: np.ndarray  # (m,)
    rigid: np.ndarray | None  # (6,) axis-angle + translation, or None
    h: float  # step size (s)
    t: float = 0.0

    def __post_init__(self):
        if self.h <= 0:
            raise ModalSubError("step size h must be positive")


@dataclass(frozen=True)
class StepInfo:
    iterations: int
    converged: bool
    grad_norm: float
    energy: float
    wall_time: float


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    zs: list = field(default_factory=list)
    rigids: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    converged: list = field(default_factory=list)
    displacements: list = field(default_factory=list)

    def append(self, state: DynamicsState, info: StepInfo | None,
               keep_frame: bool) -> None:
        self.times.append(state.t)
        self.zs.append(np.array(state.z))
        self.rigids.append(
            np.array(state.rigid) if state.rigid is not None else np.zeros(6)
        )
        self.energies.append(info.energy if info else None)
        self.wall_times.append(info.wall_time if info else 0.0)
        self.iterations.append(info.iterations if info else 0)
        self.converged.append(info.converged if info else True)
        if keep_frame:
            self.displacements.append(np.array(state.u))

    def write_csv(self, path) -> None:
        m = len(self.zs[0]) if self.zs else 0
        cols = (["t"] + [f"z{i}" for i in range(m)]
                + [f"rigid{i}" for i in range(6)]
                + ["energy", "wall_time", "iterations", "converged"])
        lines = [",".join(cols)]
        for k in range(len(self.times)):
            vals = [repr(float(self.times[k]))]
            vals += [repr(float(v)) for v in self.zs[k]]
            vals += [repr(float(v)) for v in self.rigids[k]]
            e = self.energies[k]
            vals.append("" if e is None else repr(float(e)))
            vals.append(repr(float(self.wall_times[k])))
            vals.append(str(int(self.iterations[k])))
            vals.append(str(bool(self.converged[k])))
            lines.append(",".join(vals))
        Path(path).write_text("\n".join(lines) + "\n")

    def save_frames(self, path, rest_positions: np.ndarray) -> None:
        """Per-frame vertex positions for viewers and offline comparison."""
        if not self.displacements:
            raise ModalSubError("trajectory was recorded without frames")
        frames = rest_positions + np.stack(self.displacements)
        np.savez_compressed(path, times=np.asarray(self.times), positions=frames)


def make_initial_state(
    model: SubspaceModel, h: float, z0=None, include_rigid: bool = False
) -> DynamicsState:
    """State at rest in the subspace shape z0 with zero velocity."""
    m = model.num_modes
    z = np.zeros(m) if z0 is None else np.asarray(z0, dtype=np.float64)
    u = model.displacement(z)
    rigid = np.zeros(6) if include_rigid else None
    return DynamicsState(u=u, u_prev=u.copy(), z=z, rigid=rigid, h=h, t=0.0)


def _compose_rigid(rest, d, w, c):
    """x = R(w) (X + d) + c as flat coordinates."""
    r = rodrigues(w)
    xd = (rest + d).reshape(-1, 3)
    return (xd @ r.T + c).ravel()


def step(
    state: DynamicsState,
    model: SubspaceModel,
    energy_model,
    max_iter: int = 50,
    tol_factor: float = 1.0e-6,
) -> tuple[DynamicsState, StepInfo]:
    """Advance one implicit-Euler step by reduced minimization."""
    if model.fingerprint and energy_model.fingerprint() != model.fingerprint:
        raise ModalSubError("subspace model and energy model fingerprints differ")
    rest = energy_model.mesh.rest_positions
    mass = energy_model.mass_diagonal()
    h = state.h
    t_next = state.t + h
    b = 2.0 * state.u - state.u_prev
    m = model.num_modes
    with_rigid = state.rigid is not None
    inv_h2 = 1.0 / (h * h)

    def unpack(q):
        if with_rigid:
            return q[:m], q[m:m + 3], q[m + 3:]
        return q, None, None

    def inertia(u):
        r = u - b
        return 0.5 * inv_h2 * float(r @ (mass * r))

    def fun_grad(q):
        z, w, c = unpack(q)
        d = model.displacement(z)
        if with_rigid:
            u = _compose_rigid(rest, d, w, c) - rest
        else:
            u = d
        r = mass * (u - b) * inv_h2
        e, cot = energy_model.energy_and_gradient(rest + d, t_next)
        val = inertia(u) + e
        if with_rigid:
            rot = rodrigues(w)
            cot = cot + (r.reshape(-1, 3) @ rot).ravel()
        else:
            cot = cot + r
        gz = model.displacement_vjp(z, cot)
        if not with_rigid:
            return val, gz
        grigid = np.empty(6)
        for k in range(6):
            dq = np.zeros(6)
            dq[k] = RIGID_FD_STEP
            up = _compose_rigid(rest, d, w + dq[:3], c + dq[3:]) - rest
            um = _compose_rigid(rest, d, w - dq[:3], c - dq[3:]) - rest
            grigid[k] = (inertia(up) - inertia(um)) / (2.0 * RIGID_FD_STEP)
        return val, np.concatenate([gz, grigid])

    q0 = np.concatenate([state.z, state.rigid]) if with_rigid else np.array(state.z)
    mass_scale = float(mass.sum()) * max(energy_model.mesh.scale(), 1.0)
    tol = tol_factor * inv_h2 * mass_scale
    t0 = time.perf_counter()
    res = lbfgs_minimize(fun_grad, q0, LbfgsOptions(grad_tol=tol, max_iter=max_iter))
    wall = time.perf_counter() - t0
    z_new, w_new, c_new = unpack(res.x)
    d_new = model.displacement(z_new)
    if with_rigid:
        u_new = _compose_rigid(rest, d_new, w_new, c_new) - rest
        rigid_new = np.concatenate([w_new, c_new])
    else:
        u_new = d_new
        rigid_new = None
    e_new = energy_model.energy(rest + d_new, t_next)
    new_state = DynamicsState(
        u=u_new, u_prev=state.u, z=z_new, rigid=rigid_new, h=h, t=t_next
    )
    info = StepInfo(
        iterations=res.iterations,
        converged=res.converged,
        grad_norm=res.grad_norm,
        energy=float(e_new),
        wall_time=wall,
    )
    return new_state, info


def kinetic_energy(state: DynamicsState, mass_diagonal: np.ndarray) -> float:
    """Discrete kinetic energy from the backward-difference velocity."""
    v = (state.u - state.u_prev) / state.h
    return 0.5 * float(v @ (mass_diagonal * v))


def simulate(
    model: SubspaceModel,
    energy_model,
    num_steps: int,
    h: float,
    z0=None,
    include_rigid: bool = False,
    keep_frames: bool = False,
    max_iter: int = 50,
    tol_factor: float = 1.0e-6,
) -> Trajectory:
    """Run num_steps implicit-Euler steps; failures are recorded, not fatal."""
    state = make_initial_state(model, h, z0=z0, include_rigid=include_rigid)
    traj = Trajectory()
    traj.append(state, None, keep_frames)
    for _ in range(num_steps):
        state, info = step(state, model, energy_model,
                           max_iter=max_iter, tol_factor=tol_factor)
        traj.append(state, info, keep_frames)
    return traj


def interpolate_keyframes(keys, t) -> np.ndarray:
    """Piecewise-linear modal coordinates, clamped outside [t_0, t_K].

    keys: sequence of (t_k, z_k) sorted strictly ascending in time.
    """
    if len(keys) < 1:
        raise ModalSubError("need at least one keyframe")
    times = np.array([float(k[0]) for k in keys])
    zs = np.stack([np.asarray(k[1], dtype=np.float64) for k in keys])
    if np.any(np.diff(times) <= 0):
        raise ModalSubError("keyframe times must be strictly increasing")
    t = float(t)
    if t <= times[0]:
        return zs[0].copy()
    if t >= times[-1]:
        return zs[-1].copy()
    k = int(np.searchsorted(times, t, side="right")) - 1
    s = (t - times[k]) / (times[k + 1] - times[k])
    return (1.0 - s) * zs[k] + s * zs[k + 1]


def sample_keyframe_path(model: SubspaceModel, energy_model, keys,
                         num_samples: int = 60):
    """Uniform time samples of the interpolated path, decoded and scored.

    Returns (times, zs, positions, energies).
    """
    if num_samples < 2:
        raise ModalSubError("num_samples must be >= 2")
    times_k = [float(k[0]) for k in keys]
    ts = np.linspace(min(times_k), max(times_k), num_samples)
    zs = np.stack([interpolate_keyframes(keys, t) for t in ts])
    positions = model.decode(zs)
    energies = energy_model.energy_batch(positions)
    return ts, zs, positions, energies
