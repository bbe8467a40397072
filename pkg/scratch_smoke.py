import numpy as np

from modalsub import (
    TrainConfig,
    box_from_half_width,
    build_energy_model,
    linear_modes,
    make_rect_sheet,
    oracle_solve,
    train,
)
from modalsub.mesh import MaterialParams

rng = np.random.default_rng(0)

mesh = make_rect_sheet(4, 4)
mat = MaterialParams()
em = build_energy_model(mesh, mat)
n = em.num_dofs
print("dofs", n, "kind", mesh.kind)

x0 = mesh.rest_positions + 0.05 * rng.standard_normal(n)
e = em.energy(x0)
g = em.gradient(x0)
print("energy", e, "gradnorm", np.linalg.norm(g))

# FD gradient check
h = 1e-6 * mesh.scale()
idx = rng.choice(n, 20, replace=False)
errs = []
for i in idx:
    xp = x0.copy(); xp[i] += h
    xm = x0.copy(); xm[i] -= h
    fd = (em.energy(xp) - em.energy(xm)) / (2 * h)
    errs.append(abs(fd - g[i]) / max(1.0, abs(g[i])))
print("max grad FD rel err", max(errs))

# FD hessian-vec check
H = em.hessian(x0)
v = rng.standard_normal(n)
v /= np.linalg.norm(v)
hv_fd = (em.gradient(x0 + h * v) - em.gradient(x0 - h * v)) / (2 * h)
hv = H @ v
print("hessvec FD rel err", np.linalg.norm(hv_fd - hv) / max(1.0, np.linalg.norm(hv)))

# modes
basis = linear_modes(em.hessian(mesh.rest_positions), 3)
print("modes", basis.modes.shape, "filtered rigid", basis.num_filtered_rigid)
print("eigenvalues", basis.eigenvalues)
print("ortho err", np.max(np.abs(basis.modes.T @ basis.modes - np.eye(3))))

box = box_from_half_width(3, 0.625)

# oracle at one z
z = rng.uniform(-0.5, 0.5, 3)
s = oracle_solve(em, basis, z)
print("oracle converged", s.converged, "iters", s.iterations, "e*", s.e_star)
print("constraint residual", np.max(np.abs(basis.project(s.x_star - mesh.rest_positions) - z)))

# tiny train
cfg = TrainConfig(mode="grid", epochs=20, grid_resolution=3, seed=0)
model, hist = train(em, basis, box, cfg, hidden=(16, 16))
print("train rows", len(hist.rows), "final loss", hist.rows[-1]["loss"],
      "first loss", hist.rows[0]["loss"], "aborted", hist.aborted)

# dynamics
from modalsub import make_initial_state, step

st = make_initial_state(model, h=0.04, z0=np.array([0.3, 0.0, 0.0]))
st2, info = step(st, model, em)
print("step converged", info.converged, "iters", info.iterations, "energy", info.energy)

# keyframes
from modalsub import sample_keyframe_path

keys = [(0.0, np.zeros(3)), (1.0, np.array([0.5, -0.3, 0.2]))]
ts, zs, pos, es = sample_keyframe_path(model, em, keys, num_samples=5)
print("keyframe energies", es)
print("SMOKE OK")
