"""Timing probe for the full-scale sheet benchmark pieces."""
import time

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
from modalsub.sampling import grid_coords, random_coords

mesh = make_rect_sheet(10, 10)
mat = MaterialParams()
em = build_energy_model(mesh, mat)
print("dofs", em.num_dofs)

t0 = time.perf_counter()
basis = linear_modes(em.hessian(mesh.rest_positions), 3)
print(f"modes: {time.perf_counter()-t0:.2f}s, eigenvalues {basis.eigenvalues}")

box = box_from_half_width(3, 0.625)

# Oracle timing: 10 random solves cold
rng = np.random.default_rng(0)
zs = random_coords(box, 10, rng)
t0 = time.perf_counter()
iters = []
for z in zs:
    s = oracle_solve(em, basis, z)
    iters.append(s.iterations)
dt = time.perf_counter() - t0
print(f"oracle: {dt/10*1000:.0f} ms/sample cold, iters {iters}")

# grid 5^3 warm-started probe
from modalsub.oracle import generate_oracle_dataset
t0 = time.perf_counter()
ds = generate_oracle_dataset(em, basis, {"kind": "grid", "resolution": 5}, box)
dt = time.perf_counter() - t0
print(f"grid 5^3: {dt:.1f}s total, {dt/125*1000:.0f} ms/sample, "
      f"{int(ds.converged.sum())}/125 converged")

# training epoch timing at full scale (9^3 grid, 5x64)
cfg = TrainConfig(mode="grid", epochs=30, grid_resolution=9, seed=0)
t0 = time.perf_counter()
model, hist = train(em, basis, box, cfg)
dt = time.perf_counter() - t0
print(f"train 30 epochs grid 9^3: {dt:.1f}s -> {dt/30*1000:.0f} ms/epoch")
print("loss first/last", hist.rows[0]["loss"], hist.rows[-1]["loss"])
print("mean energy first/last", hist.rows[0]["mean_energy"], hist.rows[-1]["mean_energy"])
