"""FD-check the self-supervised loss gradient; probe training progress."""
import time

import numpy as np

from modalsub import box_from_half_width, build_energy_model, linear_modes, make_rect_sheet
from modalsub.mesh import MaterialParams
from modalsub.network import mlp_init, pack_params, unpack_params
from modalsub.sampling import grid_coords, random_coords
from modalsub.subspace import _self_supervised_loss

rng = np.random.default_rng(3)

mesh = make_rect_sheet(3, 3)
em = build_energy_model(mesh, MaterialParams())
basis = linear_modes(em.hessian(mesh.rest_positions), 2)
box = box_from_half_width(2, 0.625)
widths = [2, 8, 8, em.num_dofs]
params = mlp_init(widths, seed=1)
# Perturb the zero final layer so the FD test exercises all paths.
w = list(params.weights)
b = list(params.biases)
w[-1] = 1e-3 * rng.standard_normal(w[-1].shape)
b[-1] = 1e-3 * rng.standard_normal(b[-1].shape)
from modalsub.network import MlpParams
params = MlpParams(weights=tuple(w), biases=tuple(b))
theta = pack_params(params)

zs = random_coords(box, 5, rng)
lam, eta = 1e2, 1e1  # small so energy term dominates comparably

f0, g0 = _self_supervised_loss(theta, widths, em, basis, box, zs, lam, eta,
                               mesh.rest_positions)
print("loss", f0, "gradnorm", np.linalg.norm(g0))

h = 1e-6
idx = rng.choice(theta.size, 60, replace=False)
errs = []
for i in idx:
    tp = theta.copy(); tp[i] += h
    tm = theta.copy(); tm[i] -= h
    fp, _ = _self_supervised_loss(tp, widths, em, basis, box, zs, lam, eta,
                                  mesh.rest_positions)
    fm, _ = _self_supervised_loss(tm, widths, em, basis, box, zs, lam, eta,
                                  mesh.rest_positions)
    fd = (fp - fm) / (2 * h)
    errs.append(abs(fd - g0[i]) / max(1.0, abs(g0[i])))
print("max loss-grad FD rel err", max(errs))

# also with the sheet values of lam/eta
f0, g0 = _self_supervised_loss(theta, widths, em, basis, box, zs, 1e8, 1e7,
                               mesh.rest_positions)
errs = []
for i in idx[:30]:
    tp = theta.copy(); tp[i] += h
    tm = theta.copy(); tm[i] -= h
    fp, _ = _self_supervised_loss(tp, widths, em, basis, box, zs, 1e8, 1e7,
                                  mesh.rest_positions)
    fm, _ = _self_supervised_loss(tm, widths, em, basis, box, zs, 1e8, 1e7,
                                  mesh.rest_positions)
    fd = (fp - fm) / (2 * h)
    errs.append(abs(fd - g0[i]) / max(1e-3, abs(g0[i])))
print("max loss-grad FD rel err (stiff)", max(errs))
