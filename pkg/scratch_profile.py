import cProfile
import pstats
import time

import numpy as np

from modalsub import box_from_half_width, build_energy_model, linear_modes, make_rect_sheet
from modalsub.mesh import MaterialParams
from modalsub.network import mlp_init, pack_params
from modalsub.sampling import grid_coords
from modalsub.subspace import _self_supervised_loss

mesh = make_rect_sheet(10, 10)
em = build_energy_model(mesh, MaterialParams())
basis = linear_modes(em.hessian(mesh.rest_positions), 3)
box = box_from_half_width(3, 0.625)
zs = grid_coords(box, 9)
widths = [3, 64, 64, 64, 64, 64, 363]
theta = pack_params(mlp_init(widths, seed=0))

t0 = time.perf_counter()
for _ in range(3):
    f, g = _self_supervised_loss(theta, widths, em, basis, box, zs, 1e8, 1e7,
                                 mesh.rest_positions)
print(f"{(time.perf_counter()-t0)/3*1000:.0f} ms/eval")

pr = cProfile.Profile()
pr.enable()
for _ in range(3):
    _self_supervised_loss(theta, widths, em, basis, box, zs, 1e8, 1e7,
                          mesh.rest_positions)
pr.disable()
stats = pstats.Stats(pr)
stats.sort_stats("cumulative").print_stats(18)
