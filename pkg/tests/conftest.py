"""Shared fixtures: a small sheet problem, a tet bar, and a briefly
trained subspace model. Session scope keeps the expensive pieces single."""

import numpy as np
import pytest

from modalsub import (
    MaterialParams,
    Mesh,
    TrainConfig,
    box_from_half_width,
    build_energy_model,
    linear_modes,
    make_rect_sheet,
    train,
)
from modalsub.mesh import SOLID, tet_signed_volumes


def make_tet_bar(nx: int = 2, ny: int = 1, nz: int = 1,
                 cell: float = 0.5) -> Mesh:
    """Axis-aligned brick of cubes, each split into six tets."""
    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    verts = np.zeros(((nx + 1) * (ny + 1) * (nz + 1), 3))
    for i in range(nx + 1):
        for j in range(ny + 1):
            for k in range(nz + 1):
                verts[vid(i, j, k)] = (i * cell, j * cell, k * cell)

    # six tets around the main diagonal of each cube
    corner_tets = [
        (0, 1, 3, 7), (0, 3, 2, 7), (0, 2, 6, 7),
        (0, 6, 4, 7), (0, 4, 5, 7), (0, 5, 1, 7),
    ]
    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corners = [vid(i + a, j + b, k + c)
                           for a in (0, 1) for b in (0, 1) for c in (0, 1)]
                # corners order: (a,b,c) binary with c fastest; remap to the
                # v_xyz order used by corner_tets (x fastest)
                order = [0, 4, 2, 6, 1, 5, 3, 7]
                cs = [corners[order[m]] for m in range(8)]
                for t in corner_tets:
                    tets.append([cs[t[0]], cs[t[1]], cs[t[2]], cs[t[3]]])
    tets = np.asarray(tets, dtype=np.int64)
    vols = tet_signed_volumes(verts.ravel(), tets)
    flip = vols < 0
    tets[flip] = tets[flip][:, [0, 2, 1, 3]]
    mesh = Mesh(rest_positions=verts.ravel(), elements=tets, kind=SOLID)
    assert np.all(tet_signed_volumes(mesh.rest_positions, mesh.elements) > 0)
    return mesh


@pytest.fixture(scope="session")
def material():
    return MaterialParams()


@pytest.fixture(scope="session")
def sheet():
    return make_rect_sheet(4, 4)


@pytest.fixture(scope="session")
def sheet_energy(sheet, material):
    return build_energy_model(sheet, material)


@pytest.fixture(scope="session")
def sheet_basis(sheet_energy, sheet):
    return linear_modes(sheet_energy.hessian(sheet.rest_positions), 3)


@pytest.fixture(scope="session")
def box():
    return box_from_half_width(3, 0.625)


@pytest.fixture(scope="session")
def tet_bar():
    return make_tet_bar()


@pytest.fixture(scope="session")
def bar_energy(tet_bar, material):
    return build_energy_model(tet_bar, material)


@pytest.fixture(scope="session")
def tiny_model(sheet_energy, sheet_basis, box):
    cfg = TrainConfig(mode="grid", epochs=40, grid_resolution=3, seed=0)
    model, _ = train(sheet_energy, sheet_basis, box, cfg, hidden=(16, 16))
    return model
