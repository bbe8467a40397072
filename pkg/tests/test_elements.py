"""Element kernels against closed forms and finite differences.

The FD oracles here are independent of the analytic code paths: every
gradient is checked against central differences of the matching energy,
and every Hessian against differences of the gradient. The reference
shapes are deliberately skewed so transposition errors cannot cancel.
"""

import numpy as np
import pytest

from modalsub.elements import (
    _cross,
    bending_energy,
    bending_energy_gradient,
    bending_gradient,
    bending_hessian_blocks,
    green_strain,
    hinge_angle_gradients,
    hinge_angle_hessians,
    hinge_angles,
    membrane_deformation_gradients,
    membrane_energy,
    membrane_energy_gradient,
    membrane_gradient,
    membrane_hessian_blocks,
    membrane_stress_norms,
    pk2_stress,
    strain_energy_density,
    tet_energy,
    tet_energy_gradient,
    tet_gradient,
    tet_hessian_blocks,
    tet_inversion_flags,
    tet_stress_norms,
)

from _fd import fd_gradient, rel_error

MU = 1.0
LAM = 1.0


def skewed_tet():
    """One tet with an asymmetric rest shape (Dm far from symmetric)."""
    rest = np.array([
        [0.05, -0.02, 0.01],
        [1.1, 0.2, 0.0],
        [0.3, 0.9, -0.1],
        [0.1, 0.2, 1.2],
    ])
    elements = np.array([[0, 1, 2, 3]])
    a = rest[0]
    dm = np.stack([rest[k] - a for k in (1, 2, 3)], axis=1)
    inv = np.linalg.inv(dm)[None]
    vols = np.array([abs(np.linalg.det(dm)) / 6.0])
    return rest, elements, inv, vols


def skewed_triangle():
    """One triangle with an asymmetric in-plane rest matrix."""
    rest = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.2, 0.9, 0.0],
    ])
    elements = np.array([[0, 1, 2]])
    dm = np.array([[1.0, 0.2], [0.0, 0.9]])
    inv = np.linalg.inv(dm)[None]
    areas = np.array([0.5 * abs(np.linalg.det(dm))])
    return rest, elements, inv, areas


def bent_hinge(angle=0.7):
    """Two triangles sharing edge (0, 1), folded by the given dihedral."""
    x0 = np.array([0.0, 0.0, 0.0])
    x1 = np.array([1.1, 0.1, 0.0])
    x2 = np.array([0.4, 0.8, 0.0])
    e0 = x1 - x0
    e0 /= np.linalg.norm(e0)
    flat = np.array([0.5, -0.7, 0.0])
    # rotate the opposite vertex of triangle B about the shared edge
    c, s = np.cos(angle), np.sin(angle)
    axis = e0
    k = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    r = np.eye(3) + s * k + (1 - c) * (k @ k)
    x3 = x0 + r @ (flat - x0)
    positions = np.stack([x0, x1, x2, x3])
    hinges = np.array([[0, 1, 2, 3]])
    return positions, hinges


class TestStrainAlgebra:
    def test_cross_matches_numpy(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 7, 3))
        b = rng.standard_normal((4, 7, 3))
        assert np.allclose(_cross(a, b), np.cross(a, b), atol=1e-15)

    def test_uniform_stretch_closed_form(self):
        f = 1.1 * np.eye(3)
        e = green_strain(f)
        assert np.allclose(e, 0.105 * np.eye(3), atol=1e-15)
        s = pk2_stress(e, MU, LAM)
        assert np.allclose(s, 0.525 * np.eye(3), atol=1e-14)
        psi = strain_energy_density(e, MU, LAM)
        assert psi == pytest.approx(0.0826875, abs=1e-15)

    def test_rest_state_is_stress_free(self):
        e = green_strain(np.eye(3))
        assert np.all(e == 0.0)
        assert strain_energy_density(e, MU, LAM) == 0.0


class TestTetKernels:
    def test_energy_closed_form_uniform_stretch(self):
        rest, elements, inv, vols = skewed_tet()
        e = tet_energy(1.1 * rest, elements, inv, vols, MU, LAM)
        assert e == pytest.approx(0.0826875 * vols[0], rel=1e-12)

    def test_stress_norm_closed_form(self):
        rest, elements, inv, _ = skewed_tet()
        s = tet_stress_norms(1.1 * rest, elements, inv, MU, LAM)
        assert s[0] == pytest.approx(0.525 * np.sqrt(3.0), rel=1e-12)

    def test_gradient_matches_fd(self):
        rest, elements, inv, vols = skewed_tet()
        rng = np.random.default_rng(0)
        x = rest + 0.05 * rng.standard_normal(rest.shape)

        def fun(flat):
            return tet_energy(flat.reshape(-1, 3), elements, inv, vols, MU, LAM)

        analytic = np.zeros_like(x)
        np.add.at(analytic, elements.ravel(),
                  tet_gradient(x, elements, inv, vols, MU, LAM).reshape(-1, 3))
        assert rel_error(analytic.ravel(), fd_gradient(fun, x.ravel())) < 1e-7

    def test_hessian_matches_fd(self):
        rest, elements, inv, vols = skewed_tet()
        rng = np.random.default_rng(1)
        x = rest + 0.05 * rng.standard_normal(rest.shape)

        def grad(flat):
            g = np.zeros((4, 3))
            np.add.at(g, elements.ravel(),
                      tet_gradient(flat.reshape(-1, 3), elements, inv, vols,
                                   MU, LAM).reshape(-1, 3))
            return g.ravel()

        h = tet_hessian_blocks(x, elements, inv, vols, MU, LAM)[0]
        assert np.allclose(h, h.T, atol=1e-12)
        fd = np.stack([fd_gradient(lambda f, i=i: grad(f)[i], x.ravel())
                       for i in range(12)])
        assert rel_error(h, fd.T) < 1e-6

    def test_fused_matches_separate(self):
        rest, elements, inv, vols = skewed_tet()
        rng = np.random.default_rng(2)
        x = rest + 0.05 * rng.standard_normal(rest.shape)
        e, contrib = tet_energy_gradient(x, elements, inv, vols, MU, LAM)
        assert e == pytest.approx(tet_energy(x, elements, inv, vols, MU, LAM))
        assert np.array_equal(contrib,
                              tet_gradient(x, elements, inv, vols, MU, LAM))

    def test_inversion_flags(self):
        rest, elements, inv, _ = skewed_tet()
        assert not tet_inversion_flags(rest, elements, inv)[0]
        mirrored = rest.copy()
        mirrored[:, 0] *= -1.0
        assert tet_inversion_flags(mirrored, elements, inv)[0]

    def test_rigid_motion_invariance(self):
        rest, elements, inv, vols = skewed_tet()
        rng = np.random.default_rng(4)
        x = rest + 0.05 * rng.standard_normal(rest.shape)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        moved = x @ q.T + np.array([0.3, -0.2, 0.9])
        e0 = tet_energy(x, elements, inv, vols, MU, LAM)
        e1 = tet_energy(moved, elements, inv, vols, MU, LAM)
        assert e1 == pytest.approx(e0, rel=1e-12)


class TestMembraneKernels:
    def test_energy_closed_form_uniform_stretch(self):
        rest, elements, inv, areas = skewed_triangle()
        thickness = 0.02
        lam_ps = 2.0 / 3.0  # plane-stress value for nu = 0.25
        e = membrane_energy(1.1 * rest, elements, inv, areas, thickness,
                            MU, lam_ps)
        tr = 0.21
        psi = 2 * MU * 0.105**2 + 0.5 * lam_ps * tr**2
        assert e == pytest.approx(psi * areas[0] * thickness, rel=1e-12)

    def test_stress_norm_closed_form(self):
        rest, elements, inv, _ = skewed_triangle()
        s = membrane_stress_norms(1.1 * rest, elements, inv, MU, 2.0 / 3.0)
        expect = (2 * MU * 0.105 + (2.0 / 3.0) * 0.21) * np.sqrt(2.0)
        assert s[0] == pytest.approx(expect, rel=1e-12)

    def test_deformation_gradient_isometry_at_rest(self):
        rest, elements, inv, _ = skewed_triangle()
        f = membrane_deformation_gradients(rest, elements, inv)
        assert np.allclose(np.swapaxes(f, -1, -2) @ f, np.eye(2), atol=1e-14)

    def test_gradient_matches_fd(self):
        rest, elements, inv, areas = skewed_triangle()
        rng = np.random.default_rng(5)
        x = rest + 0.05 * rng.standard_normal(rest.shape)

        def fun(flat):
            return membrane_energy(flat.reshape(-1, 3), elements, inv, areas,
                                   0.02, MU, LAM)

        analytic = np.zeros_like(x)
        np.add.at(analytic, elements.ravel(),
                  membrane_gradient(x, elements, inv, areas, 0.02, MU,
                                    LAM).reshape(-1, 3))
        assert rel_error(analytic.ravel(), fd_gradient(fun, x.ravel())) < 1e-7

    def test_hessian_matches_fd(self):
        rest, elements, inv, areas = skewed_triangle()
        rng = np.random.default_rng(6)
        x = rest + 0.05 * rng.standard_normal(rest.shape)

        def grad(flat):
            g = np.zeros((3, 3))
            np.add.at(g, elements.ravel(),
                      membrane_gradient(flat.reshape(-1, 3), elements, inv,
                                        areas, 0.02, MU, LAM).reshape(-1, 3))
            return g.ravel()

        h = membrane_hessian_blocks(x, elements, inv, areas, 0.02, MU, LAM)[0]
        fd = np.stack([fd_gradient(lambda f, i=i: grad(f)[i], x.ravel())
                       for i in range(9)])
        assert rel_error(h, fd.T) < 1e-6

    def test_fused_matches_separate(self):
        rest, elements, inv, areas = skewed_triangle()
        rng = np.random.default_rng(7)
        x = rest + 0.05 * rng.standard_normal(rest.shape)
        e, contrib = membrane_energy_gradient(x, elements, inv, areas, 0.02,
                                              MU, LAM)
        assert e == pytest.approx(
            membrane_energy(x, elements, inv, areas, 0.02, MU, LAM))
        assert np.array_equal(
            contrib, membrane_gradient(x, elements, inv, areas, 0.02, MU, LAM))


class TestHingeKernels:
    def test_flat_angle_is_zero(self):
        positions, hinges = bent_hinge(0.0)
        assert hinge_angles(positions, hinges)[0] == pytest.approx(0.0, abs=1e-14)

    @pytest.mark.parametrize("angle", [0.7, -0.7, 1.4, -2.0])
    def test_fold_angle_recovered(self, angle):
        positions, hinges = bent_hinge(angle)
        assert hinge_angles(positions, hinges)[0] == pytest.approx(angle, abs=1e-12)

    def test_angle_gradient_matches_fd(self):
        positions, hinges = bent_hinge(0.9)

        def fun(flat):
            return hinge_angles(flat.reshape(-1, 3), hinges)[0]

        analytic = hinge_angle_gradients(positions, hinges).ravel()
        assert rel_error(analytic, fd_gradient(fun, positions.ravel())) < 1e-7

    def test_angle_hessian_matches_fd(self):
        positions, hinges = bent_hinge(-1.2)

        def grad(flat):
            return hinge_angle_gradients(flat.reshape(-1, 3), hinges).ravel()

        h = hinge_angle_hessians(positions, hinges)[0]
        assert np.allclose(h, h.T, atol=1e-12)
        fd = np.stack([fd_gradient(lambda f, i=i: grad(f)[i],
                                   positions.ravel())
                       for i in range(12)])
        assert rel_error(h, fd.T) < 1e-6

    def test_bending_energy_and_gradient(self):
        positions, hinges = bent_hinge(0.8)
        rest_angles = np.array([0.1])
        weights = np.array([1.7])
        kappa = 2.5
        theta = hinge_angles(positions, hinges)[0]
        e = bending_energy(positions, hinges, rest_angles, weights, kappa)
        assert e == pytest.approx(kappa * 1.7 * (theta - 0.1) ** 2, rel=1e-12)

        def fun(flat):
            return bending_energy(flat.reshape(-1, 3), hinges, rest_angles,
                                  weights, kappa)

        analytic = bending_gradient(positions, hinges, rest_angles, weights,
                                    kappa).ravel()
        assert rel_error(analytic, fd_gradient(fun, positions.ravel())) < 1e-7

    def test_bending_hessian_matches_fd(self):
        positions, hinges = bent_hinge(0.8)
        rest_angles = np.array([0.1])
        weights = np.array([1.7])
        kappa = 2.5

        def grad(flat):
            return bending_gradient(flat.reshape(-1, 3), hinges, rest_angles,
                                    weights, kappa).ravel()

        h = bending_hessian_blocks(positions, hinges, rest_angles, weights,
                                   kappa)[0]
        fd = np.stack([fd_gradient(lambda f, i=i: grad(f)[i],
                                   positions.ravel())
                       for i in range(12)])
        assert rel_error(h, fd.T) < 1e-6

    def test_fused_matches_separate(self):
        positions, hinges = bent_hinge(0.8)
        rest_angles = np.array([0.1])
        weights = np.array([1.7])
        e, contrib = bending_energy_gradient(positions, hinges, rest_angles,
                                             weights, 2.5)
        assert e == pytest.approx(
            bending_energy(positions, hinges, rest_angles, weights, 2.5))
        assert np.allclose(
            contrib,
            bending_gradient(positions, hinges, rest_angles, weights, 2.5),
            atol=1e-15)


class TestBatchConsistency:
    def test_tet_batch_matches_single(self):
        rest, elements, inv, vols = skewed_tet()
        rng = np.random.default_rng(8)
        xs = rest + 0.05 * rng.standard_normal((6, *rest.shape))
        batch_e = tet_energy(xs, elements, inv, vols, MU, LAM)
        batch_g = tet_gradient(xs, elements, inv, vols, MU, LAM)
        for b in range(6):
            assert batch_e[b] == pytest.approx(
                tet_energy(xs[b], elements, inv, vols, MU, LAM))
            assert np.allclose(
                batch_g[b], tet_gradient(xs[b], elements, inv, vols, MU, LAM))

    def test_hinge_batch_matches_single(self):
        positions, hinges = bent_hinge(0.5)
        rng = np.random.default_rng(9)
        xs = positions + 0.05 * rng.standard_normal((4, *positions.shape))
        batch = hinge_angles(xs, hinges)
        for b in range(4):
            assert batch[b] == pytest.approx(hinge_angles(xs[b], hinges)[0])
