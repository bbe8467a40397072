"""Vectorized per-element kernels for the elastic energy models.

All functions take vertex positions as (..., n, 3) arrays with an optional
leading batch axis and return per-element quantities. Gradients and Hessians
are exact analytic derivatives; tests check them against finite differences.

Strain measure is the Green strain E = (F^T F - I)/2 with the energy density
mu*||E||_F^2 + (lam/2)*tr(E)^2 and second Piola-Kirchhoff stress
S = 2*mu*E + lam*tr(E)*I. Hinge bending is kappa*(theta - theta_rest)^2 * w
with a rest-geometry weight w.
"""

from __future__ import annotations

import numpy as np


def _dots(a, b):
    return np.einsum("...i,...i->...", a, b)


def _norms(a):
    return np.sqrt(_dots(a, a))


def _cross(a, b):
    """Cross product over the last axis; faster than np.cross on batches."""
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


# ---------------------------------------------------------------------------
# StVK solid tetrahedra


def tet_deformation_gradients(x, elements, inv_shape):
    """F = Ds @ Bm per tet; x is (..., n, 3), result (..., ne, 3, 3)."""
    a = x[..., elements[:, 0], :]
    ds = np.stack([x[..., elements[:, k], :] - a for k in (1, 2, 3)], axis=-1)
    return ds @ inv_shape


def green_strain(f):
    """E = (F^T F - I)/2 for (..., 3, 3) or (..., 3, 2) deformation gradients."""
    k = f.shape[-1]
    return 0.5 * (np.swapaxes(f, -1, -2) @ f - np.eye(k))


def pk2_stress(e_green, mu, lam):
    """S = 2*mu*E + lam*tr(E)*I."""
    k = e_green.shape[-1]
    tr = np.trace(e_green, axis1=-2, axis2=-1)
    return 2.0 * mu * e_green + lam * tr[..., None, None] * np.eye(k)


def strain_energy_density(e_green, mu, lam):
    tr = np.trace(e_green, axis1=-2, axis2=-1)
    sq = np.einsum("...ij,...ij->...", e_green, e_green)
    return mu * sq + 0.5 * lam * tr**2


def tet_energy(x, elements, inv_shape, volumes, mu, lam):
    f = tet_deformation_gradients(x, elements, inv_shape)
    psi = strain_energy_density(green_strain(f), mu, lam)
    return np.sum(volumes * psi, axis=-1)


def tet_energy_gradient(x, elements, inv_shape, volumes, mu, lam):
    """(energy, per-vertex contributions); shares F across both."""
    f = tet_deformation_gradients(x, elements, inv_shape)
    e_green = green_strain(f)
    s = pk2_stress(e_green, mu, lam)
    energy = np.sum(volumes * strain_energy_density(e_green, mu, lam), axis=-1)
    g = _shape_gradients(inv_shape)
    contrib = volumes[..., None, None] * np.einsum("...eab,ejb->...eja", f @ s, g)
    return energy, contrib


def _shape_gradients(inv_shape):
    """Rows g_j with dPsi/d(vertex j) = P g_j; g_0 = -sum(others).

    With F = Ds Bm, the gradient w.r.t. edge vector j is column j of
    P Bm^T, i.e. P times row j of Bm.
    """
    g0 = -np.sum(inv_shape, axis=-2, keepdims=True)
    return np.concatenate([g0, inv_shape], axis=-2)  # (..., ne, nv, k)


def tet_gradient(x, elements, inv_shape, volumes, mu, lam):
    """Per-tet, per-vertex energy gradient contributions (..., ne, 4, 3)."""
    f = tet_deformation_gradients(x, elements, inv_shape)
    s = pk2_stress(green_strain(f), mu, lam)
    p = f @ s
    g = _shape_gradients(inv_shape)  # (ne, 4, 3)
    return volumes[..., None, None] * np.einsum("...eab,ejb->...eja", p, g)


def _stvk_hessian_blocks(f, s, g, weight, mu, lam):
    """Element Hessians for StVK membranes/solids.

    f: (ne, 3, k) deformation gradients; s: (ne, k, k) PK2 stress;
    g: (ne, nv, k) shape gradients; weight: (ne,) volume or area*thickness.
    Returns (ne, 3*nv, 3*nv) blocks.
    """
    ne, nv = g.shape[0], g.shape[1]
    eye3 = np.eye(3)
    fg = np.einsum("eak,ejk->eja", f, g)  # (ne, nv, 3): F g_j
    gsg = np.einsum("ejk,ekl,eml->ejm", g, s, g)  # g_j^T S g_m
    gg = np.einsum("ejk,emk->ejm", g, g)
    c = f @ np.swapaxes(f, -1, -2)  # (ne, 3, 3)
    # Assemble blocks H[j, i, m, k]:
    blocks = np.zeros((ne, nv, 3, nv, 3))
    blocks += np.einsum("ejm,ik->ejimk", gsg, eye3)
    blocks += mu * np.einsum("emi,ejk->ejimk", fg, fg)
    blocks += mu * np.einsum("ejm,eik->ejimk", gg, c)
    blocks += lam * np.einsum("eji,emk->ejimk", fg, fg)
    blocks *= weight[:, None, None, None, None]
    return blocks.reshape(ne, 3 * nv, 3 * nv)


def tet_hessian_blocks(x, elements, inv_shape, volumes, mu, lam):
    f = tet_deformation_gradients(x, elements, inv_shape)
    s = pk2_stress(green_strain(f), mu, lam)
    g = _shape_gradients(inv_shape)
    return _stvk_hessian_blocks(f, s, g, volumes, mu, lam)


def tet_stress_norms(x, elements, inv_shape, mu, lam):
    f = tet_deformation_gradients(x, elements, inv_shape)
    s = pk2_stress(green_strain(f), mu, lam)
    return np.sqrt(np.einsum("...ij,...ij->...", s, s))


def tet_inversion_flags(x, elements, inv_shape):
    f = tet_deformation_gradients(x, elements, inv_shape)
    return np.linalg.det(f) <= 0


# ---------------------------------------------------------------------------
# Shell membrane (constant-strain triangles, plane-stress StVK)


def membrane_deformation_gradients(x, elements, inv_shape):
    """F = Ds @ Bm with Ds the (3, 2) deformed edge matrix; result (..., ne, 3, 2)."""
    a = x[..., elements[:, 0], :]
    ds = np.stack([x[..., elements[:, k], :] - a for k in (1, 2)], axis=-1)
    return ds @ inv_shape


def membrane_energy(x, elements, inv_shape, areas, thickness, mu, lam):
    f = membrane_deformation_gradients(x, elements, inv_shape)
    psi = strain_energy_density(green_strain(f), mu, lam)
    return thickness * np.sum(areas * psi, axis=-1)


def membrane_gradient(x, elements, inv_shape, areas, thickness, mu, lam):
    """Per-triangle, per-vertex contributions (..., ne, 3, 3)."""
    f = membrane_deformation_gradients(x, elements, inv_shape)
    s = pk2_stress(green_strain(f), mu, lam)
    p = f @ s
    g = _shape_gradients(inv_shape)  # (ne, 3, 2)
    w = thickness * areas
    return w[..., None, None] * np.einsum("...eab,ejb->...eja", p, g)


def membrane_energy_gradient(x, elements, inv_shape, areas, thickness, mu, lam):
    """(energy, per-vertex contributions); shares F across both."""
    f = membrane_deformation_gradients(x, elements, inv_shape)
    e_green = green_strain(f)
    s = pk2_stress(e_green, mu, lam)
    w = thickness * areas
    energy = np.sum(w * strain_energy_density(e_green, mu, lam), axis=-1)
    g = _shape_gradients(inv_shape)
    contrib = w[..., None, None] * np.einsum("...eab,ejb->...eja", f @ s, g)
    return energy, contrib


def membrane_hessian_blocks(x, elements, inv_shape, areas, thickness, mu, lam):
    f = membrane_deformation_gradients(x, elements, inv_shape)
    s = pk2_stress(green_strain(f), mu, lam)
    g = _shape_gradients(inv_shape)
    return _stvk_hessian_blocks(f, s, g, thickness * areas, mu, lam)


def membrane_stress_norms(x, elements, inv_shape, mu, lam):
    f = membrane_deformation_gradients(x, elements, inv_shape)
    s = pk2_stress(green_strain(f), mu, lam)
    return np.sqrt(np.einsum("...ij,...ij->...", s, s))


# ---------------------------------------------------------------------------
# Hinge bending


def hinge_vertices(x, hinges):
    return (x[..., hinges[:, k], :] for k in range(4))


def hinge_angles(x, hinges):
    """Signed dihedral per hinge, (..., nh)."""
    x0, x1, x2, x3 = hinge_vertices(x, hinges)
    e0 = x1 - x0
    na = _cross(e0, x2 - x0)
    nb = _cross(x3 - x0, e0)
    w = _cross(na, nb)
    sin_t = _dots(w, e0) / _norms(e0)
    cos_t = _dots(na, nb)
    return np.arctan2(sin_t, cos_t)


def _hinge_frame(x0, x1, x2, x3):
    """Shared geometric quantities for the angle derivative formulas."""
    e0 = x1 - x0
    e1 = x2 - x0
    e2 = x3 - x0
    e3 = x2 - x1
    e4 = x3 - x1
    n0 = _norms(e0)
    n1 = _norms(e1)
    n2 = _norms(e2)
    n3 = _norms(e3)
    n4 = _norms(e4)
    cos1 = _dots(e0, e1) / (n0 * n1)
    cos2 = _dots(e0, e2) / (n0 * n2)
    cos3 = -_dots(e0, e3) / (n0 * n3)
    cos4 = -_dots(e0, e4) / (n0 * n4)
    na = _cross(e0, e3)  # equals cross(e0, x2 - x0): triangle A normal
    nb = -_cross(e0, e4)  # equals cross(x3 - x0, e0): triangle B normal
    na_len = _norms(na)
    nb_len = _norms(nb)
    nn1 = na / na_len[..., None]
    nn2 = nb / nb_len[..., None]
    sin1 = _norms(_cross(e0, e1)) / (n0 * n1)
    sin2 = _norms(_cross(e0, e2)) / (n0 * n2)
    # Triangle heights over the shared edge and its endpoints.
    h1 = n0 * sin1
    h2 = n0 * sin2
    h3 = na_len / n3  # |e0| * sin(angle at x1 in tri A)
    h4 = nb_len / n4
    h01 = n1 * sin1
    h02 = n2 * sin2
    return {
        "e0": e0, "e1": e1, "e2": e2, "e3": e3, "e4": e4,
        "n0": n0, "n1": n1, "n2": n2, "n3": n3, "n4": n4,
        "cos1": cos1, "cos2": cos2, "cos3": cos3, "cos4": cos4,
        "nn1": nn1, "nn2": nn2, "na": na, "nb": nb,
        "h1": h1, "h2": h2, "h3": h3, "h4": h4, "h01": h01, "h02": h02,
    }


def _angles_from_frame(q):
    sin_t = _dots(_cross(q["na"], q["nb"]), q["e0"]) / q["n0"]
    return np.arctan2(sin_t, _dots(q["na"], q["nb"]))


def _gradients_from_frame(q):
    g0 = (
        q["cos3"][..., None] * q["nn1"] / q["h3"][..., None]
        + q["cos4"][..., None] * q["nn2"] / q["h4"][..., None]
    )
    g1 = (
        q["cos1"][..., None] * q["nn1"] / q["h1"][..., None]
        + q["cos2"][..., None] * q["nn2"] / q["h2"][..., None]
    )
    g2 = -q["nn1"] / q["h01"][..., None]
    g3 = -q["nn2"] / q["h02"][..., None]
    return np.stack([g0, g1, g2, g3], axis=-2)


def hinge_angle_gradients(x, hinges):
    """d theta / d (x0, x1, x2, x3), returned as (..., nh, 4, 3)."""
    x0, x1, x2, x3 = hinge_vertices(x, hinges)
    return _gradients_from_frame(_hinge_frame(x0, x1, x2, x3))


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _sym(m):
    return m + np.swapaxes(m, -1, -2)


def hinge_angle_hessians(x, hinges):
    """Second derivative of the dihedral angle, (..., nh, 12, 12)."""
    x0, x1, x2, x3 = hinge_vertices(x, hinges)
    q = _hinge_frame(x0, x1, x2, x3)
    nn1, nn2 = q["nn1"], q["nn2"]
    h1, h2, h3, h4 = q["h1"], q["h2"], q["h3"], q["h4"]
    h01, h02 = q["h01"], q["h02"]
    cos1, cos2, cos3, cos4 = q["cos1"], q["cos2"], q["cos3"], q["cos4"]

    m1 = _cross(nn1, q["e1"]) / q["n1"][..., None]
    m2 = -_cross(nn2, q["e2"]) / q["n2"][..., None]
    m3 = -_cross(nn1, q["e3"]) / q["n3"][..., None]
    m4 = _cross(nn2, q["e4"]) / q["n4"][..., None]
    m01 = -_cross(nn1, q["e0"]) / q["n0"][..., None]
    m02 = _cross(nn2, q["e0"]) / q["n0"][..., None]

    def scaled_outer(c, a, b):
        return c[..., None, None] * _outer(a, b)

    m331 = scaled_outer(cos3 / h3**2, m3, nn1)
    m311 = scaled_outer(cos3 / (h3 * h1), m1, nn1)
    m131 = scaled_outer(cos1 / (h1 * h3), m3, nn1)
    m3011 = scaled_outer(cos3 / (h3 * h01), m01, nn1)
    m111 = scaled_outer(cos1 / h1**2, m1, nn1)
    m1011 = scaled_outer(cos1 / (h1 * h01), m01, nn1)

    m442 = scaled_outer(cos4 / h4**2, m4, nn2)
    m422 = scaled_outer(cos4 / (h4 * h2), m2, nn2)
    m242 = scaled_outer(cos2 / (h2 * h4), m4, nn2)
    m4022 = scaled_outer(cos4 / (h4 * h02), m02, nn2)
    m222 = scaled_outer(cos2 / h2**2, m2, nn2)
    m2022 = scaled_outer(cos2 / (h2 * h02), m02, nn2)

    b1 = scaled_outer(1.0 / q["n0"] ** 2, nn1, m01)
    b2 = scaled_outer(1.0 / q["n0"] ** 2, nn2, m02)

    n13 = scaled_outer(1.0 / (h01 * h3), nn1, m3)
    n24 = scaled_outer(1.0 / (h02 * h4), nn2, m4)
    n11 = scaled_outer(1.0 / (h01 * h1), nn1, m1)
    n22 = scaled_outer(1.0 / (h02 * h2), nn2, m2)
    n101 = scaled_outer(1.0 / h01**2, nn1, m01)
    n202 = scaled_outer(1.0 / h02**2, nn2, m02)

    shape = x0.shape[:-1] + (12, 12)
    hess = np.zeros(shape)
    hess[..., 0:3, 0:3] = _sym(m331) - b1 + _sym(m442) - b2
    hess[..., 0:3, 3:6] = m311 + np.swapaxes(m131, -1, -2) + b1 \
        + m422 + np.swapaxes(m242, -1, -2) + b2
    hess[..., 0:3, 6:9] = m3011 - n13
    hess[..., 0:3, 9:12] = m4022 - n24
    hess[..., 3:6, 3:6] = _sym(m111) - b1 + _sym(m222) - b2
    hess[..., 3:6, 6:9] = m1011 - n11
    hess[..., 3:6, 9:12] = m2022 - n22
    hess[..., 6:9, 6:9] = -_sym(n101)
    hess[..., 9:12, 9:12] = -_sym(n202)

    hess[..., 3:6, 0:3] = np.swapaxes(hess[..., 0:3, 3:6], -1, -2)
    hess[..., 6:9, 0:3] = np.swapaxes(hess[..., 0:3, 6:9], -1, -2)
    hess[..., 9:12, 0:3] = np.swapaxes(hess[..., 0:3, 9:12], -1, -2)
    hess[..., 6:9, 3:6] = np.swapaxes(hess[..., 3:6, 6:9], -1, -2)
    hess[..., 9:12, 3:6] = np.swapaxes(hess[..., 3:6, 9:12], -1, -2)
    return hess


def bending_energy(x, hinges, rest_angles, weights, kappa):
    theta = hinge_angles(x, hinges)
    return kappa * np.sum(weights * (theta - rest_angles) ** 2, axis=-1)


def bending_gradient(x, hinges, rest_angles, weights, kappa):
    """Per-hinge, per-vertex contributions (..., nh, 4, 3)."""
    x0, x1, x2, x3 = hinge_vertices(x, hinges)
    q = _hinge_frame(x0, x1, x2, x3)
    coeff = 2.0 * kappa * weights * (_angles_from_frame(q) - rest_angles)
    return coeff[..., None, None] * _gradients_from_frame(q)


def bending_energy_gradient(x, hinges, rest_angles, weights, kappa):
    """(energy, per-vertex contributions); one hinge frame for both."""
    x0, x1, x2, x3 = hinge_vertices(x, hinges)
    q = _hinge_frame(x0, x1, x2, x3)
    resid = _angles_from_frame(q) - rest_angles
    energy = kappa * np.sum(weights * resid**2, axis=-1)
    coeff = 2.0 * kappa * weights * resid
    return energy, coeff[..., None, None] * _gradients_from_frame(q)


def bending_hessian_blocks(x, hinges, rest_angles, weights, kappa):
    theta = hinge_angles(x, hinges)
    dtheta = hinge_angle_gradients(x, hinges).reshape(*theta.shape, 12)
    d2theta = hinge_angle_hessians(x, hinges)
    resid = theta - rest_angles
    blocks = 2.0 * kappa * weights[..., None, None] * (
        _outer(dtheta, dtheta) + resid[..., None, None] * d2theta
    )
    return blocks
