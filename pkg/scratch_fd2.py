import numpy as np

from modalsub import elements as el

rng = np.random.default_rng(7)


def fd_grad(f, x0, h=1e-7):
    g = np.zeros(x0.size)
    for i in range(x0.size):
        xp = x0.copy(); xp.flat[i] += h
        xm = x0.copy(); xm.flat[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def report(name, analytic, numeric):
    denom = max(1.0, np.abs(numeric).max())
    err = np.abs(analytic.ravel() - numeric.ravel()).max() / denom
    print(f"{name}: {err:.3e}")
    return err


# ---- single tet ----
rest = np.array([[0.05, -0.02, 0.01], [1.1, 0.2, 0], [0.3, 0.9, -0.1], [0.1, 0.2, 1.2]])
elems = np.array([[0, 1, 2, 3]])
dm = (rest[1:] - rest[0]).T
inv = np.linalg.inv(dm)[None]
vol = np.array([np.linalg.det(dm) / 6.0])
mu, lam = 3.0, 2.0
x = rest + 0.1 * rng.standard_normal(rest.shape)

e_fn = lambda xf: el.tet_energy(xf.reshape(4, 3), elems, inv, vol, mu, lam)
g = el.tet_gradient(x, elems, inv, vol, mu, lam).reshape(-1)
report("tet grad", g, fd_grad(e_fn, x.ravel()))

H = el.tet_hessian_blocks(x, elems, inv, vol, mu, lam)[0]
g_fn = lambda xf: el.tet_gradient(xf.reshape(4, 3), elems, inv, vol, mu, lam).ravel()
Hfd = np.stack([fd_grad(lambda xf: g_fn(xf)[i], x.ravel(), 1e-6)
                for i in range(12)])
report("tet hess", H, Hfd)

# ---- single triangle membrane ----
rest3 = np.array([[0.0, 0, 0], [1, 0, 0], [0.2, 0.9, 0]])
tri = np.array([[0, 1, 2]])
d1, d2 = rest3[1] - rest3[0], rest3[2] - rest3[0]
nrm = np.cross(d1, d2); nrm /= np.linalg.norm(nrm)
t1 = d1 / np.linalg.norm(d1)
t2 = np.cross(nrm, t1)
dmm = np.array([[d1 @ t1, d2 @ t1], [0.0, d2 @ t2]])
invm = np.linalg.inv(dmm)[None]
area = np.array([0.5 * np.linalg.norm(np.cross(d1, d2))])
th = 0.3
xm = rest3 + 0.1 * rng.standard_normal(rest3.shape)

em_fn = lambda xf: el.membrane_energy(xf.reshape(3, 3), tri, invm, area, th, mu, lam)
gm = el.membrane_gradient(xm, tri, invm, area, th, mu, lam).reshape(-1)
report("membrane grad", gm, fd_grad(em_fn, xm.ravel()))

Hm = el.membrane_hessian_blocks(xm, tri, invm, area, th, mu, lam)[0]
gm_fn = lambda xf, i: el.membrane_gradient(
    xf.reshape(3, 3), tri, invm, area, th, mu, lam).ravel()[i]
Hmfd = np.stack([fd_grad(lambda xf: gm_fn(xf, i), xm.ravel(), 1e-6)
                 for i in range(9)])
report("membrane hess", Hm, Hmfd)

# membrane rest energy must be zero with zero gradient
print("rest membrane energy", el.membrane_energy(rest3, tri, invm, area, th, mu, lam))
print("rest membrane grad",
      np.abs(el.membrane_gradient(rest3, tri, invm, area, th, mu, lam)).max())

# ---- hinge angle derivatives ----
hx = np.array([[0.0, 0, 0], [1, 0, 0], [0.4, 0.8, 0.1], [0.6, -0.7, 0.2]])
hinges = np.array([[0, 1, 2, 3]])
a_fn = lambda xf: el.hinge_angles(xf.reshape(4, 3), hinges)[0]
ga = el.hinge_angle_gradients(hx, hinges).reshape(-1)
report("hinge angle grad", ga, fd_grad(a_fn, hx.ravel()))

Ha = el.hinge_angle_hessians(hx, hinges)[0]
ga_fn = lambda xf, i: el.hinge_angle_gradients(xf.reshape(4, 3), hinges).ravel()[i]
Hafd = np.stack([fd_grad(lambda xf: ga_fn(xf, i), hx.ravel(), 1e-6)
                 for i in range(12)])
report("hinge angle hess", Ha, Hafd)

# flat hinge: angle zero?
flat = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, 1, 0], [0.5, -1, 0]])
print("flat angle", el.hinge_angles(flat, hinges))
