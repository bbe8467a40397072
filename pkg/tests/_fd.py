"""Central finite-difference oracles used across the test suite."""

import numpy as np


def fd_gradient(fun, x, eps=1e-6):
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (fun(xp) - fun(xm)) / (2.0 * eps)
    return g


def fd_hessian_vector(grad_fun, x, v, eps=1e-6):
    v = np.asarray(v, dtype=np.float64)
    return (grad_fun(x + eps * v) - grad_fun(x - eps * v)) / (2.0 * eps)


def rel_error(approx, exact):
    scale = max(np.linalg.norm(exact), 1e-12)
    return np.linalg.norm(approx - exact) / scale
