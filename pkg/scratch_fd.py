import numpy as np

from modalsub import elements as el

rng = np.random.default_rng(1)


def fd_check(name, energy_fn, grad_fn, x0, h=1e-7):
    g = grad_fn(x0)
    errs = []
    for i in range(x0.size):
        xp = x0.copy(); xp.flat[i] += h
        xm = x0.copy(); xm.flat[i] -= h
        fd = (energy_fn(xp) - energy_fn(xm)) / (2 * h)
        errs.append(abs(fd - g.flat[i]) / max(1.0, abs(g.flat[i])))
    print(f"{name}: max grad FD rel err {max(errs):.3e}")
    return max(errs)


def fd_hess(name, grad_fn, hess_fn, x0, h=1e-6):
    H = hess_fn(x0)
    errs = []
    for _ in range(5):
        v = rng.standard_normal(x0.size)
        v /= np.linalg.norm(v)
        hv_fd = (grad_fn(x0 + h * v.reshape(x0.shape))
                 - grad_fn(x0 - h * v.reshape(x0.shape))).ravel() / (2 * h)
        hv = H @ v
        errs.append(np.linalg.norm(hv_fd - hv) / max(1.0, np.linalg.norm(hv)))
    print(f"{name}: max hessvec FD rel err {max(errs):.3e}")
    return max(errs)


print(sorted(n for n in dir(el) if not n.startswith("_")))
