"""Limited-memory BFGS with a strong Wolfe line search.

One implementation serves three callers: network training (persistent
LbfgsSolver memory across stochastic batches), the constrained oracle
(projected gradients), and reduced dynamics (small dense problems).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModalSubError


@dataclass(frozen=True)
class LbfgsOptions:
    history: int = 10
    grad_tol: float = 1.0e-8
    max_iter: int = 500
    c1: float = 1.0e-4
    c2: float = 0.9
    max_line_search: int = 30

    def __post_init__(self):
        if not (0.0 < self.c1 < self.c2 < 1.0):
            raise ModalSubError("Wolfe constants must satisfy 0 < c1 < c2 < 1")


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    grad_norm: float
    iterations: int
    num_evals: int
    converged: bool
    message: str = ""


class LbfgsSolver:
    """Two-loop recursion with persistent curvature memory.

    The memory survives objective changes between steps (stochastic
    training); pairs with non-positive curvature are skipped.
    """

    def __init__(self, history: int = 10, curvature_eps: float = 1.0e-10):
        self.history = int(history)
        self.curvature_eps = float(curvature_eps)
        self._s: list[np.ndarray] = []
        self._y: list[np.ndarray] = []
        self._rho: list[float] = []

    def reset(self) -> None:
        self._s.clear()
        self._y.clear()
        self._rho.clear()

    @property
    def num_pairs(self) -> int:
        return len(self._s)

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = float(s @ y)
        if sy <= self.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self._s.append(s)
        self._y.append(y)
        self._rho.append(1.0 / sy)
        if len(self._s) > self.history:
            self._s.pop(0)
            self._y.pop(0)
            self._rho.pop(0)
        return True

    def direction(self, grad: np.ndarray) -> np.ndarray:
        q = grad.copy()
        k = len(self._s)
        alpha = np.empty(k)
        for i in range(k - 1, -1, -1):
            alpha[i] = self._rho[i] * (self._s[i] @ q)
            q -= alpha[i] * self._y[i]
        if k > 0:
            gamma = 1.0 / (self._rho[-1] * (self._y[-1] @ self._y[-1]))
            q *= gamma
        for i in range(k):
            beta = self._rho[i] * (self._y[i] @ q)
            q += (alpha[i] - beta) * self._s[i]
        return -q


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic Hermite interpolant on [a, b], or None."""
    if a == b:
        return None
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0.0 or not np.isfinite(disc):
        return None
    d2 = math.sqrt(disc) * math.copysign(1.0, b - a)
    denom = gb - ga + 2.0 * d2
    if denom == 0.0:
        return None
    t = b - (b - a) * ((gb + d2 - d1) / denom)
    return t if np.isfinite(t) else None


class _Phi:
    """1D restriction phi(alpha) = f(x + alpha d) with finite-value guards."""

    def __init__(self, fun_grad, x, d):
        self.fun_grad = fun_grad
        self.x = x
        self.d = d
        self.evals = 0

    def __call__(self, alpha):
        f, g = self.fun_grad(self.x + alpha * self.d)
        self.evals += 1
        if not np.isfinite(f):
            return math.inf, g, math.inf
        return float(f), g, float(g @ self.d)


def _zoom(phi, a_lo, f_lo, d_lo, a_hi, f_hi, d_hi, f0, dphi0, c1, c2, max_steps):
    g_best = None
    for _ in range(max_steps):
        trial = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
        width = abs(a_hi - a_lo)
        lo, hi = min(a_lo, a_hi), max(a_lo, a_hi)
        if trial is None or not (lo + 0.1 * width <= trial <= hi - 0.1 * width):
            trial = 0.5 * (a_lo + a_hi)
        f, g, dphi = phi(trial)
        if f > f0 + c1 * trial * dphi0 or f >= f_lo:
            a_hi, f_hi, d_hi = trial, f, dphi
        else:
            if abs(dphi) <= -c2 * dphi0:
                return trial, f, g, True
            if dphi * (a_hi - a_lo) >= 0.0:
                a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
            a_lo, f_lo, d_lo = trial, f, dphi
            g_best = g
        if width < 1.0e-16 * max(1.0, abs(a_lo)):
            break
    if f_lo < f0 and a_lo > 0.0:
        # Re-evaluate so the returned point is always the last evaluation
        # (callers may cache the final (f, g) pair for the next step).
        f_lo, g_best, _ = phi(a_lo)
        return a_lo, f_lo, g_best, False
    return 0.0, f0, None, False


def _strong_wolfe(phi, f0, g0, dphi0, c1, c2, max_steps, alpha0):
    """Nocedal-Wright bracketing line search; returns (alpha, f, g, ok)."""
    alpha_prev, f_prev, dphi_prev = 0.0, f0, dphi0
    alpha = alpha0
    for i in range(max_steps):
        f, g, dphi = phi(alpha)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            return _zoom(phi, alpha_prev, f_prev, dphi_prev, alpha, f, dphi,
                         f0, dphi0, c1, c2, max_steps)
        if abs(dphi) <= -c2 * dphi0:
            return alpha, f, g, True
        if dphi >= 0.0:
            return _zoom(phi, alpha, f, dphi, alpha_prev, f_prev, dphi_prev,
                         f0, dphi0, c1, c2, max_steps)
        alpha_prev, f_prev, dphi_prev = alpha, f, dphi
        alpha *= 2.0
    # Ran out of extension steps: keep the last point if it helped.
    if f_prev < f0:
        f, g, dphi = phi(alpha_prev)
        return alpha_prev, f, g, False
    return 0.0, f0, None, False


def wolfe_step(fun_grad, x, f, g, direction, c1=1.0e-4, c2=0.9,
               max_steps=30, alpha0=1.0):
    """One strong-Wolfe line search along direction from (x, f, g).

    Returns (alpha, f_new, g_new, ok, num_evals); alpha == 0 means no
    decrease was found. When alpha > 0, (f_new, g_new) were evaluated at
    exactly x + alpha*direction, so callers may reuse them.
    """
    dphi0 = float(direction @ g)
    if dphi0 >= 0.0:
        raise ModalSubError("wolfe_step requires a descent direction")
    phi = _Phi(fun_grad, x, direction)
    alpha, f_new, g_new, ok = _strong_wolfe(
        phi, float(f), g, dphi0, c1, c2, max_steps, alpha0
    )
    return alpha, f_new, g_new, ok, phi.evals


def lbfgs_minimize(fun_grad, x0, options: LbfgsOptions | None = None,
                   callback=None) -> LbfgsResult:
    """Minimize f given fun_grad(x) -> (f, grad).

    Stops when the gradient norm falls below options.grad_tol or after
    max_iter iterations; a failed line search returns the best point seen
    with converged=False.
    """
    opts = options or LbfgsOptions()
    x = np.array(x0, dtype=np.float64)
    f, g = fun_grad(x)
    f = float(f)
    if not np.isfinite(f):
        raise ModalSubError("objective is non-finite at the starting point")
    evals = 1
    gnorm = float(np.linalg.norm(g))
    if gnorm <= opts.grad_tol:
        return LbfgsResult(x, f, g, gnorm, 0, evals, True, "converged at start")
    solver = LbfgsSolver(opts.history)
    for it in range(1, opts.max_iter + 1):
        d = solver.direction(g)
        dphi0 = float(d @ g)
        if dphi0 >= 0.0:
            solver.reset()
            d = -g
            dphi0 = -gnorm * gnorm
        alpha0 = 1.0 if solver.num_pairs > 0 else min(1.0, 1.0 / gnorm)
        phi = _Phi(fun_grad, x, d)
        alpha, f_new, g_new, ok = _strong_wolfe(
            phi, f, g, dphi0, opts.c1, opts.c2, opts.max_line_search, alpha0
        )
        evals += phi.evals
        if alpha == 0.0 or g_new is None:
            return LbfgsResult(x, f, g, gnorm, it, evals, False,
                               "line search failure")
        s = alpha * d
        y = g_new - g
        solver.push(s, y)
        x = x + s
        f, g = float(f_new), g_new
        gnorm = float(np.linalg.norm(g))
        if callback is not None:
            callback(it, x, f, gnorm)
        if gnorm <= opts.grad_tol:
            return LbfgsResult(x, f, g, gnorm, it, evals, True, "gradient tolerance")
    return LbfgsResult(x, f, g, gnorm, opts.max_iter, evals, False,
                       "max iterations")
