"""Optimizer unit tests on problems with known answers."""

import numpy as np
import pytest

from modalsub.errors import ModalSubError
from modalsub.lbfgs import (
    LbfgsOptions,
    LbfgsResult,
    LbfgsSolver,
    lbfgs_minimize,
    wolfe_step,
)


def quadratic(a, b):
    def fun_grad(x):
        r = a @ x - b
        return 0.5 * float(r @ r), a.T @ r
    return fun_grad


def rosenbrock(x):
    f = 100.0 * (x[1] - x[0] ** 2) ** 2 + (1.0 - x[0]) ** 2
    g = np.array([
        -400.0 * x[0] * (x[1] - x[0] ** 2) - 2.0 * (1.0 - x[0]),
        200.0 * (x[1] - x[0] ** 2),
    ])
    return f, g


class TestMinimize:
    def test_quadratic_exact(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((8, 8))
        a = a @ a.T + 8 * np.eye(8)  # SPD
        b = rng.standard_normal(8)

        def fun_grad(x):
            return 0.5 * float(x @ (a @ x)) - float(b @ x), a @ x - b

        res = lbfgs_minimize(fun_grad, np.zeros(8),
                             LbfgsOptions(grad_tol=1e-8))
        assert res.converged
        assert np.allclose(res.x, np.linalg.solve(a, b), atol=1e-7)

    def test_rosenbrock(self):
        res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]),
                             LbfgsOptions(grad_tol=1e-9, max_iter=500))
        assert res.converged
        assert np.allclose(res.x, [1.0, 1.0], atol=1e-6)

    def test_already_converged(self):
        res = lbfgs_minimize(rosenbrock, np.array([1.0, 1.0]))
        assert res.converged
        assert res.iterations == 0

    def test_max_iter_reported(self):
        res = lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]),
                             LbfgsOptions(grad_tol=1e-14, max_iter=3))
        assert not res.converged
        assert res.iterations == 3
        assert res.message == "max iterations"

    def test_monotone_decrease(self):
        vals = []
        lbfgs_minimize(rosenbrock, np.array([-1.2, 1.0]),
                       LbfgsOptions(max_iter=40),
                       callback=lambda it, x, f, gn: vals.append(f))
        assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_nonfinite_start_raises(self):
        def bad(x):
            return np.inf, x
        with pytest.raises(ModalSubError):
            lbfgs_minimize(bad, np.ones(2))

    def test_result_fields(self):
        res = lbfgs_minimize(rosenbrock, np.array([0.5, 0.5]))
        assert isinstance(res, LbfgsResult)
        f, g = rosenbrock(res.x)
        assert res.fun == pytest.approx(f)
        assert np.allclose(res.grad, g)
        assert res.grad_norm == pytest.approx(np.linalg.norm(g))
        assert res.num_evals > res.iterations  # at least one eval per iter


class TestWolfeStep:
    def test_wolfe_conditions_hold(self):
        x = np.array([-1.2, 1.0])
        f, g = rosenbrock(x)
        d = -g
        alpha, f1, g1, ok, evals = wolfe_step(rosenbrock, x, f, g, d)
        assert ok and alpha > 0 and evals >= 1
        c1, c2 = 1e-4, 0.9
        assert f1 <= f + c1 * alpha * float(d @ g)  # sufficient decrease
        assert abs(float(d @ g1)) <= -c2 * float(d @ g)  # curvature
        fe, ge = rosenbrock(x + alpha * d)
        assert f1 == pytest.approx(fe)
        assert np.allclose(g1, ge)

    def test_requires_descent_direction(self):
        x = np.array([-1.2, 1.0])
        f, g = rosenbrock(x)
        with pytest.raises(ModalSubError):
            wolfe_step(rosenbrock, x, f, g, +g)

    def test_backtracks_past_infinite_values(self):
        # objective blows up for x[0] > 1; search must shrink below that
        def fun_grad(x):
            if x[0] > 1.0:
                return np.inf, np.zeros_like(x)
            return float(x @ x), 2.0 * x

        x = np.array([0.5, 0.0])
        f, g = fun_grad(x)
        d = np.array([10.0, 0.0]) * -np.sign(g[0] if g[0] else 1.0)
        d = -g * 10.0  # long descent step straight at the barrier
        alpha, f1, g1, ok, _ = wolfe_step(fun_grad, x, f, g, d)
        assert alpha > 0.0
        assert np.isfinite(f1)
        assert f1 < f


class TestSolverMemory:
    def test_curvature_guard_rejects_flat_pairs(self):
        solver = LbfgsSolver(history=5)
        s = np.array([1.0, 0.0])
        assert not solver.push(s, np.zeros(2))  # zero curvature
        assert not solver.push(s, -s)  # negative curvature
        assert solver.num_pairs == 0
        assert solver.push(s, s)
        assert solver.num_pairs == 1

    def test_history_bounded(self):
        solver = LbfgsSolver(history=3)
        rng = np.random.default_rng(1)
        for _ in range(10):
            s = rng.standard_normal(4)
            solver.push(s, s + 0.1 * rng.standard_normal(4))
        assert solver.num_pairs == 3

    def test_first_direction_is_steepest_descent(self):
        solver = LbfgsSolver()
        g = np.array([3.0, -4.0])
        assert np.allclose(solver.direction(g), -g)

    def test_secant_condition_on_latest_pair(self):
        # the BFGS inverse maps the newest y to its s exactly: H y = s
        rng = np.random.default_rng(2)
        a = rng.standard_normal((4, 4))
        a = a @ a.T + 4 * np.eye(4)
        solver = LbfgsSolver(history=10)
        for _ in range(6):
            s = rng.standard_normal(4)
            solver.push(s, a @ s)
        assert np.allclose(solver.direction(a @ s), -s, atol=1e-12)

    def test_reset(self):
        solver = LbfgsSolver()
        solver.push(np.ones(2), np.ones(2))
        solver.reset()
        assert solver.num_pairs == 0


class TestOptions:
    def test_rejects_bad_wolfe_constants(self):
        with pytest.raises(ModalSubError):
            LbfgsOptions(c1=0.5, c2=0.1)
        with pytest.raises(ModalSubError):
            LbfgsOptions(c1=0.0)
