import numpy as np
import pytest

from resofit.lm import levenberg_marquardt, numeric_jacobian


def rosenbrock(x):
    return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])


def test_rosenbrock_minimum():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0])
    assert res.converged
    assert np.allclose(res.x, [1, 1], atol=1e-8)


def test_linear_least_squares_matches_lstsq():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 4))
    b = rng.normal(size=30)
    res = levenberg_marquardt(lambda x: A @ x - b, np.zeros(4), jac=lambda x: A)
    expected = np.linalg.lstsq(A, b, rcond=None)[0]
    assert np.allclose(res.x, expected, atol=1e-8)


def test_exponential_fit():
    t = np.linspace(0, 4, 50)
    y = 2.5 * np.exp(-1.3 * t)
    res = levenberg_marquardt(lambda p: p[0] * np.exp(-p[1] * t) - y, [1.0, 0.5])
    assert np.allclose(res.x, [2.5, 1.3], rtol=1e-8)
    assert res.cost < 1e-20


def test_iteration_cap():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], max_iter=2)
    assert not res.converged
    assert res.message == "iteration cap reached"


def test_zero_residual_start():
    res = levenberg_marquardt(lambda x: x - 3.0, [3.0])
    assert res.converged and res.n_iter == 0


def test_non_finite_start():
    res = levenberg_marquardt(lambda x: np.array([np.inf]), [0.0])
    assert not res.converged


def test_numeric_jacobian():
    J = numeric_jacobian(rosenbrock, np.array([0.5, 2.0]))
    assert np.allclose(J, [[-10.0, 10.0], [-1.0, 0.0]], atol=1e-5)


def test_overflowing_trial_step_is_rejected():
    def fun(x):
        if x[0] > 10:
            raise OverflowError("math range error")
        return np.array([x[0] - 20.0])

    res = levenberg_marquardt(fun, [0.0], jac=lambda x: np.ones((1, 1)))
    assert res.converged
    assert 9.99 < res.x[0] <= 10
