import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evtss import optim


def rosen(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


def test_minimize_rosenbrock():
    res = optim.minimize(rosen, [-1.2, 1.0], n_starts=3, seed=0)
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_minimize_respects_invalid_region():
    # objective undefined for x <= 0
    f = lambda x: np.inf if x[0] <= 0 else x[0] - np.log(x[0])
    res = optim.minimize(f, [3.0], seed=1)
    assert res.x[0] == pytest.approx(1.0, abs=1e-6)


def test_no_valid_start():
    res = optim.minimize(lambda x: np.inf, [0.0, 0.0])
    assert not res.converged


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=4))
def test_fd_gradient_quadratic(c):
    c = np.array(c)
    f = lambda x: float(np.sum((x - c) ** 2))
    x = np.zeros_like(c)
    np.testing.assert_allclose(optim.fd_gradient(f, x), -2 * c, atol=1e-6)


def test_fd_hessian_and_covariance():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    f = lambda x: 0.5 * x @ A @ x
    H = optim.fd_hessian(f, np.array([0.3, -0.2]))
    np.testing.assert_allclose(H, A, atol=1e-5)
    V, note = optim.covariance_from_hessian(H)
    assert note is None
    np.testing.assert_allclose(V, np.linalg.inv(A), atol=1e-5)


def test_singular_information_flagged():
    V, note = optim.covariance_from_hessian(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert note is not None and np.all(np.isfinite(V))


def test_scaled_grad_norm():
    assert optim.scaled_grad_norm(np.array([1e-3, 1e-5]), np.array([0.5, 100.0])) == pytest.approx(1e-3)
