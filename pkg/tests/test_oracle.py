import numpy as np
import pytest

from so3fm.oracle import (
    McEstimate,
    VarianceError,
    fd_gradient,
    haar_rotations,
    mc_cross_entropy,
    mc_entropy,
    mc_norm_const,
    rel_err,
)


def test_uniform_norm_const_is_one():
    est = mc_norm_const(np.zeros((3, 3)), n=10**4)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_uniform_entropy_is_zero():
    assert abs(mc_entropy(np.zeros((3, 3)), n=10**4).mean) < 1e-15


def test_reproducible():
    A = np.diag([1.0, 2.0, 0.5])
    assert mc_norm_const(A, n=10**5, seed=4) == mc_norm_const(A, n=10**5, seed=4)
    assert mc_norm_const(A, n=10**5, seed=4) != mc_norm_const(A, n=10**5, seed=5)


def test_chunking_prefix_stable():
    a = haar_rotations(70000, seed=2)
    b = haar_rotations(140000, seed=2)
    np.testing.assert_array_equal(a[:65536], b[:65536])


def test_refuses_high_concentration():
    with pytest.raises(VarianceError):
        mc_norm_const(np.diag([6.0, 0, 0]))
    with pytest.raises(ValueError):
        mc_norm_const(np.eye(3), n=100)


def test_gibbs_on_samples():
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(2, 3, 3))
    h = mc_entropy(A, n=10**5, seed=1)
    ce = mc_cross_entropy(A, B, n=10**5, seed=1)
    assert ce.mean > h.mean


def test_agrees():
    e = McEstimate(1.0, 0.1, 100)
    assert e.agrees(1.25, n_sigma=3)
    assert not e.agrees(1.35, n_sigma=3)
    assert e.agrees(1.35, n_sigma=3, rel=0.3)


def test_fd_gradient_quadratic():
    A = np.arange(9.0).reshape(3, 3)
    np.testing.assert_allclose(fd_gradient(lambda a: np.sum(a**2), A), 2 * A, atol=1e-8)


def test_fd_gradient_non_finite():
    with pytest.raises(FloatingPointError):
        with np.errstate(divide="ignore"):
            fd_gradient(lambda a: np.log(a[0, 0]), np.zeros((3, 3)))


def test_rel_err_floor():
    assert rel_err([1e-6], [0.0]) == pytest.approx(1e-3)
    assert rel_err([2.0], [1.0]) == 1.0
