import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoptflow.kernels import KernelFamily, KernelSpec, kernel_eval, kernel_grad_matrix, kernel_grad_x, kernel_matrix

coord = st.floats(0.0, 1.0, allow_nan=False)
FAMILIES = [f for f in KernelFamily]


def test_squared_exponential_values():
    k = KernelSpec("squared_exponential", 0.5)
    assert kernel_eval(k, 0.3, 0.3) == 1.0
    assert kernel_eval(k, 0.0, 0.5) == pytest.approx(np.exp(-0.5), rel=1e-15)
    assert kernel_eval(k, [0.0, 0.0], [0.3, 0.4]) == pytest.approx(np.exp(-0.25 / 0.5), rel=1e-15)


def test_nonstationary_prefactor():
    k = KernelSpec("nonstationary_product", 0.01)
    assert kernel_eval(k, 0.5, 0.5) == 1.0
    # at x = z = 0 the prefactor is (1 + 50/4)^2
    assert kernel_eval(k, 0.0, 0.0) == pytest.approx(13.5**2)


def test_torus_cosine_wraps():
    k = KernelSpec("torus_cosine")
    assert kernel_eval(k, 0.1, 0.35) == pytest.approx(0.0, abs=1e-15)
    assert kernel_eval(k, 0.95, 0.05) == pytest.approx(np.cos(0.2 * np.pi))
    with pytest.raises(ValueError):
        kernel_matrix(k, np.zeros((1, 2)), np.zeros((1, 2)))


def test_gaussian_interaction_peak_and_role():
    k = KernelSpec("gaussian_interaction", 0.009)
    assert kernel_eval(k, 0.4, 0.4) == 1.0
    assert not k.is_covariance
    assert KernelSpec("squared_exponential").is_covariance


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        KernelSpec("matern", 1.0)
    with pytest.raises(ValueError):
        KernelSpec("squared_exponential", 0.0)
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec("squared_exponential"), [0.1, 0.2], 0.3)


@pytest.mark.parametrize("family", FAMILIES)
def test_gradient_matches_central_difference(family, rng):
    k = KernelSpec(family, 0.3)
    dim = 1 if family is KernelFamily.TORUS_COSINE else 2
    X, Z = rng.uniform(size=(6, dim)), rng.uniform(size=(5, dim))
    G = kernel_grad_matrix(k, X, Z)
    h = 1e-6
    for d in range(dim):
        e = np.zeros(dim)
        e[d] = h
        fd = (kernel_matrix(k, X + e, Z) - kernel_matrix(k, X - e, Z)) / (2 * h)
        np.testing.assert_allclose(G[..., d], fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("family", FAMILIES)
@settings(max_examples=30, deadline=None)
@given(x=coord, z=coord)
def test_symmetry(family, x, z):
    k = KernelSpec(family, 0.2)
    assert kernel_eval(k, x, z) == pytest.approx(kernel_eval(k, z, x), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("family", ["squared_exponential", "nonstationary_product", "torus_cosine"])
@settings(max_examples=25, deadline=None)
@given(pts=st.lists(coord, min_size=2, max_size=12))
def test_gram_positive_semidefinite(family, pts):
    k = KernelSpec(family, 0.2)
    K = kernel_matrix(k, np.array(pts), np.array(pts))
    lam = np.linalg.eigvalsh(0.5 * (K + K.T))
    assert lam.min() >= -1e-10 * max(1.0, lam.max())


def test_pointwise_gradient_agrees_with_matrix():
    k = KernelSpec("nonstationary_product", 0.1)
    g = kernel_grad_x(k, [0.2, 0.7], [0.3, 0.5])
    G = kernel_grad_matrix(k, np.array([[0.2, 0.7]]), np.array([[0.3, 0.5]]))[0, 0]
    np.testing.assert_array_equal(g, G)
