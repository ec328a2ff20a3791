import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aoptflow import EnsembleProduct
from aoptflow.errors import ConfigError
from aoptflow.regularize import (
    RegularizerConfig,
    repulsion_gradient,
    repulsion_gradients,
    repulsion_value,
    variance_gradient,
    variance_gradients,
    variance_value,
)

unit = st.floats(0.0, 1.0, allow_nan=False)


def test_config_validation():
    assert RegularizerConfig().sigma_q == 0.009
    for kw, key in [({"alpha": -1}, "regularization.alpha"), ({"beta": -1}, "regularization.beta"),
                    ({"sigma_q": 0}, "regularization.sigma_q")]:
        with pytest.raises(ConfigError) as exc:
            RegularizerConfig(**kw)
        assert exc.value.key == key


def test_variance_gradient_is_first_variation_gradient():
    # first variation of the variance at fixed base measure: |x - m|^2 - const
    p = np.random.default_rng(0).uniform(size=(2, 6, 2))
    ens = EnsembleProduct(p)
    m = p[1].mean(axis=0)
    x = p[1, 4]
    np.testing.assert_allclose(variance_gradient(ens, 4, 1), 2 * (x - m), rtol=1e-14)
    np.testing.assert_allclose(variance_gradients(ens)[1, 4], 2 * (x - m), rtol=1e-14)


def test_repulsion_value_known_pair():
    ens = EnsembleProduct(np.array([[[0.0]], [[0.009]]]))
    # two ordered pairs, each exp(-1/2)
    assert repulsion_value(ens, 0.009) == pytest.approx(2 * np.exp(-0.5))
    assert repulsion_value(EnsembleProduct(np.zeros((1, 3, 1))), 0.009) == 0.0


def test_repulsion_gradient_is_scaled_derivative_of_value(rng):
    p = rng.uniform(0.4, 0.6, size=(3, 4, 1))
    ens = EnsembleProduct(p)
    sig, h = 0.05, 1e-6
    for b, i in [(0, 0), (2, 3)]:
        q = p.copy()
        q[b, i, 0] += h
        up = repulsion_value(EnsembleProduct(q), sig)
        q[b, i, 0] -= 2 * h
        down = repulsion_value(EnsembleProduct(q), sig)
        fd = ens.N * (up - down) / (2 * h)
        assert repulsion_gradient(ens, i, b, sig)[0] == pytest.approx(fd, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (3, 4, 2), elements=unit))
def test_batch_and_single_particle_agree(p):
    ens = EnsembleProduct(p)
    G = repulsion_gradients(ens, 0.1)
    V = variance_gradients(ens)
    for b in range(3):
        for i in range(4):
            np.testing.assert_allclose(G[b, i], repulsion_gradient(ens, i, b, 0.1), atol=1e-12)
            np.testing.assert_allclose(V[b, i], variance_gradient(ens, i, b), atol=1e-14)
    assert variance_value(ens) >= 0
    assert repulsion_value(ens, 0.1) >= 0


def test_out_of_range_particle():
    ens = EnsembleProduct(np.zeros((2, 3, 1)))
    with pytest.raises(IndexError):
        variance_gradient(ens, 3, 0)
    with pytest.raises(IndexError):
        repulsion_gradient(ens, 0, 2, 0.1)
