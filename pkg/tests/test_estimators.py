from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlcomp.estimators import (EstimatorError, NodeState, compose_gradient, inner_update_momentum,
                               inner_update_vr, mix, momentum_update, storm_update,
                               tracking_update, x_update)
from mlcomp.topology import complete_topology, ring_topology


def test_inner_update_examples():
    f_new = np.array([0.7, -1.0])
    np.testing.assert_array_equal(inner_update_momentum(np.ones(2), np.zeros(2), f_new, 1.0), f_new)
    np.testing.assert_array_equal(inner_update_momentum(np.ones(2), np.ones(2), f_new, 0.3), f_new)
    out = inner_update_momentum(np.array([1.0]), np.array([0.5]), np.array([0.7]), 0.2)
    assert out[0] == pytest.approx(1.1, abs=1e-15)
    out = inner_update_vr(np.array([1.0]), np.array([0.5]), np.array([0.7]), 0.2)
    assert out[0] == pytest.approx(1.1, abs=1e-15)


@pytest.mark.parametrize("c", [0.0, -0.1, 1.5])
def test_coefficients_out_of_range(c):
    with pytest.raises(EstimatorError):
        inner_update_momentum(np.ones(1), np.ones(1), np.ones(1), c)
    with pytest.raises(EstimatorError):
        momentum_update(np.ones(1), np.ones(1), c)
    with pytest.raises(EstimatorError):
        storm_update(np.ones(1), np.ones(1), np.ones(1), c)


def test_compose_gradient_examples():
    assert compose_gradient([np.ones((5, 1))]).tolist() == [1.0] * 5
    assert compose_gradient([np.array([[2.0]]), np.array([[3.0]]), np.array([[4.0]])]).tolist() == [24.0]
    rng = np.random.default_rng(0)
    mats = [rng.standard_normal((6, 4)), rng.standard_normal((4, 3)), rng.standard_normal((3, 1))]
    right_to_left = mats[0] @ (mats[1] @ mats[2])
    np.testing.assert_allclose(compose_gradient(mats), right_to_left[:, 0], rtol=1e-12)


def test_compose_gradient_shape_errors():
    with pytest.raises(EstimatorError):
        compose_gradient([])
    with pytest.raises(EstimatorError):
        compose_gradient([np.ones((3, 2)), np.ones((3, 1))])
    with pytest.raises(EstimatorError):
        compose_gradient([np.ones((3, 2))])


def test_momentum_examples():
    g = np.array([1.0, -2.0])
    np.testing.assert_array_equal(momentum_update(np.zeros(2), g, 1.0), g)
    np.testing.assert_array_equal(momentum_update(g, g, 0.4), g)
    assert momentum_update(np.array([0.0]), np.array([1.0]), 0.3)[0] == pytest.approx(0.3)


def test_storm_examples():
    g_new = np.array([0.9, 0.1])
    np.testing.assert_array_equal(storm_update(np.ones(2), np.zeros(2), g_new, 1.0), g_new)
    np.testing.assert_array_equal(storm_update(np.ones(2), np.ones(2), g_new, 0.5), g_new)
    out = storm_update(np.array([1.0]), np.array([0.8]), np.array([0.9]), 0.5)
    assert out[0] == pytest.approx(1.0, abs=1e-15)


def test_tracking_examples():
    y = np.array([[1.0, 2.0]])
    out = tracking_update(y, np.array([3.0, 3.0]), np.array([1.0, 1.0]), [1.0])
    np.testing.assert_array_equal(out, [3.0, 4.0])
    W = complete_topology(3)
    Y = np.arange(6.0).reshape(3, 2)
    m = np.array([0.5, 0.5])
    for n in range(3):
        np.testing.assert_allclose(tracking_update(Y, m, m, W.row(n)), Y.mean(axis=0))
    with pytest.raises(EstimatorError):
        tracking_update(Y, m, m, [0.5, 0.2, 0.2])


def test_x_update_examples():
    x = np.array([[1.0]])
    assert x_update(x, np.array([1.0]), [1.0], 1.0, 0.5, 0)[0] == 0.5
    assert x_update(np.array([[3.0, 1.0]]), np.array([0.5, 0.0]), [1.0], 2.0, 1.0, 0).tolist() == [2.0, 1.0]
    W = complete_topology(4)
    X = np.random.default_rng(1).standard_normal((4, 3))
    for n in range(4):
        out = x_update(X, np.zeros(3), W.row(n), 1.0, 0.25, n)
        np.testing.assert_allclose(out, X[n] + 0.25 * (X.mean(axis=0) - X[n]), atol=1e-15)
    with pytest.raises(EstimatorError):
        x_update(X, np.zeros(3), W.row(0), 0.0, 0.5, 0)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 10), d=st.integers(1, 5), seed=st.integers(0, 2**31))
def test_tracking_telescoping(n, d, seed):
    rng = np.random.default_rng(seed)
    W = ring_topology(n)
    m_old = rng.standard_normal((n, d))
    m_new = rng.standard_normal((n, d))
    Y = rng.standard_normal((n, d))
    Y += m_old.mean(axis=0) - Y.mean(axis=0)
    Y_new = np.array([tracking_update(Y, m_new[i], m_old[i], W.row(i)) for i in range(n)])
    np.testing.assert_allclose(Y_new.mean(axis=0), m_new.mean(axis=0), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 8), d=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_mix_preserves_average(n, d, seed):
    W = complete_topology(n) if n < 3 else ring_topology(n)
    X = np.random.default_rng(seed).standard_normal((n, d))
    mixed = np.array([mix(W.row(i), X) for i in range(n)])
    np.testing.assert_allclose(mixed.mean(axis=0), X.mean(axis=0), atol=1e-12)


def test_node_state_copy_is_deep():
    s = NodeState(x=np.zeros(2), u=[np.zeros(2), np.ones(3)], v=[np.ones((2, 3))],
                  m=np.zeros(2), y=np.zeros(2))
    c = s.copy()
    c.x[0] = 5.0
    c.u[1][0] = 5.0
    c.v[0][0, 0] = 5.0
    assert s.x[0] == 0.0 and s.u[1][0] == 1.0 and s.v[0][0, 0] == 1.0
