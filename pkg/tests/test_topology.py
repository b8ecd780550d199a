import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlcomp.topology import (MixingMatrix, TopologyError, build_topology, complete_topology,
                             random_topology, ring_topology, second_eigenvalue, spectral_gap,
                             validate_weights)


def _check_invariants(W: MixingMatrix):
    w = W.weights
    assert np.max(np.abs(w - w.T)) <= 1e-12
    assert np.max(np.abs(w.sum(axis=1) - 1)) <= 1e-12
    assert np.all(w >= 0)
    assert W.lambda2 < 1
    eig = np.sort(np.abs(np.linalg.eigvals(w)))[::-1]
    expect = eig[1] if w.shape[0] > 1 else 0.0
    assert abs(W.lambda2 - expect) <= 1e-10


def test_ring4_weights_and_gap():
    W = ring_topology(4)
    expect = np.array([[1, 1, 0, 1], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]]) / 3
    np.testing.assert_allclose(W.weights, expect, atol=1e-15)
    assert abs(W.spectral_gap - 2 / 3) <= 1e-10
    _check_invariants(W)


def test_ring2_is_two_node_complete():
    W = ring_topology(2)
    np.testing.assert_allclose(W.weights, np.full((2, 2), 0.5))
    assert abs(W.lambda2) <= 1e-12


@pytest.mark.parametrize("n", range(2, 12))
def test_ring_invariants(n):
    _check_invariants(ring_topology(n))


def test_complete_examples():
    W1 = complete_topology(1)
    assert W1.weights.tolist() == [[1.0]]
    assert W1.spectral_gap == 1.0
    np.testing.assert_array_equal(complete_topology(4).weights, np.full((4, 4), 0.25))
    assert abs(complete_topology(3).lambda2) <= 1e-12
    assert abs(spectral_gap(complete_topology(5).weights) - 1.0) <= 1e-12


def test_random_deterministic_and_valid():
    a = random_topology(4, 0.4, seed=7)
    b = random_topology(4, 0.4, seed=7)
    np.testing.assert_array_equal(a.weights, b.weights)
    _check_invariants(random_topology(8, 0.4, seed=1))


def test_random_full_probability_is_complete():
    for seed in range(3):
        np.testing.assert_allclose(random_topology(4, 1.0, seed=seed).weights,
                                   np.full((4, 4), 0.25), atol=1e-15)


def test_rejects_disconnected_identity():
    with pytest.raises(TopologyError):
        validate_weights(np.eye(2))
    with pytest.raises(TopologyError):
        MixingMatrix(np.eye(3))


@pytest.mark.parametrize("bad", [
    np.array([[0.6, 0.4], [0.5, 0.5]]),          # not symmetric
    np.array([[0.7, 0.4], [0.4, 0.7]]),          # rows do not sum to 1
    np.array([[1.5, -0.5], [-0.5, 1.5]]),        # negative entries
    np.ones((2, 3)) / 3,                         # not square
])
def test_rejects_invalid_weights(bad):
    with pytest.raises(TopologyError):
        MixingMatrix(bad)


def test_constructor_argument_errors():
    with pytest.raises(TopologyError):
        ring_topology(1)
    with pytest.raises(TopologyError):
        complete_topology(0)
    with pytest.raises(TopologyError):
        random_topology(4, 0.0)
    with pytest.raises(TopologyError):
        build_topology("star", 4)


def test_build_topology_dispatch():
    np.testing.assert_array_equal(build_topology("ring", 5).weights, ring_topology(5).weights)
    np.testing.assert_array_equal(build_topology("random", 6, 0.5, 3).weights,
                                  random_topology(6, 0.5, 3).weights)


def test_csv_export(tmp_path):
    W = ring_topology(5)
    p = tmp_path / "w.csv"
    W.to_csv(p)
    np.testing.assert_array_equal(np.loadtxt(p, delimiter=","), W.weights)


@settings(max_examples=100, deadline=None)
@given(kind=st.sampled_from(["ring", "complete", "random"]), n=st.integers(2, 12),
       p=st.floats(0.2, 1.0), seed=st.integers(0, 10_000), cols=st.integers(1, 4),
       data_seed=st.integers(0, 2**31))
def test_contraction_and_averaging(kind, n, p, seed, cols, data_seed):
    W = build_topology(kind, n, p, seed)
    _check_invariants(W)
    V = np.random.default_rng(data_seed).standard_normal((n, cols))
    Vbar = V.mean(axis=0)
    WV = W.weights @ V
    np.testing.assert_allclose(WV.mean(axis=0), Vbar, atol=1e-12)
    lam = second_eigenvalue(W.weights)
    assert np.linalg.norm(WV - Vbar) <= lam * np.linalg.norm(V - Vbar) + 1e-12
