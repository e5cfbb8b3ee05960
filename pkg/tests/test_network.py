import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from socialtrend.network import (CombinationMatrix, NetworkError, Topology, build_metropolis,
                                 check_primitive, mixing_bound, perron_vector,
                                 validate_left_stochastic)

from conftest import random_left_stochastic


def test_metropolis_path_hand_values():
    # path 0-1-2, degrees with self 2, 3, 2
    A = build_metropolis(Topology.undirected(3, [(0, 1), (1, 2)])).entries
    expected = np.array([[2 / 3, 1 / 3, 0.0],
                         [1 / 3, 1 / 3, 1 / 3],
                         [0.0, 1 / 3, 2 / 3]])
    assert_allclose(A, expected, atol=1e-15)


def test_metropolis_is_doubly_stochastic(fig3):
    A = fig3.matrix.entries
    assert_allclose(A.sum(axis=0), 1.0, atol=1e-12)
    assert_allclose(A.sum(axis=1), 1.0, atol=1e-12)
    assert_allclose(fig3.matrix.perron, np.full(10, 0.1), atol=1e-12)


def test_metropolis_rejects_disconnected_graph():
    with pytest.raises(NetworkError):
        build_metropolis(Topology.undirected(4, [(0, 1), (2, 3)]))


def test_metropolis_rejects_directed_graph():
    with pytest.raises(NetworkError):
        build_metropolis(Topology.from_adjacency([[1], [], [0]]))


def test_perron_matches_dense_eigensolver(fig3):
    A = fig3.matrix.entries
    w, V = np.linalg.eig(A)
    i = np.argmin(np.abs(w - 1))
    v = np.real(V[:, i])
    v /= v.sum()
    assert_allclose(fig3.matrix.perron, v, atol=1e-12)


def test_mixing_lambda_matches_eigenvalues(fig3):
    mods = np.sort(np.abs(np.linalg.eigvals(fig3.matrix.entries)))[::-1]
    assert mods[0] == pytest.approx(1.0)
    assert mixing_bound(fig3.matrix.entries) == pytest.approx(mods[1], abs=1e-12)


def test_powers_converge_to_perron_outer(fig3):
    A = fig3.matrix.entries
    P = np.linalg.matrix_power(A, 200)
    assert np.max(np.abs(P - np.outer(fig3.matrix.perron, np.ones(10)))) < 1e-12


@pytest.mark.parametrize("A", [
    np.array([[0.0, 1.0], [1.0, 0.0]]),
    np.array([[1.0, 0.0], [0.0, 1.0]]),
    np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
])
def test_non_primitive_matrices(A):
    assert not check_primitive(A)
    with pytest.raises(NetworkError):
        perron_vector(A)


def test_non_stochastic_rejected():
    with pytest.raises(NetworkError):
        validate_left_stochastic(np.array([[0.5, 0.5], [0.6, 0.5]]))
    with pytest.raises(NetworkError):
        validate_left_stochastic(np.array([[1.2, 0.5], [-0.2, 0.5]]))


def test_entries_must_match_topology():
    topo = Topology.undirected(3, [(0, 1), (1, 2)])
    A = np.full((3, 3), 1 / 3)
    with pytest.raises(NetworkError):
        CombinationMatrix.from_entries(A, topo)


def test_topology_neighbors_include_self():
    topo = Topology.from_adjacency([[1], [0, 2], [1]])
    assert topo.neighbors(1) == [0, 1, 2]
    assert topo.is_symmetric()
    assert topo.is_strongly_connected()


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=2, max_value=6), st.integers(0, 2**32 - 1))
def test_primitivity_matches_graph_criterion(K, seed):
    rng = np.random.default_rng(seed)
    A = np.where(rng.random((K, K)) < 0.4, rng.random((K, K)) + 0.1, 0.0)
    A[:, A.sum(axis=0) == 0] = np.eye(K)[:, A.sum(axis=0) == 0]
    A = A / A.sum(axis=0, keepdims=True)
    G = nx.DiGraph()
    G.add_nodes_from(range(K))
    G.add_edges_from(zip(*np.nonzero(A)))
    assert check_primitive(A) == (nx.is_strongly_connected(G) and nx.is_aperiodic(G))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=7), st.integers(0, 2**32 - 1))
def test_perron_vector_is_fixed_point(K, seed):
    A = random_left_stochastic(np.random.default_rng(seed), K)
    v = perron_vector(A)
    assert np.all(v > 0)
    assert v.sum() == pytest.approx(1.0, abs=1e-12)
    assert_allclose(A @ v, v, atol=1e-10)
