import numpy as np
import pytest

from efpsn.network import (
    DisconnectedGraphError,
    build_network,
    complete_graph,
    erdos_renyi_graph,
    from_spec,
    metropolis_weights,
    path_graph,
    ring_chord_graph,
    ring_graph,
)


def random_connected(n, seed):
    return erdos_renyi_graph(n, 0.4, seed)


def test_path3_spectrum():
    net = path_graph(3)
    assert np.allclose(net.eigenvalues, [0.0, 1.0, 3.0], atol=1e-12)


def test_complete3_spectrum():
    net = complete_graph(3)
    assert np.allclose(net.eigenvalues, [0.0, 3.0, 3.0], atol=1e-12)


def test_ring5_spectral_radius_bounded_by_twice_max_degree():
    net = ring_graph(5)
    assert net.laplacian_spectral_radius <= 2 * net.degrees.max() + 1e-12


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraphError):
        build_network([(0, 1), (2, 3)], 4)


def test_edge_validation():
    with pytest.raises(ValueError):
        build_network([(0, 5)], 3)


def test_metropolis_two_nodes():
    net = build_network([(0, 1)], 2)
    assert np.allclose(net.weights, [[0.5, 0.5], [0.5, 0.5]])


def test_metropolis_path3_edge_weight():
    net = path_graph(3)
    assert net.weights[0, 1] == pytest.approx(1 / 3)


@pytest.mark.parametrize("seed", range(5))
def test_metropolis_doubly_stochastic(seed):
    net = random_connected(8, seed)
    assert np.allclose(net.weights.sum(axis=0), 1.0, atol=1e-12)
    assert np.allclose(net.weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.allclose(net.weights, net.weights.T)
    assert (net.weights >= -1e-15).all()


@pytest.mark.parametrize("seed", range(8))
def test_pseudo_inverse_identity(seed):
    net = random_connected(np.random.default_rng(seed).integers(3, 12), seed)
    lap = net.laplacian
    assert np.max(np.abs(lap @ net.pseudo_inverse() @ lap - lap)) < 1e-9


def test_pseudo_determinant_path3():
    assert path_graph(3).pseudo_determinant(1.0) == pytest.approx(3.0)


def test_pseudo_determinant_complete3_scaled():
    assert complete_graph(3).pseudo_determinant(2.0) == pytest.approx(36.0)


@pytest.mark.parametrize("seed", range(10))
def test_spectral_reconstruction(seed):
    n = int(np.random.default_rng([seed, 1]).integers(2, 21))
    net = random_connected(n, seed)
    rebuilt = (net.eigenvectors * net.eigenvalues) @ net.eigenvectors.T
    assert np.max(np.abs(rebuilt - net.laplacian)) <= 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_spectral_radius_remark_bound(seed):
    net = random_connected(10, seed + 100)
    assert net.laplacian_spectral_radius <= 2 * net.degrees.max() + 1e-9


def test_laplacian_rows_sum_to_zero_exactly():
    net = ring_chord_graph(7)
    assert (net.laplacian.sum(axis=0) == 0).all()
    assert (net.laplacian.sum(axis=1) == 0).all()


def test_neighbors():
    net = ring_chord_graph(5)
    assert net.neighbors(0) == [1, 2, 4]


def test_self_loops_dropped():
    net = build_network([(0, 1), (1, 1)], 2)
    assert net.edges == frozenset({(0, 1)})


def test_from_spec_named_and_explicit():
    assert from_spec({"kind": "path", "n": 4}).edges == path_graph(4).edges
    assert from_spec({"edges": [[0, 1], [1, 2]], "n": 3}).edges == path_graph(3).edges
    with pytest.raises(ValueError):
        from_spec({"kind": "torus", "n": 4})


def test_erdos_renyi_deterministic():
    a = erdos_renyi_graph(9, 0.35, seed=4)
    b = erdos_renyi_graph(9, 0.35, seed=4)
    assert a.edges == b.edges
