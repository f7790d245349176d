"""Agent communication graphs.

A Network bundles the undirected topology with two matrices that play
different roles: the combinatorial Laplacian of the (unweighted)
adjacency, whose spectrum drives the privacy accounting and describes
the covariance of the exchanged noise, and a Metropolis mixing matrix
used by the decentralized optimizer.  Both are immutable after
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPECTRAL_TOL = 1e-9


class DisconnectedGraphError(ValueError):
    """The graph is not connected, so consensus and the privacy budget break down."""


@dataclass(frozen=True)
class Network:
    """Undirected agent graph with Laplacian spectrum and mixing weights."""

    n: int
    edges: frozenset[tuple[int, int]]
    weights: np.ndarray = field(repr=False)
    laplacian: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.diag(self.laplacian).astype(int)

    def neighbors(self, i: int) -> list[int]:
        """Neighbors of agent i, excluding i itself."""
        out = [j for (a, j) in self.edges if a == i]
        out += [a for (a, j) in self.edges if j == i]
        return sorted(out)

    @property
    def algebraic_connectivity(self) -> float:
        """Second-smallest Laplacian eigenvalue; positive iff connected."""
        if self.n < 2:
            raise ValueError("connectivity is undefined for a single agent")
        return float(self.eigenvalues[1])

    @property
    def laplacian_spectral_radius(self) -> float:
        return float(self.eigenvalues[-1])

    def pseudo_inverse(self) -> np.ndarray:
        """Moore-Penrose inverse via the eigendecomposition, zeroing the null mode."""
        inv = np.zeros_like(self.eigenvalues)
        inv[1:] = 1.0 / self.eigenvalues[1:]
        return (self.eigenvectors * inv) @ self.eigenvectors.T

    def pseudo_determinant(self, scale: float = 1.0) -> float:
        """det* of (scale * L): product of the nonzero eigenvalues of scale*L."""
        return float(scale ** (self.n - 1) * np.prod(self.eigenvalues[1:]))


def _validate_edges(edges, n: int) -> frozenset[tuple[int, int]]:
    normalized = set()
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) references a node outside 0..{n - 1}")
        if i == j:
            continue  # self-loops carry no exchanged noise and no mixing benefit
        normalized.add((min(i, j), max(i, j)))
    return frozenset(normalized)


def _is_connected(edge_set: frozenset[tuple[int, int]], n: int) -> bool:
    if n == 1:
        return True
    adj: list[list[int]] = [[] for _ in range(n)]
    for i, j in edge_set:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def metropolis_weights(edge_set: frozenset[tuple[int, int]], n: int) -> np.ndarray:
    """Symmetric doubly stochastic mixing matrix, w_ij = 1/(1+max(deg_i, deg_j))."""
    deg = np.zeros(n, dtype=int)
    for i, j in edge_set:
        deg[i] += 1
        deg[j] += 1
    w = np.zeros((n, n))
    for i, j in edge_set:
        w[i, j] = w[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    np.fill_diagonal(w, 1.0 - w.sum(axis=1))
    return w


def build_network(edges, n: int) -> Network:
    """Assemble a Network from an edge list; rejects disconnected graphs."""
    if n < 1:
        raise ValueError("need at least one agent")
    edge_set = _validate_edges(edges, n)
    if not _is_connected(edge_set, n):
        raise DisconnectedGraphError(
            "graph is disconnected: the second Laplacian eigenvalue vanishes"
        )
    lap = np.zeros((n, n))
    for i, j in edge_set:
        lap[i, j] = lap[j, i] = -1.0
    np.fill_diagonal(lap, -lap.sum(axis=1))
    eigenvalues, eigenvectors = np.linalg.eigh(lap)
    eigenvalues = eigenvalues.copy()
    eigenvalues[0] = 0.0  # exact by structure (row sums are zero)
    eigenvalues.setflags(write=False)
    eigenvectors.setflags(write=False)
    lap.setflags(write=False)
    w = metropolis_weights(edge_set, n)
    w.setflags(write=False)
    return Network(
        n=n,
        edges=edge_set,
        weights=w,
        laplacian=lap,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
    )


def path_graph(n: int) -> Network:
    return build_network([(i, i + 1) for i in range(n - 1)], n)


def ring_graph(n: int) -> Network:
    if n < 3:
        raise ValueError("a ring needs at least 3 nodes")
    return build_network([(i, (i + 1) % n) for i in range(n)], n)


def complete_graph(n: int) -> Network:
    return build_network([(i, j) for i in range(n) for j in range(i + 1, n)], n)


def ring_chord_graph(n: int) -> Network:
    """Ring plus one chord (0, n//2): the default small-world-ish test topology."""
    edges = [(i, (i + 1) % n) for i in range(n)]
    edges.append((0, n // 2))
    return build_network(edges, n)


def erdos_renyi_graph(n: int, p: float, seed: int, max_tries: int = 1000) -> Network:
    """G(n, p) resampled until connected; deterministic given seed."""
    if not 0.0 < p <= 1.0:
        raise ValueError("edge probability must lie in (0, 1]")
    rng = np.random.default_rng([seed, n])
    for _ in range(max_tries):
        mask = rng.random((n, n)) < p
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if mask[i, j]]
        edge_set = _validate_edges(edges, n)
        if _is_connected(edge_set, n):
            return build_network(edges, n)
    raise DisconnectedGraphError(f"no connected G({n},{p}) sample in {max_tries} tries")


_GENERATORS = {
    "path": path_graph,
    "ring": ring_graph,
    "complete": complete_graph,
    "ring_chord": ring_chord_graph,
}


def from_spec(spec: dict) -> Network:
    """Build a network from a config mapping.

    Either {"edges": [[i, j], ...], "n": n} or {"kind": name, "n": n}
    with kind in path/ring/complete/ring_chord/erdos_renyi (the latter
    takes "p" and "seed").
    """
    n = int(spec["n"])
    if "edges" in spec:
        return build_network([tuple(e) for e in spec["edges"]], n)
    kind = spec.get("kind")
    if kind == "erdos_renyi":
        return erdos_renyi_graph(n, float(spec["p"]), int(spec.get("seed", 0)))
    if kind in _GENERATORS:
        return _GENERATORS[kind](n)
    raise ValueError(f"unknown graph kind {kind!r}")
