"""Undirected agent networks and the spectral quantities the solvers need."""

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eig import jacobi_eigenvalues

__all__ = [
    "Graph",
    "GraphError",
    "GraphSpectrum",
    "compute_spectrum",
    "generate_connected_graph",
    "is_bipartite",
    "is_connected",
    "metropolis_weights",
    "read_edge_list",
    "write_edge_list",
]

SPECTRUM_ZERO_TOL = 1e-9


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Connected undirected graph on agents ``0..n_agents-1``.

    Construct from an adjacency matrix; neighbor lists and degrees are
    derived. Disconnected graphs are rejected unless ``check=False``.
    """

    adjacency: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        W = np.array(self.adjacency, dtype=bool)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {W.shape}")
        if W.shape[0] < 1:
            raise GraphError("graph needs at least one agent")
        if not np.array_equal(W, W.T):
            raise GraphError("adjacency must be symmetric")
        if W.diagonal().any():
            raise GraphError("adjacency must have a zero diagonal (no self-loops)")
        W.setflags(write=False)
        object.__setattr__(self, "adjacency", W)
        nbrs = tuple(tuple(int(j) for j in np.flatnonzero(W[i])) for i in range(W.shape[0]))
        object.__setattr__(self, "neighbor_lists", nbrs)
        deg = W.sum(axis=1).astype(int)
        deg.setflags(write=False)
        object.__setattr__(self, "degrees", deg)
        if self.check and not is_connected(self):
            raise GraphError("graph is not connected")

    @property
    def n_agents(self):
        return self.adjacency.shape[0]

    @property
    def n_edges(self):
        return int(self.adjacency.sum()) // 2

    def edges(self):
        """Edges ``(i, j)`` with ``i < j`` in lexicographic order."""
        return [(i, j) for i in range(self.n_agents) for j in self.neighbor_lists[i] if j > i]

    def csr(self):
        """Neighbor lists in compressed form ``(indptr, indices)`` (int64)."""
        indptr = np.zeros(self.n_agents + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(self.degrees)
        indices = np.fromiter(
            (j for nb in self.neighbor_lists for j in nb), dtype=np.int64, count=int(indptr[-1])
        )
        return indptr, indices

    @classmethod
    def from_edges(cls, n_agents, edges, check=True):
        W = np.zeros((n_agents, n_agents), dtype=bool)
        for i, j in edges:
            if i == j:
                raise GraphError(f"self-loop at agent {i}")
            W[i, j] = W[j, i] = True
        return cls(W, check=check)

    def __eq__(self, other):
        return isinstance(other, Graph) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())


@dataclass(frozen=True)
class GraphSpectrum:
    laplacian: np.ndarray
    lambda_min_d_plus_w: float
    lambda_max_d_plus_w: float
    bipartite: bool


def is_connected(g):
    n = g.n_agents
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in g.neighbor_lists[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def two_coloring(g):
    """A proper 2-coloring as an int array, or ``None`` if none exists."""
    n = g.n_agents
    color = np.full(n, -1, dtype=int)
    for root in range(n):
        if color[root] >= 0:
            continue
        color[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in g.neighbor_lists[u]:
                if color[v] < 0:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return None
    return color


def is_bipartite(g):
    return two_coloring(g) is not None


def compute_spectrum(g):
    """Laplacian and the extreme eigenvalues of ``D + W``.

    ``lambda_min(D + W)`` is clamped to exactly 0 when it lies within the
    eigensolver tolerance of 0 (relative to ``lambda_max``).
    """
    W = g.adjacency.astype(float)
    D = np.diag(g.degrees.astype(float))
    L = D - W
    eig = jacobi_eigenvalues(D + W)
    lmin, lmax = float(eig[0]), float(eig[-1])
    if abs(lmin) <= SPECTRUM_ZERO_TOL * max(lmax, 1.0):
        lmin = 0.0
    return GraphSpectrum(
        laplacian=L,
        lambda_min_d_plus_w=lmin,
        lambda_max_d_plus_w=lmax,
        bipartite=is_bipartite(g),
    )


def _add_odd_cycle_chord(W, color):
    # any edge inside one color class closes an odd cycle in a connected graph
    n = W.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            if color[i] == color[j] and not W[i, j]:
                W[i, j] = W[j, i] = True
                return W
    raise GraphError("cannot make graph non-bipartite: no same-color pair to join")


def generate_connected_graph(n_agents, edge_probability, seed, force_non_bipartite=False, max_tries=1000):
    """Symmetric Erdos-Renyi graph, resampled until connected.

    With `force_non_bipartite`, a bipartite sample gets one extra edge joining
    two same-colored agents, which closes an odd cycle.
    """
    if n_agents < 2:
        raise GraphError("need at least 2 agents for a consensus network")
    if not 0.0 < edge_probability <= 1.0:
        raise GraphError(f"edge_probability must lie in (0, 1], got {edge_probability}")
    if force_non_bipartite and n_agents < 3:
        raise GraphError("a non-bipartite graph needs at least 3 agents")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n_agents, k=1)
    for _ in range(max_tries):
        W = np.zeros((n_agents, n_agents), dtype=bool)
        W[iu] = rng.random(iu[0].size) < edge_probability
        W = W | W.T
        g = Graph(W, check=False)
        if not is_connected(g):
            continue
        if force_non_bipartite:
            color = two_coloring(g)
            if color is not None:
                g = Graph(_add_odd_cycle_chord(W.copy(), color))
        return g
    raise GraphError(
        f"no connected sample in {max_tries} tries at edge_probability={edge_probability}; "
        "raise the probability or max_tries"
    )


def metropolis_weights(g):
    """Doubly stochastic Metropolis mixing matrix of `g`."""
    n = g.n_agents
    deg = g.degrees
    M = np.zeros((n, n))
    for i in range(n):
        for j in g.neighbor_lists[i]:
            M[i, j] = 1.0 / (1.0 + max(deg[i], deg[j]))
        M[i, i] = 1.0 - M[i].sum()
    return M


def write_edge_list(g, path):
    lines = [f"agents {g.n_agents}"] + [f"{i} {j}" for i, j in g.edges()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path):
    n = None
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if n is None:
            if len(parts) != 2 or parts[0] != "agents":
                raise GraphError(f"{path}:{lineno}: expected header 'agents N'")
            n = int(parts[1])
            continue
        if len(parts) != 2:
            raise GraphError(f"{path}:{lineno}: expected 'i j'")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"{path}:{lineno}: agent index out of range")
        edges.append((i, j))
    if n is None:
        raise GraphError(f"{path}: missing 'agents N' header")
    return Graph.from_edges(n, edges)
