import itertools

import numpy as np
import pytest

from gaussembed.graph import AttributedGraph


def floyd_warshall(graph: AttributedGraph) -> np.ndarray:
    """All-pairs hop distances (inf when unreachable); independent of the BFS code."""
    n = graph.num_nodes
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0)
    for u in range(n):
        for v in graph.out_neighbors(u):
            dist[u, v] = 1
    for k in range(n):
        dist = np.minimum(dist, dist[:, [k]] + dist[[k], :])
    return dist


def random_graph(rng, n, p, directed):
    pairs = itertools.permutations(range(n), 2) if directed else itertools.combinations(range(n), 2)
    edges = [e for e in pairs if rng.random() < p]
    return AttributedGraph.from_edges(n, edges, directed)


@pytest.fixture
def triangle_pendant():
    """Undirected triangle 0-1-2 with pendant 3 attached to 2."""
    return AttributedGraph.from_edges(4, [(0, 1), (1, 2), (0, 2), (2, 3)], directed=False)


@pytest.fixture
def directed_path():
    return AttributedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)], directed=True)


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f`` w.r.t. array ``x`` (perturbed in place)."""
    out = np.zeros_like(x)
    flat, gflat = x.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return out


def rel_err(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)
