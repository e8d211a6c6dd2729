"""Graph containers, file loaders, hop neighbourhoods, splits and synthetic data.

Node ids are dense integers ``0..N-1``.  Structure is stored as CSR arrays of
out-neighbours; undirected graphs store both arc directions.  Edge *lists*
returned by the split helpers use one entry per edge: ordered ``(src, dst)``
pairs for directed graphs, ``(min, max)`` pairs for undirected ones.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

Edge = tuple[int, int]


class GraphFormatError(ValueError):
    """Malformed input file or out-of-range id."""


class InfeasibleSplitError(ValueError):
    """Requested split cannot satisfy its constraints."""


@dataclass(frozen=True)
class AttributedGraph:
    num_nodes: int
    directed: bool
    indptr: np.ndarray
    indices: np.ndarray
    attributes: np.ndarray | sp.csr_matrix | None = None
    labels: np.ndarray | None = None  # -1 marks an unlabeled node
    num_classes: int = 0
    dropped_self_loops: int = 0
    dropped_duplicates: int = 0

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges: Iterable[Sequence[int]],
        directed: bool,
        attributes=None,
        labels=None,
        num_classes: int = 0,
    ) -> "AttributedGraph":
        """Build a graph, dropping self-loops and duplicate arcs.

        Undirected input is symmetrised, so ``(u, v)`` and ``(v, u)`` given
        together count as one edge and not as a duplicate.
        """
        arr = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
            raise GraphFormatError(f"edge endpoint out of range for N={num_nodes}")
        loops = arr[:, 0] == arr[:, 1]
        n_loops = int(loops.sum())
        arr = arr[~loops]
        if directed:
            keys = arr[:, 0] * num_nodes + arr[:, 1]
        else:
            lo, hi = np.minimum(arr[:, 0], arr[:, 1]), np.maximum(arr[:, 0], arr[:, 1])
            keys = lo * num_nodes + hi
        uniq = np.unique(keys)
        n_dup = len(keys) - len(uniq)
        src, dst = uniq // num_nodes, uniq % num_nodes
        if not directed:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=num_nodes), out=indptr[1:])
        if n_loops or n_dup:
            logger.warning("dropped %d self-loops and %d duplicate edges", n_loops, n_dup)
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
        return cls(
            num_nodes=num_nodes,
            directed=directed,
            indptr=indptr,
            indices=dst.astype(np.int64),
            attributes=attributes,
            labels=labels,
            num_classes=num_classes,
            dropped_self_loops=n_loops,
            dropped_duplicates=n_dup,
        )

    def with_edges(self, edges: Iterable[Sequence[int]]) -> "AttributedGraph":
        """Same nodes, attributes and labels; structure replaced by ``edges``."""
        return AttributedGraph.from_edges(
            self.num_nodes, edges, self.directed, self.attributes, self.labels, self.num_classes
        )

    def out_neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node] : self.indptr[node + 1]]

    @property
    def out_edges(self) -> dict[int, list[int]]:
        return {i: self.out_neighbors(i).tolist() for i in range(self.num_nodes)}

    @property
    def num_arcs(self) -> int:
        return len(self.indices)

    def edge_list(self) -> list[Edge]:
        """One entry per edge (``u < v`` for undirected graphs)."""
        src = np.repeat(np.arange(self.num_nodes), np.diff(self.indptr))
        dst = self.indices
        if not self.directed:
            keep = src < dst
            src, dst = src[keep], dst[keep]
        return list(zip(src.tolist(), dst.tolist()))

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.float64)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes,) * 2)

    def has_edge(self, u: int, v: int) -> bool:
        nbrs = self.out_neighbors(u)
        pos = np.searchsorted(nbrs, v)
        return bool(pos < len(nbrs) and nbrs[pos] == v)

    def edge_keys(self) -> np.ndarray:
        """Sorted int64 keys ``u*N+v`` of every stored arc."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.indptr))
        return src * self.num_nodes + self.indices

    def degrees(self) -> np.ndarray:
        """Number of incident edges per node (in + out for directed graphs)."""
        out = np.diff(self.indptr)
        if not self.directed:
            return out
        return out + np.bincount(self.indices, minlength=self.num_nodes)

    def feature_matrix(self, one_hot: bool = False):
        """Attribute matrix, or the identity when ``one_hot`` (plain graphs)."""
        if one_hot:
            return sp.identity(self.num_nodes, dtype=np.float64, format="csr")
        if self.attributes is None:
            raise ValueError("graph has no attributes; use one-hot mode")
        return self.attributes

    def replace(self, **changes) -> "AttributedGraph":
        from dataclasses import replace

        return replace(self, **changes)


# --------------------------------------------------------------------------
# loaders
# --------------------------------------------------------------------------


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_edge_list(path, directed: bool, num_nodes_hint: int | None = None) -> AttributedGraph:
    """Read a tab/space separated ``src dst`` edge list."""
    pairs = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphFormatError(f"{path}:{lineno}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise GraphFormatError(f"{path}:{lineno}: negative node id")
        if num_nodes_hint is not None and max(u, v) >= num_nodes_hint:
            raise GraphFormatError(
                f"{path}:{lineno}: node id {max(u, v)} >= declared N={num_nodes_hint}"
            )
        pairs.append((u, v))
    n = max((max(p) for p in pairs), default=-1) + 1
    if num_nodes_hint is not None:
        n = max(n, num_nodes_hint)
    return AttributedGraph.from_edges(n, pairs, directed)


def load_attributes(path, graph: AttributedGraph | None = None, sparse: bool = False):
    """Read a ``%%g2g-attrs N D`` triplet file.

    Returns the graph with attributes attached, or the bare matrix when
    ``graph`` is None (used when embedding nodes unseen during training).
    """
    header = None
    rows, cols, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if header is None:
                parts = line.split()
                if len(parts) != 3 or parts[0] != "%%g2g-attrs":
                    raise GraphFormatError(f"{path}:{lineno}: missing '%%g2g-attrs N D' header")
                header = (int(parts[1]), int(parts[2]))
                continue
            if line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise GraphFormatError(f"{path}:{lineno}: expected 'node<TAB>feature<TAB>value'")
            try:
                r, c, x = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: cannot parse {line!r}") from None
            if not (0 <= r < header[0]):
                raise GraphFormatError(f"{path}:{lineno}: node {r} out of range N={header[0]}")
            if not (0 <= c < header[1]):
                raise GraphFormatError(f"{path}:{lineno}: feature {c} out of range D={header[1]}")
            rows.append(r)
            cols.append(c)
            vals.append(x)
    if header is None:
        raise GraphFormatError(f"{path}: empty attribute file")
    n, d = header
    if graph is not None and n != graph.num_nodes:
        raise GraphFormatError(f"attribute file has N={n} but graph has N={graph.num_nodes}")
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, d), dtype=np.float64)
    mat.sum_duplicates()
    attrs = mat if sparse else mat.toarray()
    if graph is None:
        return attrs
    return graph.replace(attributes=attrs)


def load_labels(path, graph: AttributedGraph) -> AttributedGraph:
    if path is None or not Path(path).exists():
        raise FileNotFoundError(f"labels required: {path!r} not found")
    labels = np.full(graph.num_nodes, -1, dtype=np.int64)
    classes: dict[str, int] = {}
    for lineno, line in _data_lines(path):
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise GraphFormatError(f"{path}:{lineno}: expected 'node<TAB>label'")
        node = int(parts[0])
        if not (0 <= node < graph.num_nodes):
            raise GraphFormatError(f"{path}:{lineno}: unknown node {node}")
        if labels[node] != -1:
            raise GraphFormatError(f"{path}:{lineno}: node {node} labeled twice")
        labels[node] = classes.setdefault(parts[1].strip(), len(classes))
    return graph.replace(labels=labels, num_classes=len(classes))


# --------------------------------------------------------------------------
# hop neighbourhoods
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HopNeighborhoods:
    """Partition of ``V \\ {anchor}`` by truncated shortest-path distance."""

    anchor: int
    max_hop: int
    sets: list[np.ndarray]

    @property
    def cardinalities(self) -> list[int]:
        return [len(s) for s in self.sets]


def _symmetrized(graph: AttributedGraph) -> AttributedGraph:
    if not graph.directed:
        return graph
    src = np.repeat(np.arange(graph.num_nodes), np.diff(graph.indptr))
    edges = np.concatenate([np.c_[src, graph.indices], np.c_[graph.indices, src]])
    return AttributedGraph.from_edges(graph.num_nodes, edges, directed=True)


def compute_hop_sets(
    graph: AttributedGraph, anchor: int, K: int, undirected_hops: bool = False
) -> HopNeighborhoods:
    """Truncated BFS from ``anchor`` following out-edges.

    Nodes at distance ``k < K`` land in ``sets[k-1]``; everything else
    (distance >= K or unreachable) lands in ``sets[K-1]``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    n = graph.num_nodes
    if not (0 <= anchor < n):
        raise IndexError(f"anchor {anchor} out of range for N={n}")
    if undirected_hops:
        graph = _symmetrized(graph)
    dist = np.full(n, -1, dtype=np.int64)
    dist[anchor] = 0
    frontier = np.array([anchor])
    sets = []
    for k in range(1, K):
        if len(frontier):
            nbrs = np.concatenate([graph.out_neighbors(u) for u in frontier])
            nbrs = np.unique(nbrs)
            frontier = nbrs[dist[nbrs] < 0]
            dist[frontier] = k
        sets.append(frontier)
    sets.append(np.flatnonzero(dist < 0))
    return HopNeighborhoods(anchor, K, sets)


@dataclass(frozen=True)
class HopIndex:
    """Hop sets for every anchor at once.

    ``near[k-1]`` (for ``k < K``) is a CSR matrix whose row ``i`` lists
    ``N_ik``; the far bucket ``N_iK`` is kept implicit (it is the complement)
    and only its size is stored.  ``counts[i, k-1] = |N_ik|``.
    """

    num_nodes: int
    K: int
    near: list[sp.csr_matrix]
    counts: np.ndarray
    near_keys: np.ndarray  # sorted i*N+j over all near sets

    def hop_sets(self, anchor: int) -> HopNeighborhoods:
        sets = [m.indices[m.indptr[anchor] : m.indptr[anchor + 1]] for m in self.near]
        mask = np.ones(self.num_nodes, dtype=bool)
        mask[anchor] = False
        for s in sets:
            mask[s] = False
        sets.append(np.flatnonzero(mask))
        return HopNeighborhoods(anchor, self.K, sets)

    def hop_of(self, anchor: int, node: int) -> int:
        for k, m in enumerate(self.near, start=1):
            row = m.indices[m.indptr[anchor] : m.indptr[anchor + 1]]
            pos = np.searchsorted(row, node)
            if pos < len(row) and row[pos] == node:
                return k
        return self.K

    def in_near(self, anchors: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        keys = np.asarray(anchors, dtype=np.int64) * self.num_nodes + nodes
        pos = np.searchsorted(self.near_keys, keys)
        pos = np.minimum(pos, max(len(self.near_keys) - 1, 0))
        if not len(self.near_keys):
            return np.zeros(len(keys), dtype=bool)
        return self.near_keys[pos] == keys

    def triplet_counts(self) -> np.ndarray:
        """Per-anchor number of ranking triplets, sum_{k<l} |N_ik| |N_il|."""
        c = self.counts.astype(np.float64)
        total = c.sum(axis=1)
        return ((total**2 - (c**2).sum(axis=1)) / 2).round().astype(np.int64)

    def hop_matrix(self) -> np.ndarray:
        """Dense N x N matrix of ``min(sp, K)`` (0 on the diagonal)."""
        out = np.full((self.num_nodes,) * 2, self.K, dtype=np.int64)
        for k, m in enumerate(self.near, start=1):
            coo = m.tocoo()
            out[coo.row, coo.col] = k
        np.fill_diagonal(out, 0)
        return out


def build_hop_index(graph: AttributedGraph, K: int, undirected_hops: bool = False) -> HopIndex:
    """Hop sets for all anchors via level-synchronous sparse BFS."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if undirected_hops:
        graph = _symmetrized(graph)
    n = graph.num_nodes
    adj = graph.adjacency().astype(bool).astype(np.int8)
    visited = sp.identity(n, dtype=np.int8, format="csr")
    frontier = visited
    near = []
    for _ in range(1, K):
        reach = (frontier @ adj).astype(bool).astype(np.int8)
        frontier = (reach - reach.multiply(visited)).tocsr()
        frontier.eliminate_zeros()
        frontier.sort_indices()
        visited = (visited + frontier).tocsr()
        near.append(frontier.astype(bool).tocsr())
    counts = np.zeros((n, K), dtype=np.int64)
    for k, m in enumerate(near):
        counts[:, k] = np.diff(m.indptr)
    counts[:, K - 1] = n - 1 - counts[:, : K - 1].sum(axis=1)
    keys = [
        np.repeat(np.arange(n, dtype=np.int64), np.diff(m.indptr)) * n + m.indices
        for m in near
    ]
    near_keys = np.sort(np.concatenate(keys)) if keys else np.zeros(0, dtype=np.int64)
    return HopIndex(n, K, near, counts, near_keys)


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------


@dataclass
class DataSplit:
    train_edges: list[Edge]
    val_edges: list[Edge]
    test_edges: list[Edge]
    val_non_edges: list[Edge]
    test_non_edges: list[Edge]
    hidden_nodes: list[int] | None = None

    def train_graph(self, graph: AttributedGraph) -> AttributedGraph:
        return graph.with_edges(self.train_edges)

    def to_dict(self) -> dict:
        return {
            "train_edges": [list(e) for e in self.train_edges],
            "val_edges": [list(e) for e in self.val_edges],
            "test_edges": [list(e) for e in self.test_edges],
            "val_non_edges": [list(e) for e in self.val_non_edges],
            "test_non_edges": [list(e) for e in self.test_non_edges],
            "hidden_nodes": self.hidden_nodes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DataSplit":
        pairs = lambda key: [tuple(e) for e in d.get(key, [])]  # noqa: E731
        return cls(
            pairs("train_edges"),
            pairs("val_edges"),
            pairs("test_edges"),
            pairs("val_non_edges"),
            pairs("test_non_edges"),
            d.get("hidden_nodes"),
        )


def greedy_edge_cover(num_nodes: int, edges: Sequence[Edge]) -> list[int]:
    """Indices into ``edges`` forming an edge cover.

    Maximal matching first, then one incident edge for each node the matching
    left uncovered.  Raises if some node has no incident edge at all.
    """
    covered = np.zeros(num_nodes, dtype=bool)
    chosen = []
    for idx, (u, v) in enumerate(edges):
        if not covered[u] and not covered[v]:
            covered[u] = covered[v] = True
            chosen.append(idx)
    if covered.all():
        return chosen
    for idx, (u, v) in enumerate(edges):
        if not covered[u] or not covered[v]:
            covered[u] = covered[v] = True
            chosen.append(idx)
    if not covered.all():
        missing = np.flatnonzero(~covered)[:5].tolist()
        raise InfeasibleSplitError(f"edge cover infeasible: isolated nodes {missing}")
    return sorted(chosen)


def _pair_keys(pairs, n: int, directed: bool) -> np.ndarray:
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if not directed:
        arr = np.sort(arr, axis=1)
    return arr[:, 0] * n + arr[:, 1]


def sample_non_edges(
    graph: AttributedGraph,
    count: int,
    exclude: Iterable[Edge] = (),
    seed=None,
) -> list[Edge]:
    """Uniform rejection sampling of node pairs that are not edges.

    Directed graphs draw ordered pairs, undirected graphs unordered pairs
    (returned as ``(min, max)``).  Self-loops, edges, members of ``exclude``
    and repeats are rejected.
    """
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    total = n * (n - 1) if graph.directed else n * (n - 1) // 2
    edge_keys = graph.edge_keys()
    if not graph.directed:
        edge_keys = edge_keys[edge_keys // n < edge_keys % n]
    excl = np.unique(_pair_keys(exclude, n, graph.directed))
    excl = excl[excl // n != excl % n]
    blocked = np.union1d(edge_keys, excl)
    available = total - len(blocked)
    if count > available:
        raise InfeasibleSplitError(f"requested {count} non-edges but only {available} exist")
    out: list[int] = []
    seen = set(blocked.tolist())
    while len(out) < count:
        need = count - len(out)
        batch = max(16, 2 * need)
        u = rng.integers(0, n, size=batch)
        v = rng.integers(0, n, size=batch)
        for a, b in zip(u.tolist(), v.tolist()):
            if a == b:
                continue
            if not graph.directed and a > b:
                a, b = b, a
            key = a * n + b
            if key in seen:
                continue
            seen.add(key)
            out.append(key)
            if len(out) == count:
                break
    return [(k // n, k % n) for k in out]


def split_edges(
    graph: AttributedGraph,
    val_frac: float = 0.05,
    test_frac: float = 0.10,
    edge_cover: bool = False,
    seed=None,
) -> DataSplit:
    """Random edge split with equally sized non-edge sets.

    With ``edge_cover`` a greedy edge cover is pinned into the training edges
    so every node keeps at least one training edge.
    """
    if val_frac < 0 or test_frac < 0 or val_frac + test_frac >= 1:
        raise ValueError("need 0 <= val_frac, test_frac and val_frac + test_frac < 1")
    rng = np.random.default_rng(seed)
    edges = graph.edge_list()
    m = len(edges)
    n_val = int(round(val_frac * m))
    n_test = int(round(test_frac * m))
    pinned: list[int] = []
    if edge_cover:
        pinned = greedy_edge_cover(graph.num_nodes, edges)
        if m - n_val - n_test < len(pinned):
            raise InfeasibleSplitError(
                f"train fraction too small for edge cover ({len(pinned)} of {m} edges needed)"
            )
    pinned_mask = np.zeros(m, dtype=bool)
    pinned_mask[pinned] = True
    free = rng.permutation(np.flatnonzero(~pinned_mask))
    val_idx = np.sort(free[:n_val])
    test_idx = np.sort(free[n_val : n_val + n_test])
    train_idx = np.sort(np.concatenate([np.flatnonzero(pinned_mask), free[n_val + n_test :]]))
    non_edges = sample_non_edges(graph, n_val + n_test, seed=rng)
    return DataSplit(
        train_edges=[edges[i] for i in train_idx],
        val_edges=[edges[i] for i in val_idx],
        test_edges=[edges[i] for i in test_idx],
        val_non_edges=non_edges[:n_val],
        test_non_edges=non_edges[n_val:],
    )


@dataclass
class HiddenNodeSplit:
    """Training graph restricted to visible nodes plus everything held out.

    ``graph`` is relabelled to ``0..len(visible)-1``; ``visible[k]`` is the
    original id of training node ``k``.  ``held_out`` uses original ids.
    """

    graph: AttributedGraph
    hidden: np.ndarray
    visible: np.ndarray
    held_out: list[Edge] = field(default_factory=list)


def hide_nodes(graph: AttributedGraph, fraction: float, seed=None) -> HiddenNodeSplit:
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    raw = math.floor(fraction * n)
    if raw == 0:
        logger.warning("fraction %.3g of N=%d rounds to 0 hidden nodes; hiding 1", fraction, n)
    n_hidden = max(1, raw)
    if n - n_hidden < 2:
        raise InfeasibleSplitError("training graph would keep fewer than 2 nodes")
    hidden = np.sort(rng.choice(n, size=n_hidden, replace=False))
    is_hidden = np.zeros(n, dtype=bool)
    is_hidden[hidden] = True
    visible = np.flatnonzero(~is_hidden)
    remap = np.full(n, -1, dtype=np.int64)
    remap[visible] = np.arange(len(visible))
    kept, held = [], []
    for u, v in graph.edge_list():
        if is_hidden[u] or is_hidden[v]:
            held.append((u, v))
        else:
            kept.append((int(remap[u]), int(remap[v])))
    attrs = graph.attributes
    if attrs is not None:
        attrs = attrs[visible]
    labels = graph.labels[visible] if graph.labels is not None else None
    sub = AttributedGraph.from_edges(
        len(visible), kept, graph.directed, attrs, labels, graph.num_classes
    )
    return HiddenNodeSplit(sub, hidden, visible, held)


# --------------------------------------------------------------------------
# synthetic data
# --------------------------------------------------------------------------


def _block_sizes(n: int, blocks: int) -> np.ndarray:
    sizes = np.full(blocks, n // blocks)
    sizes[: n % blocks] += 1
    return sizes


def generate_sbm(
    n: int,
    blocks: int,
    p_in: float,
    p_out: float,
    attr_dim: int = 32,
    attr_noise: float = 0.1,
    seed=None,
) -> AttributedGraph:
    """Undirected stochastic block model with block-informative attributes.

    Each block owns a centroid: the block's one-hot indicator pushed through a
    fixed ``blocks x attr_dim`` standard-normal projection.  Node attributes
    are their block centroid plus i.i.d. Gaussian noise of std ``attr_noise``.
    """
    if not 0 <= p_out < p_in <= 1:
        raise ValueError("need 0 <= p_out < p_in <= 1")
    if n < 1 or blocks < 1 or blocks > n or attr_dim < 1 or attr_noise < 0:
        raise ValueError("invalid SBM size parameters")
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(blocks), _block_sizes(n, blocks))
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.c_[iu[keep], ju[keep]]
    projection = rng.standard_normal((blocks, attr_dim))
    attrs = projection[labels] + attr_noise * rng.standard_normal((n, attr_dim))
    return AttributedGraph.from_edges(n, edges, False, attrs, labels, blocks)


def plant_bridges(
    graph: AttributedGraph, count: int, links_per_block: int = 3, seed=None
) -> tuple[AttributedGraph, np.ndarray]:
    """Turn ``count`` random nodes into bridges between all blocks.

    A bridge gains ``links_per_block`` edges into every other block and its
    attribute row becomes the mean of its neighbours' rows, so its features
    mix the communities it touches.  Returns the new graph and bridge ids.
    """
    if graph.labels is None or graph.attributes is None:
        raise ValueError("bridges need labels and dense attributes")
    rng = np.random.default_rng(seed)
    labels = graph.labels
    bridges = np.sort(rng.choice(graph.num_nodes, size=count, replace=False))
    edges = list(graph.edge_list())
    for b in bridges.tolist():
        for c in range(graph.num_classes):
            if c == labels[b]:
                continue
            members = np.flatnonzero(labels == c)
            for t in rng.choice(members, size=min(links_per_block, len(members)), replace=False):
                edges.append((b, int(t)))
    new = graph.with_edges(edges)
    attrs = np.array(graph.attributes, dtype=np.float64, copy=True)
    for b in bridges.tolist():
        nbrs = new.out_neighbors(b)
        attrs[b] = graph.attributes[nbrs].mean(axis=0)
    return new.replace(attributes=attrs), bridges
