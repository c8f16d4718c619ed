"""Social Distance Attachment network, connectivity repair and communities."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .rng import as_generator

# pairwise mean wealth distance is divided by this to give b
DISTANCE_DIVISOR = 15.0


class ConvergenceError(RuntimeError):
    """Label propagation did not reach a stable labeling within its budget."""


@dataclass
class SocialGraph:
    n_nodes: int
    edges: np.ndarray  # (E, 2) int array, i < j, lexicographically sorted
    homophily: float = float("nan")
    characteristic_distance: float = float("nan")
    _adjacency: list | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("self-loops are not allowed")
            e = np.sort(e, axis=1)
            e = np.unique(e, axis=0)
            if e.min() < 0 or e.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range")
        self.edges = e

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def adjacency(self) -> list[np.ndarray]:
        if self._adjacency is None:
            nbrs = [[] for _ in range(self.n_nodes)]
            for i, j in self.edges.tolist():
                nbrs[i].append(j)
                nbrs[j].append(i)
            self._adjacency = [np.array(sorted(x), dtype=np.int64) for x in nbrs]
        return self._adjacency

    def components(self) -> tuple[int, np.ndarray]:
        n = self.n_nodes
        m = coo_matrix((np.ones(len(self.edges)), (self.edges[:, 0], self.edges[:, 1])), shape=(n, n))
        return connected_components(m, directed=False)

    def is_connected(self) -> bool:
        return self.components()[0] == 1


@dataclass
class CommunityAssignment:
    core_label: np.ndarray
    members: list[np.ndarray]
    extended_membership: list[tuple[int, ...]] | None = None

    @property
    def n_communities(self) -> int:
        return len(self.members)

    def membership_counts(self) -> np.ndarray:
        if self.extended_membership is None:
            return np.ones(len(self.core_label), dtype=np.int64)
        return np.array([len(m) for m in self.extended_membership], dtype=np.int64)

    def eligible_agents(self, community: int) -> np.ndarray:
        """Agents whose extended membership includes ``community``."""
        if self.extended_membership is None:
            return self.members[community]
        return np.array([i for i, m in enumerate(self.extended_membership) if community in m], dtype=np.int64)


def sample_initial_wealth(n: int, mean: float = 10.0, sd: float = 1.0, seed=None) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two agents")
    if sd <= 0:
        raise ValueError("sd must be positive")
    return as_generator(seed).normal(mean, sd, size=n)


def characteristic_distance(w) -> float:
    """Mean absolute pairwise wealth difference over DISTANCE_DIVISOR."""
    w = np.asarray(w, dtype=float)
    n = len(w)
    if n < 2:
        raise ValueError("need at least two agents")
    # sum_{i<j} |w_i - w_j| from the sorted order statistics
    s = np.sort(w)
    k = np.arange(n)
    pair_sum = float(np.sum((2 * k - n + 1) * s))
    return pair_sum / (n * (n - 1) / 2) / DISTANCE_DIVISOR


def edge_probability(d, b: float, alpha: float):
    """1 / (1 + (d/b)^alpha); with b == 0 only zero distances connect."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or b < 0 or alpha <= 0:
        raise ValueError("need d >= 0, b >= 0 and alpha > 0")
    if b == 0:
        out = np.where(d == 0, 1.0, 0.0)
    else:
        with np.errstate(over="ignore"):
            out = 1.0 / (1.0 + (d / b) ** alpha)
    return out if out.ndim else float(out)


def build_sda_graph(w, alpha: float, seed=None) -> SocialGraph:
    """Sample every pair with the SDA probability, then repair connectivity."""
    w = np.asarray(w, dtype=float)
    n = len(w)
    if n < 2:
        raise ValueError("need at least two agents")
    rng = as_generator(seed)
    b = characteristic_distance(w)
    iu, ju = np.triu_indices(n, k=1)
    p = edge_probability(np.abs(w[iu] - w[ju]), b, alpha)
    keep = rng.random(len(iu)) < p
    g = SocialGraph(n, np.column_stack([iu[keep], ju[keep]]), alpha, b)
    return repair_connectivity(g, w, rng)


def repair_connectivity(g: SocialGraph, w, seed=None) -> SocialGraph:
    """Attach every minor component to the largest one.

    A uniformly chosen node of each minor component is linked to the
    wealth-closest node of the largest component (lowest index on ties).
    """
    w = np.asarray(w, dtype=float)
    rng = as_generator(seed)
    n_comp, labels = g.components()
    if n_comp <= 1:
        return g
    sizes = np.bincount(labels, minlength=n_comp)
    big = int(np.argmax(sizes))
    big_nodes = np.flatnonzero(labels == big)
    new_edges = []
    for c in range(n_comp):
        if c == big:
            continue
        nodes = np.flatnonzero(labels == c)
        v = int(nodes[rng.integers(len(nodes))])
        u = int(big_nodes[np.argmin(np.abs(w[big_nodes] - w[v]))])
        new_edges.append((min(u, v), max(u, v)))
    edges = np.vstack([g.edges, np.array(new_edges, dtype=np.int64)])
    return SocialGraph(g.n_nodes, edges, g.homophily, g.characteristic_distance)


def greedy_coloring(g: SocialGraph) -> np.ndarray:
    """Proper colouring, nodes visited by decreasing degree then index."""
    adj = g.adjacency
    degree = np.array([len(a) for a in adj])
    order = sorted(range(g.n_nodes), key=lambda i: (-degree[i], i))
    color = np.full(g.n_nodes, -1, dtype=np.int64)
    for v in order:
        used = {int(color[u]) for u in adj[v] if color[u] >= 0}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color


def _dominant_labels(v: int, labels: np.ndarray, adj) -> list[int]:
    nbrs = adj[v]
    if len(nbrs) == 0:
        return [int(labels[v])]
    counts = Counter(labels[nbrs].tolist())
    top = max(counts.values())
    return sorted(lab for lab, c in counts.items() if c == top)


def _is_stable(labels: np.ndarray, adj) -> bool:
    return all(int(labels[v]) in _dominant_labels(v, labels, adj) for v in range(len(labels)))


def detect_communities(g: SocialGraph, seed=None, max_sweeps: int = 100) -> CommunityAssignment:
    """Semi-synchronous label propagation over a proper colouring.

    Nodes of one colour class share no edges, so they are updated together.
    A node keeps its label while it is among the most frequent neighbour
    labels; otherwise it adopts one of them uniformly at random. Stops at a
    stable labeling; ``max_sweeps`` full passes (max_sweeps * N node
    updates) without one raise :class:`ConvergenceError`.
    """
    rng = as_generator(seed)
    adj = g.adjacency
    color = greedy_coloring(g)
    classes = [np.flatnonzero(color == c) for c in range(int(color.max()) + 1)] if g.n_nodes else []
    labels = np.arange(g.n_nodes, dtype=np.int64)
    for _ in range(max_sweeps):
        if _is_stable(labels, adj):
            break
        for cls in classes:
            new = labels.copy()
            for v in cls:
                top = _dominant_labels(int(v), labels, adj)
                if int(labels[v]) not in top:
                    new[v] = top[rng.integers(len(top))] if len(top) > 1 else top[0]
            labels = new
    else:
        if not _is_stable(labels, adj):
            raise ConvergenceError(f"label propagation unstable after {max_sweeps} sweeps")
    return _canonical(labels)


def _canonical(labels: np.ndarray) -> CommunityAssignment:
    # community ids ordered by smallest member
    _, first = np.unique(labels, return_index=True)
    remap = {int(labels[i]): k for k, i in enumerate(sorted(first))}
    core = np.array([remap[int(x)] for x in labels], dtype=np.int64)
    members = [np.flatnonzero(core == k) for k in range(len(remap))]
    return CommunityAssignment(core, members)


def extended_membership(g: SocialGraph, c: CommunityAssignment) -> CommunityAssignment:
    core = np.asarray(c.core_label)
    if len(core) != g.n_nodes:
        raise ValueError("assignment does not cover the graph")
    ext = []
    for v, nbrs in enumerate(g.adjacency):
        ext.append(tuple(sorted({int(core[v])} | set(core[nbrs].tolist()))))
    return CommunityAssignment(core, c.members, ext)


@dataclass
class GraphSummary:
    n_communities: int
    size_histogram: dict[int, int]
    degree_histogram: dict[int, int]
    community_sizes: list[int]
    community_degrees: list[int]


def community_degrees(c: CommunityAssignment, g: SocialGraph) -> list[int]:
    """Number of other communities each community shares a cross edge with."""
    core = np.asarray(c.core_label)
    touch = [set() for _ in range(c.n_communities)]
    if g.n_edges:
        a, b = core[g.edges[:, 0]], core[g.edges[:, 1]]
        for x, y in zip(a[a != b].tolist(), b[a != b].tolist()):
            touch[x].add(y)
            touch[y].add(x)
    return [len(t) for t in touch]


def graph_distribution_summary(c: CommunityAssignment, g: SocialGraph) -> GraphSummary:
    sizes = [len(m) for m in c.members]
    degrees = community_degrees(c, g)
    return GraphSummary(
        n_communities=c.n_communities,
        size_histogram=dict(sorted(Counter(sizes).items())),
        degree_histogram=dict(sorted(Counter(degrees).items())),
        community_sizes=sizes,
        community_degrees=degrees,
    )


def write_edge_list(g: SocialGraph, path) -> None:
    with open(path, "w") as fh:
        for i, j in g.edges.tolist():
            fh.write(f"{i} {j}\n")


def read_edge_list(path, n_nodes: int) -> SocialGraph:
    pairs = [tuple(map(int, line.split())) for line in Path(path).read_text().splitlines() if line.strip()]
    return SocialGraph(n_nodes, np.array(pairs, dtype=np.int64).reshape(-1, 2))


def write_communities(c: CommunityAssignment, path) -> None:
    ext = c.extended_membership or [(int(x),) for x in c.core_label]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["node_id", "core_label", "extended_labels"])
        for i, (lab, e) in enumerate(zip(c.core_label.tolist(), ext)):
            out.writerow([i, lab, ";".join(map(str, e))])
