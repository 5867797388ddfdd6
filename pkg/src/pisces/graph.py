"""Social graphs and the Metropolis-Hastings transition model.

Graphs are stored in compressed sparse row form: ``indptr`` and ``indices``
hold the sorted neighbor list of every node, and ``labels`` tags each node
as honest, malicious or sybil. Node ids are dense integers in ``[0, n)``.
"""

from __future__ import annotations

import csv
from collections import namedtuple
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from ._config import HONEST, MALICIOUS, SYBIL, TOL


class GraphError(ValueError):
    pass


class EdgeListParseError(GraphError):
    def __init__(self, lineno, line, reason):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {reason}: {line!r}")


class DisconnectedGraphError(GraphError):
    pass


Connectivity = namedtuple("Connectivity", ["connected", "components"])


class SocialGraph:
    """Undirected simple graph with per-node role labels.

    Parameters
    ----------
    indptr, indices : ndarray
        CSR adjacency. Each row must be sorted and free of duplicates and
        self-edges, and the structure must be symmetric.
    labels : ndarray, optional
        Per-node role code (``HONEST``, ``MALICIOUS`` or ``SYBIL``);
        defaults to all honest.
    original_ids : ndarray, optional
        Ids the nodes carried in the source file, for the sidecar mapping.
    """

    __slots__ = ("indptr", "indices", "labels", "original_ids", "discarded_ids")

    def __init__(self, indptr, indices, labels=None, original_ids=None,
                 discarded_ids=None):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        n = len(self.indptr) - 1
        if labels is None:
            labels = np.full(n, HONEST, dtype=np.int8)
        self.labels = np.asarray(labels, dtype=np.int8)
        if self.labels.shape != (n,):
            raise GraphError("labels must have one entry per node")
        self.original_ids = original_ids
        self.discarded_ids = discarded_ids
        for arr in (self.indptr, self.indices, self.labels):
            arr.setflags(write=False)

    @classmethod
    def from_edges(cls, n, edges, labels=None, **kw):
        """Build a graph on ``n`` nodes from an iterable of ``(u, v)`` pairs.

        Duplicate and reversed pairs collapse to one edge; self-edges are
        dropped.
        """
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                       dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise GraphError("edge endpoint out of range")
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]])
        if len(both):
            key = np.unique(both[:, 0] * n + both[:, 1])
            src, dst = key // n, key % n
        else:
            src = dst = np.empty(0, dtype=np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        np.cumsum(indptr, out=indptr)
        return cls(indptr, dst, labels, **kw)

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def degrees(self):
        return np.diff(self.indptr)

    @property
    def num_edges(self):
        return len(self.indices) // 2

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def degree(self, i):
        return int(self.indptr[i + 1] - self.indptr[i])

    def has_edge(self, i, j):
        row = self.neighbors(i)
        k = np.searchsorted(row, j)
        return bool(k < len(row) and row[k] == j)

    def edges(self):
        """All edges as an ``(E, 2)`` array with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.n), self.degrees)
        mask = src < self.indices
        return np.column_stack([src[mask], self.indices[mask]])

    def adjacency_matrix(self):
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    @property
    def honest(self):
        return self.labels == HONEST

    @property
    def compromised(self):
        return (self.labels == MALICIOUS) | (self.labels == SYBIL)

    def with_labels(self, labels):
        return SocialGraph(self.indptr, self.indices, labels, self.original_ids,
                           self.discarded_ids)

    def with_edges(self, add=(), remove=()):
        """Return a copy with edges added and/or removed (labels kept)."""
        e = self.edges()
        rem = np.asarray(remove, dtype=np.int64).reshape(-1, 2)
        if len(rem):
            rem = np.sort(rem, axis=1)
            n = self.n
            drop = np.isin(e[:, 0] * n + e[:, 1], rem[:, 0] * n + rem[:, 1])
            e = e[~drop]
        add = np.asarray(add, dtype=np.int64).reshape(-1, 2)
        return SocialGraph.from_edges(self.n, np.concatenate([e, add]), self.labels,
                                      original_ids=self.original_ids,
                                      discarded_ids=self.discarded_ids)

    def with_nodes_appended(self, count, label, edges=()):
        """Append ``count`` new nodes carrying ``label`` plus extra edges."""
        n = self.n + count
        labels = np.concatenate([self.labels, np.full(count, label, dtype=np.int8)])
        e = np.concatenate([self.edges(), np.asarray(edges, dtype=np.int64).reshape(-1, 2)])
        return SocialGraph.from_edges(n, e, labels)

    def __repr__(self):
        return (f"SocialGraph(n={self.n}, edges={self.num_edges}, "
                f"honest={int(self.honest.sum())}, compromised={int(self.compromised.sum())})")


def parse_edge_list(text, largest_component=True):
    """Parse a whitespace-separated edge list into a :class:`SocialGraph`.

    Lines starting with ``#`` and blank lines are skipped. Arbitrary integer
    ids are compacted to ``[0, n)`` in ascending order of original id; the
    original ids are kept on ``graph.original_ids``. Nodes left with no
    edges (self-edge-only lines) are dropped. With ``largest_component``
    only the largest connected component is kept and the ids of the
    remainder are recorded on ``graph.discarded_ids``.
    """
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise EdgeListParseError(lineno, raw, "expected two node ids")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListParseError(lineno, raw, "node ids must be integers") from None
        if u != v:
            pairs.append((u, v))
    if not pairs:
        raise GraphError("edge list contains no edges")
    raw_edges = np.asarray(pairs, dtype=np.int64)
    ids, dense = np.unique(raw_edges, return_inverse=True)
    graph = SocialGraph.from_edges(len(ids), dense.reshape(-1, 2), original_ids=ids)
    if largest_component:
        ncomp, comp = connected_components(graph.adjacency_matrix(), directed=False)
        if ncomp > 1:
            big = np.argmax(np.bincount(comp))
            graph = induced_subgraph(graph, np.flatnonzero(comp == big))
            graph.discarded_ids = ids[comp != big]
    return graph


def load_edge_list(path, largest_component=True):
    text = Path(path).read_text(encoding="utf-8")
    return parse_edge_list(text, largest_component=largest_component)


def write_edge_list(graph, path):
    ids = graph.original_ids if graph.original_ids is not None else np.arange(graph.n)
    with open(path, "w", encoding="utf-8") as fh:
        for u, v in graph.edges():
            fh.write(f"{ids[u]} {ids[v]}\n")


def write_id_mapping(graph, path):
    """Write the ``original_id,dense_id`` sidecar CSV."""
    ids = graph.original_ids if graph.original_ids is not None else np.arange(graph.n)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["original_id", "dense_id"])
        for dense, orig in enumerate(ids):
            w.writerow([int(orig), dense])


def induced_subgraph(graph, nodes):
    """Subgraph on ``nodes`` (renumbered in the given order)."""
    nodes = np.asarray(nodes, dtype=np.int64)
    remap = np.full(graph.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    e = graph.edges()
    keep = (remap[e[:, 0]] >= 0) & (remap[e[:, 1]] >= 0)
    orig = graph.original_ids[nodes] if graph.original_ids is not None else nodes
    return SocialGraph.from_edges(len(nodes), remap[e[keep]], graph.labels[nodes],
                                  original_ids=orig)


def is_connected(graph, active=None):
    """Connectivity of ``graph`` restricted to the ``active`` node mask.

    Returns ``Connectivity(connected, components)`` where ``components`` is a
    list of sorted node-id arrays, largest first.
    """
    if active is None:
        active = np.ones(graph.n, dtype=bool)
    idx = np.flatnonzero(active)
    if len(idx) == 0:
        return Connectivity(True, [])
    adj = graph.adjacency_matrix()[idx][:, idx]
    ncomp, comp = connected_components(adj, directed=False)
    comps = [idx[comp == c] for c in range(ncomp)]
    comps.sort(key=len, reverse=True)
    return Connectivity(ncomp == 1, comps)


def is_bipartite(graph, active=None):
    """Two-colour test by breadth-first search over the active nodes."""
    if active is None:
        active = np.ones(graph.n, dtype=bool)
    colour = np.full(graph.n, -1, dtype=np.int8)
    for s in np.flatnonzero(active):
        if colour[s] >= 0:
            continue
        colour[s] = 0
        frontier = [s]
        while frontier:
            nxt = []
            for u in frontier:
                for v in graph.neighbors(u):
                    if not active[v]:
                        continue
                    if colour[v] < 0:
                        colour[v] = 1 - colour[u]
                        nxt.append(v)
                    elif colour[v] == colour[u]:
                        return False
            frontier = nxt
    return True


class TransitionModel:
    """Transition matrix of a random walk over a :class:`SocialGraph`.

    ``kind="metropolis-hastings"`` moves along edge ``i-j`` with probability
    ``min(1/d_i, 1/d_j)`` and keeps the leftover mass as a self-loop. This
    makes the matrix symmetric, so the stationary law is uniform over every
    connected node. ``kind="simple"`` is the conventional walk (``1/d_i`` per
    edge) used as the undefended baseline.

    Isolated nodes (degree zero, e.g. globally blacklisted ones) get a
    self-loop of one and are treated as outside the walk.
    """

    KINDS = ("metropolis-hastings", "simple")

    def __init__(self, graph, kind="metropolis-hastings"):
        if kind not in self.KINDS:
            raise ValueError(f"unknown walk kind {kind!r}; expected one of {self.KINDS}")
        self.graph = graph
        self.kind = kind
        deg = graph.degrees.astype(float)
        src = np.repeat(np.arange(graph.n), graph.degrees)
        dst = graph.indices
        if kind == "simple":
            off = 1.0 / deg[src]
        else:
            off = 1.0 / np.maximum(deg[src], deg[dst])
        self._off = off
        row_sum = np.bincount(src, weights=off, minlength=graph.n)
        self.self_loop = np.clip(1.0 - row_sum, 0.0, None)
        diag = sp.diags(self.self_loop, format="csr")
        self.matrix = (sp.csr_matrix((off, dst, graph.indptr), shape=(graph.n, graph.n))
                       + diag).tocsr()
        self.matrix.sort_indices()
        self._matrix_t = self.matrix.T.tocsr()

    @property
    def n(self):
        return self.graph.n

    @property
    def active(self):
        return self.graph.degrees > 0

    def row(self, i):
        """Mapping ``{j: P_ij}`` for node ``i`` including the self-loop."""
        lo, hi = self.graph.indptr[i], self.graph.indptr[i + 1]
        out = {int(j): float(p) for j, p in zip(self.graph.indices[lo:hi], self._off[lo:hi])}
        if self.self_loop[i] > 0 or hi == lo:
            out[int(i)] = float(self.self_loop[i])
        return out

    def step(self, v):
        """One step of the distribution: ``v @ P`` without densifying P."""
        return self._matrix_t @ v

    def dense(self):
        return self.matrix.toarray()


def mh_transition_prob(model, i, j):
    n = model.n
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node id out of range [0, {n})")
    if i == j:
        return float(model.self_loop[i])
    return float(model.matrix[i, j])


def stationary_distribution(model, require_aperiodic=True):
    """Stationary law of the walk over the non-isolated nodes.

    Uniform for the Metropolis-Hastings walk, degree-proportional for the
    simple walk. Raises :class:`DisconnectedGraphError` if the non-isolated
    nodes split into several components, and :class:`GraphError` if the
    chain is periodic (bipartite with no self-loops). The returned vector is
    checked to be a fixed point of one transition step.

    With ``require_aperiodic=False`` a periodic chain is accepted; the
    vector is then still invariant (and fine for time reversal) but walks
    do not converge to it.
    """
    g = model.graph
    active = model.active
    conn = is_connected(g, active)
    if not conn.connected:
        a, b = conn.components[0][0], conn.components[1][0]
        raise DisconnectedGraphError(
            f"graph is disconnected: nodes {a} and {b} lie in different components "
            f"({len(conn.components)} components)")
    if require_aperiodic and not np.any(model.self_loop[active] > 0) and is_bipartite(g, active):
        raise GraphError("walk is periodic: graph is bipartite and has no self-loops")
    if model.kind == "simple":
        pi = g.degrees / g.degrees.sum()
    else:
        pi = active / active.sum()
    pi = pi.astype(float)
    resid = np.max(np.abs(model.step(pi) - pi))
    if resid > TOL.fixed_point:
        raise GraphError(f"stationary vector failed fixed-point check (residual {resid:.3e})")
    return pi


def power_iteration(model, start=None, tol=TOL.fixed_point, max_iter=1_000_000):
    """Iterate ``v <- v P`` from ``start`` until the sup-norm change is below ``tol``."""
    v = np.asarray(start if start is not None else model.active / model.active.sum(), float)
    for _ in range(max_iter):
        w = model.step(v)
        if np.max(np.abs(w - v)) < tol:
            return w
        v = w
    raise GraphError("power iteration did not converge")
