"""Brute-force reference implementations used by the tests.

Nothing here touches the sparse code paths: transition matrices are built
densely from the edge list and walk quantities come from enumerating every
walk with its probability.
"""

import itertools
import math

import numpy as np


def dense_mh(n, edges, kind="metropolis-hastings"):
    adj = [set() for _ in range(n)]
    for u, v in edges:
        if u != v:
            adj[u].add(v)
            adj[v].add(u)
    P = np.zeros((n, n))
    for i in range(n):
        di = len(adj[i])
        if di == 0:
            P[i, i] = 1.0
            continue
        for j in adj[i]:
            P[i, j] = 1.0 / di if kind == "simple" else min(1.0 / di, 1.0 / len(adj[j]))
        P[i, i] = 1.0 - P[i].sum()
    return P


def graph_dense(graph, kind="metropolis-hastings"):
    return dense_mh(graph.n, [tuple(e) for e in graph.edges()], kind)


def matrix_power(P, l):
    return np.linalg.matrix_power(P, l)


def enumerate_walks(P, start, length):
    """Yield ``(path, probability)`` for every walk with non-zero probability."""
    n = P.shape[0]
    succ = [[(j, P[i, j]) for j in range(n) if P[i, j] > 0] for i in range(n)]

    def rec(path, p):
        if len(path) == length + 1:
            yield tuple(path), p
            return
        for j, q in succ[path[-1]]:
            path.append(j)
            yield from rec(path, p * q)
            path.pop()

    yield from rec([start], 1.0)


def entropy_bits(p):
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


class PosteriorOracle:
    """Posterior over honest candidates proportional to ``P^t[x, a]``, by dense powers."""

    def __init__(self, P, honest):
        self.P = P
        self.honest = np.asarray(honest, dtype=bool)
        self._pow = {0: np.eye(P.shape[0])}
        self._bits = {}

    def power(self, t):
        if t not in self._pow:
            self._pow[t] = matrix_power(self.P, t)
        return self._pow[t]

    def posterior(self, a, t):
        col = self.power(t)[:, a] * self.honest
        return col / col.sum()

    def bits(self, a, t):
        key = (a, t)
        if key not in self._bits:
            self._bits[key] = entropy_bits(self.posterior(a, t))
        return self._bits[key]


def _walk_law(P, honest, length):
    h = np.flatnonzero(honest)
    for x in h:
        for path, p in enumerate_walks(P, int(x), length):
            yield path, p / len(h)


def insider_oracle(P, honest, malicious, length, posterior_P=None):
    """Expected insider entropy and per-event probabilities by enumeration."""
    post = PosteriorOracle(P if posterior_P is None else posterior_P, honest)
    log2h = math.log2(int(np.sum(honest)))
    total = 0.0
    events = {}
    for path, p in _walk_law(P, honest, length):
        comp = [bool(malicious[v]) for v in path]
        comp[0] = False
        if comp[-1]:
            i = comp.index(True)
            bits = post.bits(path[i - 1], i - 1)
            ev = f"M_{i}"
        else:
            bits, ev = log2h, "last_honest"
        total += p * bits
        events[ev] = events.get(ev, 0.0) + p
    return total, events


def two_hop_oracle(P, honest, malicious, length, k):
    post = PosteriorOracle(P, honest)
    log2h = math.log2(int(np.sum(honest)))
    total = 0.0
    events = {}
    for path, p in _walk_law(P, honest, length):
        comp = [bool(malicious[v]) for v in path]
        comp[0] = False
        if not comp[-1]:
            bits, ev = log2h, "last_honest"
        elif comp[k]:
            bits, ev = 0.0, f"M_{k}"
        else:
            i = comp.index(True)
            if i < k:
                bits, ev = post.bits(path[i - 1], i - 1), f"M_{i}"
            else:
                bits, ev = post.bits(path[k], k), "after_k"
        total += p * bits
        events[ev] = events.get(ev, 0.0) + p
    return total, events


def selective_dos_oracle(P, honest, malicious, length, retry_cap):
    log2h = math.log2(int(np.sum(honest)))
    h = np.flatnonzero(honest)
    num = den = abst = 0.0
    for x in h:
        p_hon = p_dean = 0.0
        for path, p in enumerate_walks(P, int(x), length):
            comp = [bool(malicious[v]) for v in path[1:]]
            if not any(comp):
                p_hon += p
            elif comp[0] and comp[-1]:
                p_dean += p
        ok = p_hon + p_dean
        a = (1.0 - ok) ** retry_cap
        abst += a / len(h)
        if ok > 0:
            num += (1.0 - a) * p_hon / ok
        den += 1.0 - a
    return num / den * log2h, abst


def terminal_oracle(P, honest, malicious, length):
    return sum(p for path, p in _walk_law(P, honest, length) if malicious[path[-1]])


def expected_destination_entropy(P, honest, length):
    """Exact mean posterior entropy over terminals of walks from honest initiators."""
    post = PosteriorOracle(P, honest)
    law = {}
    for path, p in _walk_law(P, honest, length):
        law[path[-1]] = law.get(path[-1], 0.0) + p
    return sum(p * post.bits(j, length) for j, p in law.items())


def absorbing(P, malicious):
    Q = P.copy()
    for v in np.flatnonzero(malicious):
        Q[v] = 0.0
        Q[v, v] = 1.0
    return Q


def brute_conductance(P, honest, malicious):
    H = np.flatnonzero(honest)
    M = np.flatnonzero(malicious)
    f = sum(P[x, y] for x, y in itertools.product(H, M)) / len(H)
    return f, f * len(H) / len(M)
