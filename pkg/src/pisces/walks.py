"""Random-walk sampling, exact l-hop laws and churn unreliability."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from ._config import LABEL_NAMES, as_rng
from .graph import DisconnectedGraphError, stationary_distribution


class WalkView:
    """Neighbor lists as *served* by each node during a walk.

    Honest nodes serve their true list, so a view built from a graph is
    symmetric. A route-capturing node may serve a different list; rows can
    then disagree, which is why the view is a directed CSR structure. The
    Metropolis-Hastings acceptance uses the length of the list each node
    serves as its degree.
    """

    __slots__ = ("indptr", "indices", "kind")

    def __init__(self, indptr, indices, kind="metropolis-hastings"):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.kind = kind

    @classmethod
    def from_graph(cls, graph, kind="metropolis-hastings"):
        return cls(graph.indptr, graph.indices, kind)

    @property
    def n(self):
        return len(self.indptr) - 1

    @property
    def degrees(self):
        return np.diff(self.indptr)

    def neighbors(self, i):
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def with_rows(self, rows):
        """Copy with the rows in ``rows`` (node -> neighbor array) replaced."""
        lists = [self.neighbors(i) for i in range(self.n)]
        for node, nb in rows.items():
            lists[node] = np.sort(np.asarray(nb, dtype=np.int64))
        lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=self.n)
        indptr = np.concatenate([[0], np.cumsum(lens)])
        indices = np.concatenate(lists) if self.n else np.empty(0, np.int64)
        return WalkView(indptr, indices, self.kind)

    def without_edges(self, pairs):
        """Copy where ``u`` no longer lists ``v`` for each directed ``(u, v)``."""
        rows = {}
        for u, v in pairs:
            cur = rows.get(int(u), self.neighbors(int(u)))
            rows[int(u)] = cur[cur != v]
        return self.with_rows(rows)


@dataclass
class WalkTrace:
    hops: np.ndarray
    purpose: str = "circuit"
    aborted_at: int | None = None

    @property
    def outcome(self):
        return "completed" if self.aborted_at is None else f"aborted({self.aborted_at})"

    @property
    def completed(self):
        return self.aborted_at is None

    @property
    def initiator(self):
        return int(self.hops[0])

    @property
    def terminus(self):
        return int(self.hops[-1])


def sample_walks(view, starts, length, rng, online=None):
    """Sample one walk of ``length`` hops from each entry of ``starts``.

    Each hop picks a neighbor uniformly from the list served by the current
    node and moves there with probability ``min(1, d_cur / d_next)`` (always,
    for the simple walk); otherwise the walk stays put, spending the hop on
    the self-loop. If ``online`` is given and a walk moves onto an offline
    node, it is aborted at that hop and frozen there.

    Returns
    -------
    hops : (k, length + 1) ndarray
        Visited nodes, ``hops[:, 0] == starts``.
    aborted_at : (k,) ndarray
        Hop index of the abort, or -1 for completed walks.
    """
    rng = as_rng(rng)
    if not isinstance(view, WalkView):
        view = WalkView.from_graph(view)
    starts = np.asarray(starts, dtype=np.int64).reshape(-1)
    k = len(starts)
    deg = view.degrees
    hops = np.empty((k, length + 1), dtype=np.int64)
    hops[:, 0] = starts
    aborted = np.full(k, -1, dtype=np.int64)
    cur = starts.copy()
    mh = view.kind != "simple"
    for t in range(1, length + 1):
        d = deg[cur]
        has = d > 0
        r = rng.random(k)
        pick = view.indptr[cur] + np.minimum((r * d).astype(np.int64), np.maximum(d - 1, 0))
        nxt = np.where(has, view.indices[np.minimum(pick, len(view.indices) - 1)], cur)
        u = rng.random(k)
        if mh:
            dn = deg[nxt]
            move = has & (u * np.maximum(dn, 1) < d)
        else:
            move = has
        move &= aborted < 0
        nxt = np.where(move, nxt, cur)
        if online is not None:
            dead = move & ~online[nxt]
            aborted[dead] = t
            nxt = np.where(dead, cur, nxt)
        hops[:, t] = nxt
        cur = nxt
    return hops, aborted


def sample_walk(view, start, length, rng, online=None, purpose="circuit"):
    """Single walk as a :class:`WalkTrace`."""
    if online is not None and not online[start]:
        raise ValueError("walk initiator is offline")
    hops, ab = sample_walks(view, [start], length, rng, online)
    a = int(ab[0])
    h = hops[0] if a < 0 else hops[0, :a]
    return WalkTrace(h, purpose, None if a < 0 else a)


def propagate(model, dist, length):
    """``dist @ P**length`` by repeated sparse vector-matrix products."""
    v = np.asarray(dist, dtype=float)
    for _ in range(length):
        v = model.step(v)
    return v


def transition_power_vector(model, start, length):
    """Exact law of the walk after ``length`` hops from node ``start``.

    Costs ``O(length * nnz(P))``; the matrix power is never formed.
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    v = np.zeros(model.n)
    v[start] = 1.0
    return propagate(model, v, length)


def reverse_hit_probabilities(model, terminus, length, pi=None):
    """``P^l[i, terminus]`` for every ``i`` from a single forward pass.

    Uses time reversibility, ``P^l[i, j] = pi_j / pi_i * P^l[j, i]``. For
    the Metropolis-Hastings walk the ratio is one. Nodes outside the walk
    (``pi_i = 0``) get zero.
    """
    if pi is None:
        pi = stationary_distribution(model, require_aperiodic=False)
    if pi[terminus] == 0:
        raise DisconnectedGraphError(f"terminus {terminus} is not part of the connected graph")
    fwd = transition_power_vector(model, terminus, length)
    out = np.zeros_like(fwd)
    live = pi > 0
    out[live] = fwd[live] * pi[terminus] / pi[live]
    return out


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


USE_TIME_RULES = ("window", "uniform-remainder", "fixed")


@dataclass(frozen=True)
class ChurnModel:
    """Exponential node lifetimes against a slotted neighbor-list schedule.

    A circuit is unreliable when one of its relays has left between the
    moment the slot's neighbor lists were frozen and the moment the circuit
    is used. ``use_time`` fixes when that is:

    ``window``
        uniform over the first ``use_fraction * slot_duration`` of the slot
        (default; ``use_fraction`` is calibrated so that 24 h lifetimes with
        3 h slots and 1 h lifetimes with 5 min slots both give 2-3 % for
        25-hop walks).
    ``uniform-remainder``
        built at a uniform instant of the slot, used at a uniform instant of
        what is left of it.
    ``fixed``
        always ``use_delay`` seconds into the slot.

    All relays of one circuit share the use instant.
    """

    mean_lifetime: float = 24 * 3600.0
    slot_duration: float = 3 * 3600.0
    use_time: str = "window"
    use_fraction: float = 0.0195
    use_delay: float = 0.0

    def __post_init__(self):
        if self.mean_lifetime <= 0 or self.slot_duration <= 0:
            raise ValueError("mean_lifetime and slot_duration must be positive")
        if self.use_time not in USE_TIME_RULES:
            raise ValueError(f"use_time must be one of {USE_TIME_RULES}")
        if not 0 < self.use_fraction <= 1:
            raise ValueError("use_fraction must lie in (0, 1]")

    def sample_use_times(self, size, rng):
        t = self.slot_duration
        if self.use_time == "fixed":
            return np.full(size, float(self.use_delay))
        if self.use_time == "window":
            return rng.uniform(0.0, self.use_fraction * t, size)
        built = rng.uniform(0.0, t, size)
        return rng.uniform(built, t)


def relay_survival(churn, elapsed):
    """Probability that one relay is still present ``elapsed`` seconds on."""
    return float(np.exp(-elapsed / churn.mean_lifetime))


def unreliability(churn, length):
    """Probability that at least one of ``length`` relays left before use.

    Closed form of ``1 - E[exp(-length * U / L)]`` with ``U`` the use
    instant and ``L`` the mean lifetime.
    """
    if length == 0:
        return 0.0
    a = length / churn.mean_lifetime
    t = churn.slot_duration
    if churn.use_time == "fixed":
        return float(-np.expm1(-a * churn.use_delay))
    if churn.use_time == "window":
        x = a * churn.use_fraction * t
        return float(1.0 + np.expm1(-x) / x)
    # density of U is log(t / (t - u)) / t on [0, t)
    val, _ = integrate.quad(lambda u: np.exp(-a * u) * np.log(t / (t - u)) / t, 0.0, t,
                            limit=200)
    return float(1.0 - val)


def unreliability_mc(churn, length, trials, rng):
    """Monte-Carlo estimate of :func:`unreliability` and its standard error."""
    rng = as_rng(rng)
    use = churn.sample_use_times(trials, rng)
    if length == 0:
        return 0.0, 0.0
    life = rng.exponential(churn.mean_lifetime, size=(trials, length))
    fail = (life < use[:, None]).any(axis=1)
    p = fail.mean()
    return float(p), float(np.sqrt(p * (1 - p) / trials))


def write_distribution_csv(dist, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "probability"])
        for i, p in enumerate(dist):
            w.writerow([i, repr(float(p))])


def write_walk_traces_csv(traces, labels, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["walk_id", "purpose", "hop_index", "node_id", "label"])
        for wid, tr in enumerate(traces):
            for k, node in enumerate(tr.hops):
                w.writerow([wid, tr.purpose, k, int(node), LABEL_NAMES[int(labels[node])]])
