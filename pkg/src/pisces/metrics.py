"""Anonymity metrics: entropy of initiator posteriors and capture models.

Most metrics come in two flavours. ``method="exact"`` evaluates the
event probabilities by dynamic programming over the transition matrix;
``method="sample"`` estimates them from simulated walks and reports a
standard error. Posterior entropies are always computed exactly from
``P^t`` columns via time reversibility.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._config import TOL, as_rng
from .graph import GraphError, TransitionModel, stationary_distribution
from .walks import WalkView, propagate, reverse_hit_probabilities, sample_walks


class MetricError(ValueError):
    pass


def shannon_entropy(dist):
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(dist, dtype=float)
    if np.any(p < 0):
        raise MetricError("distribution has negative entries")
    if abs(p.sum() - 1.0) > TOL.distribution_sum:
        raise MetricError(f"distribution sums to {p.sum()!r}, not 1")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def _column_entropies(block):
    """Entropy of each column of a non-negative block after normalising."""
    tot = block.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = block / tot
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=0), tot


@dataclass
class EntropyReport:
    """Expected initiator entropy and its per-observation breakdown.

    ``per_observation`` holds ``(event, probability, mean_bits)`` tuples
    whose probability-weighted bits sum to ``expected_bits``.
    ``compromise_probability`` is the chance that the adversary links
    initiator and destination outright (a zero-bit observation).
    """

    expected_bits: float
    per_observation: list = field(default_factory=list)
    compromise_probability: float = 0.0
    stderr: float = 0.0
    candidates: int = 0
    abstention_probability: float = 0.0

    @property
    def max_bits(self):
        return float(np.log2(self.candidates)) if self.candidates else 0.0


class _Setting:
    """Shared state for metric evaluation on one annotated graph."""

    def __init__(self, ag, kind="metropolis-hastings", capture="rnp"):
        g = ag.graph if hasattr(ag, "graph") else ag
        self.graph = g
        self.model = TransitionModel(g, kind)
        active = g.degrees > 0
        self.H = g.honest & active
        if hasattr(ag, "malicious_mask"):
            self.M = ag.malicious_mask & active
        else:
            self.M = g.compromised & active
        self.h = int(self.H.sum())
        if self.h == 0:
            raise MetricError("no honest nodes to act as initiators")
        self.log2h = float(np.log2(self.h))
        self.pi = stationary_distribution(self.model, require_aperiodic=False)
        self.capture = capture
        # dynamics: under an undefended walk a captured walk never leaves M
        P = self.model.matrix
        if capture == "absorbing":
            keep = sp.diags((~self.M).astype(float))
            P = (keep @ P + sp.diags(self.M.astype(float))).tocsr()
        elif capture != "rnp":
            raise ValueError("capture must be 'rnp' or 'absorbing'")
        self.P = P
        self.PT = P.T.tocsr()
        self.u0 = self.H / self.h
        self._ent = {}
        self._r = [self.M.astype(float)]

    def view(self):
        v = WalkView.from_graph(self.graph, self.model.kind)
        if self.capture == "absorbing":
            rows = {int(x): v.neighbors(x)[self.M[v.neighbors(x)]] for x in np.flatnonzero(self.M)}
            v = v.with_rows(rows)
        return v

    def r(self, k):
        """Probability of sitting in the malicious region after ``k`` more hops."""
        while len(self._r) <= k:
            self._r.append(self.P @ self._r[-1])
        return self._r[k]

    def forward(self, v):
        return self.PT @ v

    def entropies(self, nodes, hops, chunk=256):
        """Posterior entropy for each (node, hops) pair, cached.

        The posterior over honest candidates ``x`` is proportional to
        ``P^hops[x, node]``.
        """
        nodes = np.asarray(nodes, dtype=np.int64)
        hops = np.asarray(hops, dtype=np.int64)
        need = sorted({(int(a), int(t)) for a, t in zip(nodes, hops)} - self._ent.keys())
        if need:
            by_node = {}
            for a, t in need:
                by_node.setdefault(a, []).append(t)
            keys = sorted(by_node)
            for c0 in range(0, len(keys), chunk):
                block_nodes = keys[c0:c0 + chunk]
                tmax = max(max(by_node[a]) for a in block_nodes)
                V = np.zeros((self.model.n, len(block_nodes)))
                V[block_nodes, np.arange(len(block_nodes))] = 1.0
                scale = np.zeros(self.model.n)
                live = self.pi > 0
                scale[live] = 1.0 / self.pi[live]
                for t in range(tmax + 1):
                    if t:
                        V = self.model._matrix_t @ V
                    wanted = [k for k, a in enumerate(block_nodes) if t in by_node[a]]
                    if not wanted:
                        continue
                    cols = V[:, wanted] * (scale[:, None] * self.pi[np.asarray(block_nodes)[wanted]])
                    ent, tot = _column_entropies(cols[self.H])
                    for k, e, s in zip(wanted, ent, tot):
                        if s <= 0:
                            raise MetricError(f"node {block_nodes[k]} unreachable in {t} hops")
                        self._ent[(block_nodes[k], t)] = float(e)
        return np.array([self._ent[(int(a), int(t))] for a, t in zip(nodes, hops)])

    def initiators(self, trials, rng):
        return rng.choice(np.flatnonzero(self.H), size=trials)


def malicious_destination_posterior(model, terminus, length, candidates=None, pi=None):
    """Initiator posterior given that an ``length``-hop walk ended at ``terminus``.

    Proportional to ``P^length[i, terminus]`` over the candidate nodes
    (honest nodes by default).
    """
    if length < 1:
        raise MetricError("walk length must be at least 1")
    hit = reverse_hit_probabilities(model, terminus, length, pi)
    if candidates is None:
        candidates = model.graph.honest
    hit = np.where(candidates, hit, 0.0)
    tot = hit.sum()
    if tot <= 0:
        raise MetricError(f"terminus {terminus} is unreachable from every candidate in {length} hops")
    return hit / tot


def terminal_entropies(model, length, terminals, candidates=None):
    """Posterior entropy for each terminal node in ``terminals``."""
    pi = stationary_distribution(model, require_aperiodic=False)
    out = np.empty(len(terminals))
    cache = {}
    for k, j in enumerate(terminals):
        j = int(j)
        if j not in cache:
            cache[j] = shannon_entropy(
                malicious_destination_posterior(model, j, length, candidates, pi))
        out[k] = cache[j]
    return out


def sample_terminals(model, length, samples, rng, candidates=None):
    """Termini of walks from uniformly chosen candidate initiators."""
    rng = as_rng(rng)
    if candidates is None:
        candidates = model.graph.honest
    starts = rng.choice(np.flatnonzero(candidates), size=samples)
    view = WalkView.from_graph(model.graph, model.kind)
    hops, _ = sample_walks(view, starts, length, rng)
    return hops[:, -1]


def expected_entropy(model, length, terminal_samples=None, rng=None, candidates=None):
    """Mean posterior entropy against a malicious destination.

    With ``terminal_samples`` the terminals are drawn from walks of random
    candidate initiators. With ``terminal_samples=None`` the expectation is
    taken exactly over the terminal law.
    """
    if candidates is None:
        candidates = model.graph.honest
    if terminal_samples is not None:
        if terminal_samples < 1:
            raise MetricError("terminal_samples must be >= 1")
        terms = sample_terminals(model, length, terminal_samples, rng, candidates)
        return float(terminal_entropies(model, length, terms, candidates).mean())
    start = candidates / candidates.sum()
    q = propagate(model, start, length)
    js = np.flatnonzero(q > 0)
    ents = terminal_entropies(model, length, js, candidates)
    return float((q[js] * ents).sum())


def _first_compromised(comp):
    """Index of the first True per row (hops >= 1), or -1."""
    any_c = comp.any(axis=1)
    first = np.argmax(comp, axis=1)
    return np.where(any_c, first, -1)


def insider_system_entropy(ag, length, trials=None, rng=None, method="sample",
                           kind="metropolis-hastings", capture="rnp"):
    """System entropy against malicious participants.

    Observation ``M_i``: the first compromised relay is hop ``i`` and the
    last hop is compromised; the adversary then knows hop ``i-1`` (``A``) and
    that it was reached in ``i-1`` hops, giving the posterior ``P^(i-1)[., A]``.
    A walk whose last hop is honest leaves the initiator uniform over the
    honest nodes.
    """
    if length < 1:
        raise MetricError("walk length must be at least 1")
    st = _Setting(ag, kind, capture)
    if method == "exact":
        return _insider_exact(st, length)
    return _insider_sample(st, length, trials or 10_000, as_rng(rng))


def _insider_exact(st, length):
    events = []
    total_p = 0.0
    total_bits = 0.0
    a = st.u0.copy()
    Mf = st.M.astype(float)
    p_m1 = 0.0
    for i in range(1, length + 1):
        enter = st.P @ (Mf * st.r(length - i))
        mass = a * enter
        nodes = np.flatnonzero(mass > 0)
        p_i = float(mass[nodes].sum())
        if p_i > 0:
            ent = st.entropies(nodes, np.full(len(nodes), i - 1))
            bits = float((mass[nodes] * ent).sum())
            events.append((f"M_{i}", p_i, bits / p_i))
            total_bits += bits
            total_p += p_i
        if i == 1:
            p_m1 = p_i
        a = st.forward(a) * st.H
    rest = max(0.0, 1.0 - total_p)
    events.append(("last_honest", rest, st.log2h))
    return EntropyReport(total_bits + rest * st.log2h, events, p_m1, 0.0, st.h)


def _insider_sample(st, length, trials, rng):
    starts = st.initiators(trials, rng)
    hops, _ = sample_walks(st.view(), starts, length, rng)
    comp = st.M[hops]
    comp[:, 0] = False
    last = comp[:, -1]
    first = _first_compromised(comp)
    bits = np.full(trials, st.log2h)
    idx = np.flatnonzero(last)
    if len(idx):
        i = first[idx]
        bits[idx] = st.entropies(hops[idx, i - 1], i - 1)
    events = []
    for i in range(1, length + 1):
        sel = last & (first == i)
        if sel.any():
            events.append((f"M_{i}", float(sel.mean()), float(bits[sel].mean())))
    if (~last).any():
        events.append(("last_honest", float((~last).mean()), st.log2h))
    p_m1 = float((last & (first == 1)).mean())
    return EntropyReport(float(bits.mean()), events, p_m1,
                         float(bits.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0, st.h)


def two_hop_entropy(ag, length, k, trials=None, rng=None, method="sample",
                    kind="metropolis-hastings", capture="rnp"):
    """System entropy when only hops ``k`` and ``length`` carry traffic.

    Events, all with the last hop compromised:

    * ``M_i`` (``i < k``): first compromised hop ``i``, hop ``k`` honest;
      the adversary localises the initiator around hop ``i-1``.
    * ``M_k``: hop ``k`` compromised; the circuit's entry relay sees the
      initiator directly, so the event carries zero bits.
    * ``after_k``: hops ``1..k`` honest; the exit relay sees hop ``k`` and
      knows it lies ``k`` hops from the initiator.

    A walk with an honest last hop leaves the initiator uniform.
    """
    if not 1 <= k < length:
        raise MetricError(f"k must satisfy 1 <= k < length, got k={k}, length={length}")
    st = _Setting(ag, kind, capture)
    if method == "exact":
        return _two_hop_exact(st, length, k)
    return _two_hop_sample(st, length, k, trials or 10_000, as_rng(rng))


def _two_hop_exact(st, length, k):
    Mf = st.M.astype(float)
    Hf = st.H.astype(float)
    tail = st.r(length - k)
    w = Hf * tail
    s = [w]
    for _ in range(k):
        s.append(st.P @ s[-1])
    events = []
    tot_p = tot_bits = 0.0
    a = st.u0.copy()
    for i in range(1, k):
        enter = st.P @ (Mf * s[k - i])
        mass = a * enter
        nodes = np.flatnonzero(mass > 0)
        p_i = float(mass[nodes].sum())
        if p_i > 0:
            ent = st.entropies(nodes, np.full(len(nodes), i - 1))
            b = float((mass[nodes] * ent).sum())
            events.append((f"M_{i}", p_i, b / p_i))
            tot_p += p_i
            tot_bits += b
        a = st.forward(a) * st.H
    a = st.forward(a) * st.H           # honest-only mass at hop k
    mass = a * tail
    nodes = np.flatnonzero(mass > 0)
    p_after = float(mass[nodes].sum())
    if p_after > 0:
        ent = st.entropies(nodes, np.full(len(nodes), k))
        b = float((mass[nodes] * ent).sum())
        events.append(("after_k", p_after, b / p_after))
        tot_p += p_after
        tot_bits += b
    at_k = propagate_with(st, st.u0, k)
    p_k = float((at_k * Mf * tail).sum())
    events.append((f"M_{k}", p_k, 0.0))
    tot_p += p_k
    rest = max(0.0, 1.0 - tot_p)
    events.append(("last_honest", rest, st.log2h))
    return EntropyReport(tot_bits + rest * st.log2h, events, p_k, 0.0, st.h)


def propagate_with(st, v, steps):
    for _ in range(steps):
        v = st.forward(v)
    return v


def _two_hop_sample(st, length, k, trials, rng):
    starts = st.initiators(trials, rng)
    hops, _ = sample_walks(st.view(), starts, length, rng)
    comp = st.M[hops]
    comp[:, 0] = False
    last = comp[:, -1]
    kc = comp[:, k]
    first = _first_compromised(comp)
    bits = np.full(trials, st.log2h)
    label = np.full(trials, "last_honest", dtype=object)
    mk = last & kc
    bits[mk] = 0.0
    label[mk] = f"M_{k}"
    early = last & ~kc & (first < k)
    idx = np.flatnonzero(early)
    if len(idx):
        i = first[idx]
        bits[idx] = st.entropies(hops[idx, i - 1], i - 1)
        label[idx] = [f"M_{j}" for j in i]
    late = last & ~kc & (first > k)
    idx = np.flatnonzero(late)
    if len(idx):
        bits[idx] = st.entropies(hops[idx, k], np.full(len(idx), k))
        label[idx] = "after_k"
    events = []
    for ev in [f"M_{i}" for i in range(1, k)] + ["after_k", f"M_{k}", "last_honest"]:
        sel = label == ev
        if sel.any():
            events.append((ev, float(sel.mean()), float(bits[sel].mean())))
    return EntropyReport(float(bits.mean()), events, float(mk.mean()),
                         float(bits.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0, st.h)


def selective_dos_entropy(ag, length, trials=None, rng=None, method="sample", retry_cap=100,
                          kind="metropolis-hastings", capture="rnp"):
    """Initiator entropy when the adversary kills circuits it cannot deanonymize.

    A circuit survives only if it is entirely honest (initiator stays
    uniform) or both its first and last hops are compromised (zero bits).
    The initiator rebuilds until a circuit survives or ``retry_cap``
    attempts fail, which counts as an abstention and is left out of the
    entropy average.
    """
    st = _Setting(ag, kind, capture)
    Mf = st.M.astype(float)
    if method == "exact":
        b = st.H.astype(float)
        for _ in range(length):
            b = st.H * (st.P @ b)
        p_hon = b
        p_dean = st.P @ (Mf * st.r(length - 1))
        x = np.flatnonzero(st.H)
        ok = p_hon[x] + p_dean[x]
        fail = np.clip(1.0 - ok, 0.0, 1.0)
        abst = fail ** retry_cap
        with np.errstate(invalid="ignore", divide="ignore"):
            frac_hon = np.where(ok > 0, p_hon[x] / ok, 0.0)
        weight = 1.0 - abst
        wsum = weight.sum()
        if wsum <= 0:
            return EntropyReport(0.0, [], 0.0, 0.0, st.h, 1.0)
        p_h = float((weight * frac_hon).sum() / wsum)
        events = [("honest_circuit", p_h, st.log2h), ("first_and_last", 1.0 - p_h, 0.0)]
        return EntropyReport(p_h * st.log2h, events, 1.0 - p_h, 0.0, st.h,
                             float(abst.mean()))
    rng = as_rng(rng)
    trials = trials or 10_000
    starts = st.initiators(trials, rng)
    outcome = np.full(trials, -1)          # 1 honest, 0 deanonymized, -1 pending
    view = st.view()
    pending = np.arange(trials)
    for _ in range(retry_cap):
        if not len(pending):
            break
        hops, _ = sample_walks(view, starts[pending], length, rng)
        comp = st.M[hops[:, 1:]]
        honest = ~comp.any(axis=1)
        dean = comp[:, 0] & comp[:, -1]
        outcome[pending[honest]] = 1
        outcome[pending[dean]] = 0
        pending = pending[~(honest | dean)]
    done = outcome >= 0
    if not done.any():
        return EntropyReport(0.0, [], 0.0, 0.0, st.h, 1.0)
    bits = np.where(outcome[done] == 1, st.log2h, 0.0)
    p_h = float((outcome[done] == 1).mean())
    events = [("honest_circuit", p_h, st.log2h), ("first_and_last", 1.0 - p_h, 0.0)]
    se = float(bits.std(ddof=1) / np.sqrt(len(bits))) if len(bits) > 1 else 0.0
    return EntropyReport(float(bits.mean()), events, 1.0 - p_h, se, st.h,
                         float(1.0 - done.mean()))


def multi_round_posterior(likelihoods):
    """Posterior over candidates after independent rounds, uniform prior.

    ``likelihoods`` is a ``(rounds, candidates)`` array of
    ``P(O_j | I = i)``. The product is formed in log space.
    """
    L = np.atleast_2d(np.asarray(likelihoods, dtype=float))
    if np.any(L < 0):
        raise MetricError("likelihoods must be non-negative")
    with np.errstate(divide="ignore"):
        logp = np.log(L).sum(axis=0)
    if not np.isfinite(logp).any():
        raise MetricError("observations are contradictory: every candidate has zero likelihood")
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def bayes_update(prior, likelihood):
    """One sequential round: ``prior * likelihood`` renormalised."""
    post = np.asarray(prior, float) * np.asarray(likelihood, float)
    tot = post.sum()
    if tot <= 0:
        raise MetricError("observations are contradictory: every candidate has zero likelihood")
    return post / tot


def multi_round_entropy(ag, length, rounds, trials, rng, kind="metropolis-hastings",
                        capture="rnp"):
    """Mean initiator entropy after each of ``rounds`` communication rounds.

    Each round the initiator builds a fresh walk. A round whose last hop is
    compromised yields the likelihood ``P^(i-1)[., A]``; a round with an
    honest last hop yields ``1 - P(last hop compromised | I = .)``.
    Returns an array of shape ``(rounds,)``.
    """
    rng = as_rng(rng)
    st = _Setting(ag, kind, capture)
    cand = np.flatnonzero(st.H)
    pos = np.full(st.model.n, -1)
    pos[cand] = np.arange(len(cand))
    null_like = 1.0 - st.r(length)[cand]
    view = st.view()
    hit_cache = {}
    out = np.zeros(rounds)
    for _ in range(trials):
        x = int(rng.choice(cand))
        hops, _ = sample_walks(view, np.full(rounds, x), length, rng)
        comp = st.M[hops]
        comp[:, 0] = False
        first = _first_compromised(comp)
        logpost = np.zeros(len(cand))
        for z in range(rounds):
            if comp[z, -1]:
                i = int(first[z])
                key = (int(hops[z, i - 1]), i - 1)
                if key not in hit_cache:
                    hit_cache[key] = reverse_hit_probabilities(st.model, key[0], key[1], st.pi)[cand]
                like = hit_cache[key]
            else:
                like = null_like
            with np.errstate(divide="ignore"):
                logpost += np.log(like)
            p = np.exp(logpost - logpost.max())
            p /= p.sum()
            nz = p[p > 0]
            out[z] += float(-(nz * np.log2(nz)).sum())
    return out / trials


@dataclass(frozen=True)
class ConductanceReport:
    """Per-step flow between the honest and malicious regions.

    ``phi_F`` is the chance a walk at a uniform honest node steps into the
    malicious region; ``phi_B = phi_F * h / m`` is the reverse flow.
    """

    phi_F: float
    phi_B: float
    h: int
    m: int

    @property
    def malicious_share(self):
        return self.m / (self.h + self.m)

    def closed_form_P(self, length):
        return analytic_capture_probability(self, length)


def conductance(ag):
    """Exact forward/backward conductance of the effective graph."""
    g = ag.graph
    active = g.degrees > 0
    H = g.honest & active
    M = (ag.malicious_mask if hasattr(ag, "malicious_mask") else g.compromised) & active
    h, m = int(H.sum()), int(M.sum())
    if h == 0 or m == 0:
        raise MetricError("conductance needs non-empty honest and malicious regions")
    P = TransitionModel(g).matrix
    flow = float(P[np.flatnonzero(H)][:, np.flatnonzero(M)].sum())
    phi_f = flow / h
    return ConductanceReport(phi_f, phi_f * h / m, h, m)


def analytic_capture_probability(report, length):
    """Chance an ``length``-hop walk from a uniform honest node ends in M.

    Two-state chain with ``P(0) = 0``:
    ``P(l) = m/n * (1 - (1 - phi_F - phi_B) ** l)``.
    """
    f, b = report.phi_F, report.phi_B
    if not (0.0 <= f <= 1.0 and 0.0 <= b <= 1.0):
        raise MetricError("conductances must lie in [0, 1]")
    if length < 0:
        raise MetricError("length must be non-negative")
    if f + b == 0:
        return 0.0
    share = f / (f + b)
    return float(share * (1.0 - (1.0 - f - b) ** length))


def capture_recursion(report, length, p0=0.0):
    """Iterate ``P(l) = P(l-1)(1 - phi_B) + (1 - P(l-1)) phi_F`` from ``p0``."""
    p = p0
    for _ in range(length):
        p = p * (1.0 - report.phi_B) + (1.0 - p) * report.phi_F
    return p


def terminal_compromise_probability(ag, length, trials=None, rng=None, method="exact",
                                    kind="metropolis-hastings", capture="rnp"):
    """Chance the ``length``-th hop is compromised, walks from uniform honest nodes.

    Returns ``(value, stderr)``.
    """
    st = _Setting(ag, kind, capture)
    if method == "exact":
        return float((propagate_with(st, st.u0, length) * st.M).sum()), 0.0
    rng = as_rng(rng)
    trials = trials or 100_000
    hops, _ = sample_walks(st.view(), st.initiators(trials, rng), length, rng)
    hit = st.M[hops[:, -1]]
    p = hit.mean()
    return float(p), float(np.sqrt(p * (1 - p) / trials))


def end_to_end_probability(ag, length, trials=None, rng=None, method="exact",
                           kind="metropolis-hastings", capture="rnp"):
    """Chance that both the first and the last hop are compromised."""
    st = _Setting(ag, kind, capture)
    if method == "exact":
        p = st.P @ (st.M * st.r(length - 1))
        return float((st.u0 * p).sum()), 0.0
    rng = as_rng(rng)
    trials = trials or 100_000
    hops, _ = sample_walks(st.view(), st.initiators(trials, rng), length, rng)
    hit = st.M[hops[:, 1]] & st.M[hops[:, -1]]
    p = hit.mean()
    return float(p), float(np.sqrt(p * (1 - p) / trials))


def write_report_rows(rows, path):
    """CSV with one row per plotted point."""
    cols = ["scenario_id", "metric", "l", "k", "g", "s", "capture_fraction", "value", "stderr"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c, "") for c in cols})


__all__ = [
    "shannon_entropy", "malicious_destination_posterior", "expected_entropy",
    "terminal_entropies", "sample_terminals", "insider_system_entropy", "two_hop_entropy",
    "selective_dos_entropy", "multi_round_posterior", "bayes_update", "multi_round_entropy",
    "conductance", "analytic_capture_probability", "capture_recursion",
    "terminal_compromise_probability", "end_to_end_probability", "EntropyReport",
    "ConductanceReport", "MetricError", "GraphError",
]
