"""Reciprocal neighbor policy: signed neighbor lists and their enforcement.

Each interval every online node agrees a neighbor list with its social
neighbors, signs it, and has it checked by those neighbors. Neighbors that
accept a list republish it into an availability-only store keyed by the
issuer's public key. Testing walks fetch the lists served along the walk,
publish them too, and look for two validly signed, different lists from the
same issuer for the same interval. Such a pair is global blacklisting
evidence.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from ._config import HONEST, named_rng
from .crypto import KeyedHashScheme

CERT_VERSION = 1
STRATEGIES = ("honest", "serve-fake-always", "serve-fake-with-probability",
              "serve-fake-to-non-neighbors-only")
DETECTION_MODES = ("terminal", "all-hops")


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class NeighborEntry:
    node_id: int
    address: int
    public_key: bytes
    degree: int

    def pack(self):
        return (struct.pack(">II", self.node_id, self.address)
                + struct.pack(">H", len(self.public_key)) + self.public_key
                + struct.pack(">I", self.degree))


@dataclass(frozen=True, eq=False)
class NeighborListCertificate:
    """A node's signed neighbor list for one interval.

    Canonical form: version byte, length-prefixed issuer key, 8-byte
    interval, 4-byte entry count, then per entry a 4-byte id, 4-byte address,
    length-prefixed key and 4-byte degree; the signature covers all of it.
    Integers are big-endian.
    """

    issuer: bytes
    interval: int
    entries: tuple
    signature: bytes = b""

    @cached_property
    def entries_bytes(self):
        return struct.pack(">I", len(self.entries)) + b"".join(e.pack() for e in self.entries)

    @cached_property
    def body(self):
        return (struct.pack(">BH", CERT_VERSION, len(self.issuer)) + self.issuer
                + struct.pack(">Q", self.interval) + self.entries_bytes)

    def to_bytes(self):
        return self.body + struct.pack(">H", len(self.signature)) + self.signature

    @classmethod
    def from_bytes(cls, data):
        try:
            version, klen = struct.unpack_from(">BH", data, 0)
            if version != CERT_VERSION:
                raise ProtocolError(f"unsupported certificate version {version}")
            off = 3
            issuer = bytes(data[off:off + klen])
            off += klen
            (interval,) = struct.unpack_from(">Q", data, off)
            off += 8
            (count,) = struct.unpack_from(">I", data, off)
            off += 4
            entries = []
            for _ in range(count):
                nid, addr, kl = struct.unpack_from(">IIH", data, off)
                off += 10
                key = bytes(data[off:off + kl])
                off += kl
                (deg,) = struct.unpack_from(">I", data, off)
                off += 4
                entries.append(NeighborEntry(nid, addr, key, deg))
            (slen,) = struct.unpack_from(">H", data, off)
            off += 2
            sig = bytes(data[off:off + slen])
            if off + slen != len(data):
                raise ProtocolError("trailing bytes after certificate")
        except struct.error as exc:
            raise ProtocolError(f"truncated certificate: {exc}") from None
        return cls(issuer, interval, tuple(entries), sig)

    def __eq__(self, other):
        return isinstance(other, NeighborListCertificate) and self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())

    def verify(self, scheme):
        return scheme.verify(self.issuer, self.body, self.signature)

    @property
    def node_ids(self):
        return [e.node_id for e in self.entries]

    def entry_for(self, node_id):
        for e in self.entries:
            if e.node_id == node_id:
                return e
        return None


def sign_certificate(keypair, interval, entries, scheme):
    """Canonicalise (sort by node id) and sign a neighbor list."""
    if interval < 0:
        raise ProtocolError("interval must be non-negative")
    ordered = tuple(sorted(entries, key=lambda e: e.node_id))
    unsigned = NeighborListCertificate(keypair.public_key, interval, ordered)
    return NeighborListCertificate(keypair.public_key, interval, ordered,
                                   scheme.sign(keypair, unsigned.body))


class Verdict(enum.Enum):
    ACCEPT = "accept"
    PERMANENT = "permanent-blacklist"
    TEMPORARY = "temporary-blacklist"


def local_integrity_check(cert, issuer_key, interval, checker_id, checker_address,
                          checker_key, checker_degree, broadcast_length, scheme):
    """Checks node A (the checker) runs on the list it downloaded from B.

    ``cert`` is ``None`` when B did not answer. Returns a :class:`Verdict`.
    """
    if cert is None:
        return Verdict.TEMPORARY
    if cert.issuer != issuer_key or not cert.verify(scheme):
        return Verdict.PERMANENT
    if cert.interval != interval:
        return Verdict.PERMANENT
    if broadcast_length is None or len(cert.entries) > broadcast_length:
        return Verdict.PERMANENT
    entry = cert.entry_for(checker_id)
    if entry is None:
        return Verdict.TEMPORARY
    if (entry.address != checker_address or entry.public_key != checker_key
            or entry.degree != checker_degree):
        return Verdict.PERMANENT
    return Verdict.ACCEPT


class ConflictStore:
    """Availability-only multi-map from issuer key to stored values.

    Anything can be stored under any key; no signature or interval checks
    happen here. Storing a value twice is a no-op. With ``loss_prob`` each
    stored value is independently missing from a lookup result.
    """

    def __init__(self, loss_prob=0.0, rng=None):
        self.loss_prob = loss_prob
        self._rng = rng if rng is not None else np.random.default_rng(0)
        self._data = {}
        self._version = {}

    def put(self, key, value):
        raw = value.to_bytes() if hasattr(value, "to_bytes") else bytes(value)
        slot = self._data.setdefault(key, {})
        if raw not in slot:
            slot[raw] = value
            self._version[key] = self._version.get(key, 0) + 1

    def get(self, key):
        vals = list(self._data.get(key, {}).values())
        if self.loss_prob and vals:
            keep = self._rng.random(len(vals)) >= self.loss_prob
            vals = [v for v, k in zip(vals, keep) if k]
        return vals

    def version(self, key):
        return self._version.get(key, 0)

    def prune(self, before_interval):
        """Drop certificates for intervals earlier than ``before_interval``."""
        for key, slot in self._data.items():
            stale = [raw for raw, v in slot.items()
                     if isinstance(v, NeighborListCertificate) and v.interval < before_interval]
            for raw in stale:
                del slot[raw]

    def __len__(self):
        return sum(len(s) for s in self._data.values())


@dataclass(frozen=True)
class Evidence:
    first: NeighborListCertificate
    second: NeighborListCertificate

    @property
    def issuer(self):
        return self.first.issuer

    @property
    def interval(self):
        return self.first.interval

    def verify(self, scheme):
        a, b = self.first, self.second
        return (isinstance(a, NeighborListCertificate) and isinstance(b, NeighborListCertificate)
                and a.issuer == b.issuer and a.interval == b.interval
                and a.entries_bytes != b.entries_bytes
                and a.verify(scheme) and b.verify(scheme))


def detect_conflict(store, issuer, interval, scheme):
    """Two valid, differing certificates from ``issuer`` for ``interval``, if stored."""
    seen = {}
    for v in store.get(issuer):
        if not isinstance(v, NeighborListCertificate):
            continue
        if v.issuer != issuer or v.interval != interval:
            continue
        if v.entries_bytes in seen or not v.verify(scheme):
            continue
        seen[v.entries_bytes] = v
        if len(seen) == 2:
            a, b = seen.values()
            return Evidence(a, b)
    return None


@dataclass
class BlacklistState:
    """One node's blacklists; ``global_`` is shared by every node."""

    permanent_local: set = field(default_factory=set)
    temporary: set = field(default_factory=set)
    global_: dict = field(default_factory=dict)

    def blocks(self, other):
        return other in self.permanent_local or other in self.temporary or other in self.global_

    def end_interval(self):
        self.temporary.clear()


@dataclass
class IntervalClock:
    slot_duration: float = 3 * 3600.0
    current: int = 0

    def advance(self):
        self.current += 1
        return self.current


@dataclass(frozen=True)
class ListServing:
    """How a malicious node serves its neighbor list to walks.

    Route-capture lists keep only the node's compromised neighbors. Lists
    handed to social neighbors for their integrity checks are always the
    honest one.
    """

    strategy: str = "serve-fake-always"
    q: float = 1.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ProtocolError(f"unknown list-serving strategy {self.strategy!r}")
        if not 0.0 <= self.q <= 1.0:
            raise ProtocolError("q must lie in [0, 1]")


@dataclass
class IntervalResult:
    interval: int
    online: int
    certificates: int
    testing_walks: int
    completed_walks: int
    probes: np.ndarray
    detections: list
    new_permanent: int
    new_temporary: int


@dataclass
class Circuit:
    hops: np.ndarray
    relays: tuple
    status: str
    reason: str = ""
    built_at: float = 0.0

    @property
    def usable(self):
        return self.status == "ok"


class RNPNetwork:
    """Interval-by-interval simulation of the reciprocal neighbor policy.

    Parameters
    ----------
    graph : SocialGraph
        Social trust graph; compromised labels mark adversary nodes.
    serving : dict or ListServing, optional
        List-serving behaviour per compromised node. A single
        :class:`ListServing` applies to every compromised node with an
        honest neighbor. Nodes not covered behave honestly.
    availability : float
        Probability a node is online for an interval's setup.
    depart_prob : float
        Probability an online node leaves between the liveness round and
        the degree exchange.
    unresponsive_prob : float
        Probability a node stops answering after lists are signed.
    testing_walks : int
        Testing walks per online honest node per interval.
    detection : {"terminal", "all-hops"}
        Which hops of a testing walk are looked up (Strategy 1 / Strategy 2).
    """

    def __init__(self, graph, serving=None, *, scheme=None, seed=0, availability=1.0,
                 depart_prob=0.0, unresponsive_prob=0.0, testing_walks=6, walk_length=25,
                 detection="terminal", slot_duration=3 * 3600.0, loss_prob=0.0, trace=False):
        if detection not in DETECTION_MODES:
            raise ProtocolError(f"detection must be one of {DETECTION_MODES}")
        self.graph = graph
        self.n = graph.n
        self.scheme = scheme or KeyedHashScheme()
        self.seed = seed
        key_rng = named_rng(seed, "keys")
        self.keys = [self.scheme.generate(key_rng) for _ in range(self.n)]
        self.key_to_id = {kp.public_key: i for i, kp in enumerate(self.keys)}
        self.addresses = (0x0A000000 + np.arange(self.n)).astype(np.int64)
        self.availability = availability
        self.depart_prob = depart_prob
        self.unresponsive_prob = unresponsive_prob
        self.testing_walks = testing_walks
        self.walk_length = walk_length
        self.detection = detection
        self.clock = IntervalClock(slot_duration)
        self._rng = named_rng(seed, "protocol")
        self._walk_rng = named_rng(seed, "walks")
        self.store = ConflictStore(loss_prob, named_rng(seed, "store"))
        self.global_blacklist = {}
        self.blacklists = [BlacklistState(global_=self.global_blacklist) for _ in range(self.n)]
        self.flagged_reporters = set()
        self.serving = {}
        honest = graph.labels == HONEST
        if isinstance(serving, ListServing):
            for x in np.flatnonzero(~honest):
                if honest[graph.neighbors(x)].any():
                    self.serving[int(x)] = serving
        elif serving:
            self.serving = {int(k): v for k, v in serving.items()}
        self.honest = honest
        self.trace_rows = [] if trace else None
        self.certificates = {}
        self.fake_certificates = {}
        self.broadcasts = {}
        self.up = np.zeros(self.n, dtype=bool)
        self.detection_times = {}
        self._blocked = set()

    # -- bookkeeping -------------------------------------------------------
    def _log(self, actor, event, subject="", detail=""):
        if self.trace_rows is not None:
            self.trace_rows.append((self.clock.current, actor, event, subject, detail))

    def write_trace(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["interval", "actor", "event", "subject", "detail"])
            w.writerows(self.trace_rows or [])

    @property
    def permanent_count(self):
        return sum(len(b.permanent_local) for b in self.blacklists)

    # -- protocol steps ----------------------------------------------------
    def run_liveness_round(self, node, online):
        """Neighbors that answered and that neither side has blacklisted."""
        mine = self.blacklists[node]
        return [int(v) for v in self.graph.neighbors(node)
                if online[v] and not mine.blocks(v) and not self.blacklists[v].blocks(node)]

    def build_certificate(self, node, interval, preliminary, broadcasts, only=None):
        """Sign the final list; neighbors whose degree broadcast is missing are left out."""
        entries = []
        for v in preliminary:
            if v not in broadcasts or (only is not None and not only[v]):
                continue
            entries.append(NeighborEntry(v, int(self.addresses[v]), self.keys[v].public_key,
                                         broadcasts[v]))
        return sign_certificate(self.keys[node], interval, entries, self.scheme)

    def broadcast_evidence(self, evidence, reporter=None, time=0.0):
        """Globally blacklist the issuer of verified evidence.

        Returns ``False`` (and flags the reporter) if the evidence does not
        verify.
        """
        if not evidence.verify(self.scheme):
            if reporter is not None:
                self.flagged_reporters.add(reporter)
            self._log(reporter if reporter is not None else "", "evidence-rejected")
            return False
        issuer = self.key_to_id.get(evidence.issuer)
        if issuer is None:
            return False
        if issuer not in self.global_blacklist:
            self.global_blacklist[issuer] = (evidence, self.clock.current, time)
            self.detection_times[issuer] = time
            for v in self.graph.neighbors(issuer):
                self.blacklists[v].permanent_local.add(issuer)
            self._log(reporter if reporter is not None else "", "global-blacklist", issuer,
                      f"t={time:.1f}")
        return True

    def run_interval(self):
        """Set up, check and publish lists, then run this interval's testing walks."""
        k = self.clock.current
        rng = self._rng
        n = self.n
        online = rng.random(n) < self.availability
        excluded = np.fromiter(self.global_blacklist.keys(), dtype=np.int64)
        online[excluded] = False

        prelim = {int(u): self.run_liveness_round(u, online) for u in np.flatnonzero(online)}
        for b in self.blacklists:
            b.end_interval()

        departed = online & (rng.random(n) < self.depart_prob)
        alive = online & ~departed
        broadcasts = {u: len(p) for u, p in prelim.items() if alive[u]}

        certs = {}
        fakes = {}
        comp = ~self.honest
        for u in broadcasts:
            certs[u] = self.build_certificate(u, k, prelim[u], broadcasts)
            if u in self.serving and self.serving[u].strategy != "honest":
                fake = self.build_certificate(u, k, prelim[u], broadcasts, only=comp)
                if fake.entries_bytes != certs[u].entries_bytes:
                    fakes[u] = fake
                    self._log(u, "double-list", u, f"{len(fake.entries)}/{len(certs[u].entries)}")
        self.certificates, self.fake_certificates, self.broadcasts = certs, fakes, broadcasts

        up = alive & ~(rng.random(n) < self.unresponsive_prob)
        self.up = up
        new_perm = new_temp = 0
        blocked = set()
        for a in broadcasts:
            if not up[a]:
                continue
            for entry in certs[a].entries:
                b = entry.node_id
                got = certs.get(b) if up[b] else None
                verdict = local_integrity_check(
                    got, self.keys[b].public_key, k, a, int(self.addresses[a]),
                    self.keys[a].public_key, broadcasts[a], broadcasts.get(b), self.scheme)
                if verdict is Verdict.ACCEPT:
                    self.store.put(self.keys[b].public_key, got)
                elif verdict is Verdict.PERMANENT:
                    self.blacklists[a].permanent_local.add(b)
                    blocked.add(a * n + b)
                    new_perm += 1
                    self._log(a, "permanent-blacklist", b)
                else:
                    self.blacklists[a].temporary.add(b)
                    blocked.add(a * n + b)
                    new_temp += 1
                    self._log(a, "temporary-blacklist", b)
        self._blocked = blocked
        self._build_views()
        self.detection_times = {}

        starts = np.repeat(np.flatnonzero(up & self.honest), self.testing_walks)
        probes = np.zeros(n, dtype=np.int64)
        detections = []
        completed = 0
        if len(starts):
            times = self._walk_rng.uniform(0.0, self.clock.slot_duration, len(starts))
            hops, aborted, fake = self.sample_protocol_walks(starts, self.walk_length, self._walk_rng)
            ok = aborted < 0
            completed = int(ok.sum())
            detections = self._process_testing_walks(hops[ok], fake[ok], times[ok], starts[ok], probes)
        self.store.prune(k - 1)
        self.clock.advance()
        return IntervalResult(k, int(online.sum()), len(certs), len(starts), completed, probes,
                              detections, new_perm, new_temp)

    # -- walks -------------------------------------------------------------
    def _build_views(self):
        n = self.n
        lists = [[] for _ in range(n)]
        degs = [[] for _ in range(n)]
        for u, c in self.certificates.items():
            lists[u] = [e.node_id for e in c.entries]
            degs[u] = [e.degree for e in c.entries]
        flists = [[] for _ in range(n)]
        fdegs = [[] for _ in range(n)]
        for u, c in self.fake_certificates.items():
            flists[u] = [e.node_id for e in c.entries]
            fdegs[u] = [e.degree for e in c.entries]
        rl = np.array([len(x) for x in lists], dtype=np.int64)
        fl = np.array([len(x) for x in flists], dtype=np.int64)
        r_ptr = np.concatenate([[0], np.cumsum(rl)])
        f_ptr = np.concatenate([[0], np.cumsum(fl)]) + r_ptr[-1]
        flat = [v for row in lists for v in row] + [v for row in flists for v in row]
        fdeg = [d for row in degs for d in row] + [d for row in fdegs for d in row]
        self._v_idx = np.array(flat, dtype=np.int64)
        self._v_deg = np.array(fdeg, dtype=np.int64)
        self._r_ptr, self._r_len = r_ptr[:-1], rl
        self._f_ptr, self._f_len = f_ptr[:-1], fl
        self._has_fake = np.zeros(n, dtype=bool)
        self._has_fake[list(self.fake_certificates)] = True
        self._fake_q = np.zeros(n)
        self._nonnb_only = np.zeros(n, dtype=bool)
        for u in self.fake_certificates:
            s = self.serving[u]
            self._fake_q[u] = s.q if s.strategy == "serve-fake-with-probability" else 1.0
            self._nonnb_only[u] = s.strategy == "serve-fake-to-non-neighbors-only"
        self._blocked_arr = np.fromiter(self._blocked, dtype=np.int64, count=len(self._blocked))

    def _serve_fake(self, nodes, initiators, rng):
        fake = self._has_fake[nodes]
        if not fake.any():
            return fake
        fake &= rng.random(len(nodes)) < self._fake_q[nodes]
        nn = fake & self._nonnb_only[nodes]
        if nn.any():
            idx = np.flatnonzero(nn)
            is_nb = np.array([self.graph.has_edge(int(a), int(b))
                              for a, b in zip(nodes[idx], initiators[idx])], dtype=bool)
            fake[idx[is_nb]] = False
        return fake

    def sample_protocol_walks(self, starts, length, rng):
        """Walks driven by the lists each hop serves this interval.

        Returns ``(hops, aborted_at, served_fake)`` where ``served_fake[w, t]``
        tells whether hop ``t`` of walk ``w`` handed out its capture list.
        A walk aborts when it steps onto a node that is not answering or
        when the current hop refuses to extend to a node it blacklisted.
        """
        starts = np.asarray(starts, dtype=np.int64)
        k = len(starts)
        hops = np.empty((k, length + 1), dtype=np.int64)
        hops[:, 0] = starts
        served = np.zeros((k, length + 1), dtype=bool)
        aborted = np.full(k, -1, dtype=np.int64)
        cur = starts.copy()
        n = self.n
        for t in range(1, length + 1):
            fake = self._serve_fake(cur, starts, rng)
            served[:, t - 1] = fake
            ptr = np.where(fake, self._f_ptr[cur], self._r_ptr[cur])
            d = np.where(fake, self._f_len[cur], self._r_len[cur])
            has = d > 0
            r = rng.random(k)
            pos = ptr + np.minimum((r * d).astype(np.int64), np.maximum(d - 1, 0))
            pos = np.minimum(pos, max(len(self._v_idx) - 1, 0))
            nxt = np.where(has, self._v_idx[pos] if len(self._v_idx) else cur, cur)
            dn = np.where(has, self._v_deg[pos] if len(self._v_deg) else 1, 1)
            u = rng.random(k)
            move = has & (u * np.maximum(dn, 1) < d) & (aborted < 0)
            nxt = np.where(move, nxt, cur)
            bad = move & ~self.up[nxt]
            if len(self._blocked_arr):
                bad |= move & np.isin(cur * n + nxt, self._blocked_arr)
            aborted[bad] = t
            nxt = np.where(bad, cur, nxt)
            hops[:, t] = nxt
            cur = nxt
        served[:, length] = self._serve_fake(cur, starts, rng)
        return hops, aborted, served

    def _process_testing_walks(self, hops, fake, times, initiators, probes):
        length = hops.shape[1] - 1
        cols = [length] if self.detection == "terminal" else list(range(1, length + 1))
        nodes = hops[:, cols]
        variant = fake[:, cols] & self._has_fake[nodes]
        w_idx = np.repeat(np.arange(len(hops)), len(cols))
        flat_nodes = nodes.ravel()
        flat_var = variant.ravel()
        # each walk probes a node at most once for the statistics
        pairs = np.unique(w_idx * self.n + flat_nodes)
        np.add.at(probes, pairs % self.n, 1)
        # only the earliest walk publishing each (node, variant) changes the store
        code = flat_nodes * 2 + flat_var
        order = np.lexsort((times[w_idx], code))
        first = np.ones(len(order), dtype=bool)
        first[1:] = code[order][1:] != code[order][:-1]
        picks = order[first]
        picks = picks[np.argsort(times[w_idx[picks]], kind="stable")]
        detections = []
        k = self.clock.current
        for p in picks:
            x = int(flat_nodes[p])
            if x in self.global_blacklist:
                continue
            cert = self.fake_certificates[x] if flat_var[p] else self.certificates.get(x)
            if cert is None:
                continue
            key = self.keys[x].public_key
            self.store.put(key, cert)
            ev = detect_conflict(self.store, key, k, self.scheme)
            if ev is not None:
                w = int(w_idx[p])
                if self.broadcast_evidence(ev, int(initiators[w]), float(times[w])):
                    detections.append((x, float(times[w]), int(initiators[w])))
        return detections

    def build_circuit(self, initiator, length, mode="full-path", k=None, wait=0.0,
                      built_at=None, rng=None):
        """Build one circuit on the current interval's lists.

        ``mode="two-hop"`` keeps hop ``k`` and the last hop as relays. With
        ``wait > 0`` the circuit is held unused and terminated if any relay
        gets globally blacklisted before ``built_at + wait``.
        """
        rng = rng or self._walk_rng
        if mode not in ("full-path", "two-hop"):
            raise ProtocolError("mode must be 'full-path' or 'two-hop'")
        if mode == "two-hop" and not (k is not None and 1 <= k < length):
            raise ProtocolError("two-hop mode needs 1 <= k < length")
        if not self.honest[initiator]:
            raise ProtocolError("circuit initiator must be honest")
        if built_at is None:
            built_at = float(rng.uniform(0.0, self.clock.slot_duration))
        hops, aborted, _ = self.sample_protocol_walks(np.array([initiator]), length, rng)
        hops = hops[0]
        if aborted[0] >= 0:
            return Circuit(hops[:aborted[0]], (), "failed", f"extension failed at hop {aborted[0]}",
                           built_at)
        relays = tuple(int(x) for x in hops[1:]) if mode == "full-path" else (int(hops[k]), int(hops[-1]))
        members = set(int(x) for x in hops[1:])
        for x in members:
            t = self.detection_times.get(x)
            if t is not None and t <= built_at + wait:
                return Circuit(hops, relays, "terminated", f"relay {x} blacklisted", built_at)
        return Circuit(hops, relays, "ok", "", built_at)


def run_testing_walk(network, initiator, length=None, rng=None):
    """Single testing walk from ``initiator`` on the network's current lists.

    Lookups happen once the walk has completed; returns the evidence pairs
    found (empty list if none). An aborted walk returns ``None``.
    """
    rng = rng or network._walk_rng
    length = length or network.walk_length
    hops, aborted, fake = network.sample_protocol_walks(np.array([initiator]), length, rng)
    if aborted[0] >= 0:
        return None
    before = set(network.global_blacklist)
    probes = np.zeros(network.n, dtype=np.int64)
    network._process_testing_walks(hops, fake, np.zeros(1), np.array([initiator]), probes)
    return [network.global_blacklist[x][0] for x in network.global_blacklist if x not in before]


@dataclass(frozen=True)
class OverheadEstimate:
    setup_kb: np.ndarray
    testing_kb: float
    heartbeat_kb: float

    @property
    def per_node_kb(self):
        return self.setup_kb + self.testing_kb + self.heartbeat_kb

    @property
    def mean_mb(self):
        return float(self.per_node_kb.mean()) / 1024.0


def estimate_overhead(graph, testing_walks=6, walk_length=25, entry_kb=1.0, dht_op_kb=4.0,
                      heartbeat_kb_per_entry=3.0, detection="terminal"):
    """Per-node communication per interval, in KB.

    Three terms: agreeing neighbor lists (``d`` lists of ``d`` entries, about
    ``d**2`` KB), testing walks (one list download per hop plus a store
    insert and lookup per checked hop) and store heartbeats over a routing
    table of ``sqrt(n log2 n)`` entries. The per-entry and per-operation
    sizes are modelling assumptions.
    """
    deg = graph.degrees.astype(float)
    deg = deg[deg > 0]
    setup = deg ** 2 * entry_kb
    mean_deg = deg.mean()
    checked = 1 if detection == "terminal" else walk_length
    per_walk = walk_length * mean_deg * entry_kb + 2 * checked * dht_op_kb
    n = len(deg)
    table = np.sqrt(n * np.log2(max(n, 2)))
    return OverheadEstimate(setup, testing_walks * per_walk, table * heartbeat_kb_per_entry)


def served_transition_matrix(network):
    """Walk kernel on the lists served this interval, capture lists always served.

    Offline nodes and refused extensions are ignored; this is the kernel
    behind exact per-walk probe probabilities under ``serve-fake-always``.
    """
    n = network.n
    rows, cols, vals = [], [], []
    for u in range(n):
        cert = network.fake_certificates.get(u) or network.certificates.get(u)
        if cert is None or not cert.entries:
            continue
        d = len(cert.entries)
        for e in cert.entries:
            rows.append(u)
            cols.append(e.node_id)
            vals.append(min(1.0 / d, 1.0 / max(e.degree, 1)))
    P = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    stay = 1.0 - np.asarray(P.sum(axis=1)).ravel()
    return (P + sparse.diags(stay)).tocsr()


def probe_probabilities(network, nodes, length=None):
    """Exact chance one testing walk from a uniform online honest node checks each of ``nodes``."""
    length = length or network.walk_length
    P = served_transition_matrix(network)
    start = (network.up & network.honest).astype(float)
    start /= start.sum()
    PT = P.T.tocsr()
    out = np.zeros(len(nodes))
    if network.detection == "terminal":
        v = start
        for _ in range(length):
            v = PT @ v
        return v[np.asarray(nodes)]
    for j, x in enumerate(nodes):
        # first-visit probability: absorb at x
        keep = np.ones(P.shape[0])
        keep[x] = 0.0
        v = start.copy()
        hit = 0.0
        for _ in range(length):
            v = PT @ v
            hit += v[x]
            v = v * keep
        out[j] = hit
    return out


@dataclass(frozen=True)
class DetectionReport:
    capturers: int
    detected: int
    walks: int
    p_hit: np.ndarray
    p_exact: np.ndarray

    @property
    def rate(self):
        return self.detected / self.capturers if self.capturers else float("nan")

    @property
    def predicted(self):
        """Coupon-collector prediction from this interval's own probe counts.

        Plugging in the same walks that decide detection biases this low
        for rarely probed nodes; :func:`pooled_prediction` avoids that.
        """
        return float(np.mean(1.0 - (1.0 - self.p_hit) ** self.walks))

    @property
    def predicted_exact(self):
        return float(np.mean(1.0 - (1.0 - self.p_exact) ** self.walks))


def measure_detection(graph, serving, testing_walks, detection="terminal", walk_length=25,
                      seed=0, scheme=None):
    """Run one interval and count the capturing nodes caught within it."""
    net = RNPNetwork(graph, serving, scheme=scheme, seed=seed, testing_walks=testing_walks,
                     walk_length=walk_length, detection=detection)
    res = net.run_interval()
    capt = np.array(sorted(net.fake_certificates), dtype=np.int64)
    caught = {x for x, _, _ in res.detections}
    if res.completed_walks:
        p_hit = res.probes[capt] / res.completed_walks
    else:
        p_hit = np.zeros(len(capt))
    net.clock.current -= 1  # views still describe the interval just run
    p_exact = probe_probabilities(net, capt) if len(capt) else np.zeros(0)
    net.clock.current += 1
    return DetectionReport(len(capt), len(caught & set(capt.tolist())), res.completed_walks,
                           p_hit, p_exact)


def pooled_prediction(reports):
    """Coupon-collector prediction with probe probabilities pooled over intervals.

    All reports must come from the same graph and adversary (same capturers).
    """
    p = np.mean([r.p_hit for r in reports], axis=0)
    walks = np.mean([r.walks for r in reports])
    return float(np.mean(1.0 - (1.0 - p) ** walks))
