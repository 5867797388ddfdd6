"""Attack scenarios: malicious regions, Sybils, node-degree and route-capture attacks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import networkx as nx
import numpy as np

from ._config import HONEST, MALICIOUS, SYBIL, named_rng
from .graph import GraphError, SocialGraph, is_connected

TOPOLOGIES = ("random-regular", "chain", "clique")
POLICIES = ("local", "global")
PLACEMENTS = ("grow", "random", "fresh")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class AdversaryScenario:
    """Adversary budget and strategy.

    ``g`` is the number of attack edges. When ``malicious_nodes`` is set
    instead, the region is grown to that size and ``g`` becomes whatever cut
    results. ``sybils_per_edge`` Sybil identities hang off the malicious
    endpoint of every attack edge (0 models a perfect Sybil defense), wired
    as ``sybil_topology`` (a degree-2 chain by default).
    ``capture_fraction`` is the share of attack edges the adversary
    sacrifices by serving route-capture lists.
    """

    g: int | None = None
    sybils_per_edge: int = 0
    malicious_topology: str = "random-regular"
    capture_fraction: float = 0.0
    blacklist_policy: str = "global"
    seed: int = 0
    placement: str = "grow"
    malicious_nodes: int | None = None
    topology_degree: int | None = None
    sybil_topology: str = "chain"

    def __post_init__(self):
        if self.g is None and self.malicious_nodes is None:
            raise ScenarioError("scenario needs g or malicious_nodes")
        if self.g is not None and self.g < 0:
            raise ScenarioError("g must be non-negative")
        if self.sybils_per_edge < 0:
            raise ScenarioError("sybils_per_edge must be >= 0")
        if not 0.0 <= self.capture_fraction <= 1.0:
            raise ScenarioError("capture_fraction must lie in [0, 1]")
        if self.malicious_topology not in TOPOLOGIES:
            raise ScenarioError(f"topology must be one of {TOPOLOGIES}")
        if self.sybil_topology not in TOPOLOGIES:
            raise ScenarioError(f"sybil_topology must be one of {TOPOLOGIES}")
        if self.blacklist_policy not in POLICIES:
            raise ScenarioError(f"policy must be one of {POLICIES}")
        if self.placement not in PLACEMENTS:
            raise ScenarioError(f"placement must be one of {PLACEMENTS}")


# scenario-file key -> dataclass field
_SCENARIO_KEYS = {
    "g": ("g", int),
    "sybils_per_edge": ("sybils_per_edge", int),
    "topology": ("malicious_topology", str),
    "capture_fraction": ("capture_fraction", float),
    "policy": ("blacklist_policy", str),
    "seed": ("seed", int),
    "placement": ("placement", str),
    "malicious_nodes": ("malicious_nodes", int),
    "topology_degree": ("topology_degree", int),
    "sybil_topology": ("sybil_topology", str),
}


def _is_type(value, typ):
    if isinstance(value, bool):
        return typ is bool
    if typ is float:
        return isinstance(value, (int, float))
    return isinstance(value, typ)


def scenario_from_mapping(data):
    kwargs = {}
    for key, value in data.items():
        if key not in _SCENARIO_KEYS:
            raise ScenarioError(f"unknown scenario key {key!r}; valid keys: {sorted(_SCENARIO_KEYS)}")
        name, typ = _SCENARIO_KEYS[key]
        if not _is_type(value, typ):
            raise ScenarioError(f"scenario key {key!r} must be {typ.__name__}")
        kwargs[name] = typ(value)
    return AdversaryScenario(**kwargs)


def load_scenario(path):
    from .experiments import read_toml
    return scenario_from_mapping(read_toml(path))


@dataclass(frozen=True)
class AnnotatedGraph:
    """A graph with the adversary applied.

    ``graph`` is the effective graph walks run on: deleted edges are gone and
    globally blacklisted nodes are isolated (degree zero). ``base`` is the
    graph right after injection, before any capture.
    """

    graph: SocialGraph
    base: SocialGraph
    attack_edges: np.ndarray
    deleted_edges: np.ndarray = field(default_factory=lambda: np.empty((0, 2), np.int64))
    removed_nodes: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    scenario: AdversaryScenario | None = None

    @property
    def g(self):
        return len(self.attack_edges)

    @property
    def live_attack_edges(self):
        """Attack edges still present in the effective graph."""
        if not len(self.attack_edges):
            return self.attack_edges
        keep = [self.graph.has_edge(u, v) for u, v in self.attack_edges]
        return self.attack_edges[np.asarray(keep, dtype=bool)]

    @property
    def honest_mask(self):
        return self.graph.honest

    @property
    def malicious_mask(self):
        """Compromised nodes still taking part (not removed)."""
        m = self.graph.compromised.copy()
        m[self.removed_nodes] = False
        return m

    @property
    def h(self):
        return int(self.honest_mask.sum())

    @property
    def m(self):
        return int(self.malicious_mask.sum())


def _grow_region(graph, rng, target_cut=None, target_size=None):
    """Random edge-boundary growth from a random seed node."""
    n = graph.n
    in_m = np.zeros(n, dtype=bool)
    start = int(rng.integers(n))
    frontier = []
    cut = 0
    size = 0

    def add(v):
        nonlocal cut, size
        nb = graph.neighbors(v)
        inside = int(in_m[nb].sum())
        cut += len(nb) - 2 * inside
        in_m[v] = True
        size += 1
        frontier.extend(int(u) for u in nb if not in_m[u])

    add(start)
    while True:
        if target_size is not None and size >= target_size:
            break
        if target_cut is not None and cut >= target_cut:
            break
        if size >= n - 1:
            raise ScenarioError("cannot reach the requested attack-edge count by region growth")
        while True:
            if not frontier:
                raise ScenarioError("region growth ran out of boundary")
            k = int(rng.integers(len(frontier)))
            frontier[k], frontier[-1] = frontier[-1], frontier[k]
            v = frontier.pop()
            if not in_m[v]:
                break
        add(v)
    return in_m


def _cut_edges(graph, in_m):
    e = graph.edges()
    cross = in_m[e[:, 0]] != in_m[e[:, 1]]
    e = e[cross]
    # honest endpoint first
    flip = in_m[e[:, 0]]
    e[flip] = e[flip][:, ::-1]
    return e


def _trim_cut(graph, in_m, g, rng, tries=20):
    """Delete random attack edges until exactly ``g`` remain, keeping connectivity."""
    cut = _cut_edges(graph, in_m)
    excess = len(cut) - g
    if excess <= 0:
        return graph, cut
    for _ in range(tries):
        order = rng.permutation(len(cut))
        deg = graph.degrees.copy()
        drop = []
        for k in order:
            if len(drop) == excess:
                break
            u, v = cut[k]
            if deg[u] > 1 and deg[v] > 1:
                deg[u] -= 1
                deg[v] -= 1
                drop.append(k)
        if len(drop) < excess:
            continue
        trimmed = graph.with_edges(remove=cut[drop])
        if is_connected(trimmed).connected:
            return trimmed, np.delete(cut, drop, axis=0)
    raise ScenarioError(f"could not trim the cut to g={g} attack edges without disconnecting the graph")


def _wire(nodes, topology, degree, rng):
    """Internal edges for a group of nodes under the given topology."""
    nodes = np.asarray(nodes)
    k = len(nodes)
    if k < 2:
        return np.empty((0, 2), np.int64)
    if topology == "chain":
        return np.column_stack([nodes[:-1], nodes[1:]])
    if topology == "clique":
        iu = np.triu_indices(k, 1)
        return np.column_stack([nodes[iu[0]], nodes[iu[1]]])
    d = min(int(degree), k - 1)
    if d * k % 2:
        d -= 1
    if d <= 2:
        edges = np.column_stack([nodes[:-1], nodes[1:]])
        if d == 2 and k > 2:
            edges = np.vstack([edges, [nodes[-1], nodes[0]]])
        return edges
    for _ in range(50):
        rr = nx.random_regular_graph(d, k, seed=int(rng.integers(2**31)))
        if nx.is_connected(rr):
            e = np.asarray(list(rr.edges()), dtype=np.int64)
            return nodes[e]
    raise ScenarioError("could not build a connected random-regular malicious topology")


def inject_adversary(graph, scenario, malicious=None):
    """Place the adversary on ``graph`` and return an :class:`AnnotatedGraph`.

    ``malicious`` optionally fixes the set of existing nodes to corrupt;
    otherwise ``scenario.placement`` decides (``grow``: random boundary
    growth, ``random``: uniform node sample, ``fresh``: a new malicious
    region of ``malicious_nodes`` nodes joined by ``g`` attack edges).
    """
    rng = named_rng(scenario.seed, "adversary")
    g = scenario.g
    n0 = graph.n
    honest_deg = graph.degrees.mean()
    topo_deg = scenario.topology_degree or max(int(round(honest_deg)), 2)
    if g is not None and g > graph.num_edges and scenario.placement != "fresh":
        raise ScenarioError(f"g={g} exceeds the {graph.num_edges} edges of the graph")
    labels = np.full(n0, HONEST, dtype=np.int8)

    if scenario.placement == "fresh" and malicious is None:
        if not scenario.malicious_nodes or g is None:
            raise ScenarioError("fresh placement needs both g and malicious_nodes")
        mcount = scenario.malicious_nodes
        if g > n0 * mcount:
            raise ScenarioError(f"g={g} exceeds the {n0 * mcount} possible honest-malicious pairs")
        if g < 1:
            raise ScenarioError("a fresh malicious region needs at least one attack edge")
        new = np.arange(n0, n0 + mcount)
        internal = _wire(new, scenario.malicious_topology, topo_deg, rng)
        pairs = rng.choice(n0 * mcount, size=g, replace=False)
        cut = np.column_stack([pairs // mcount, n0 + pairs % mcount]).astype(np.int64)
        work = graph.with_nodes_appended(mcount, MALICIOUS, np.vstack([internal, cut]))
        labels = work.labels.copy()
        in_m = labels == MALICIOUS
    else:
        if malicious is not None:
            in_m = np.zeros(n0, dtype=bool)
            in_m[np.asarray(malicious, dtype=np.int64)] = True
        elif scenario.placement == "random":
            if not scenario.malicious_nodes:
                raise ScenarioError("random placement needs malicious_nodes")
            in_m = np.zeros(n0, dtype=bool)
            in_m[rng.choice(n0, scenario.malicious_nodes, replace=False)] = True
        else:
            in_m = _grow_region(graph, rng, target_cut=g if scenario.malicious_nodes is None else None,
                                target_size=scenario.malicious_nodes)
        if in_m.all() or not in_m.any():
            raise ScenarioError("both honest and malicious regions must be non-empty")
        work = graph
        if g is not None:
            have = len(_cut_edges(graph, in_m))
            if have < g:
                raise ScenarioError(f"malicious set has only {have} attack edges, g={g} requested")
            work, cut = _trim_cut(graph, in_m, g, rng)
        else:
            cut = _cut_edges(graph, in_m)
        labels[in_m] = MALICIOUS
        work = work.with_labels(labels)

    s = scenario.sybils_per_edge
    if s:
        extra = []
        base = work.n
        for k, (_, anchor) in enumerate(cut):
            group = np.arange(base + k * s, base + (k + 1) * s)
            extra.append(_wire(group, scenario.sybil_topology, topo_deg, rng))
            extra.append([[anchor, group[0]]])
            if scenario.sybil_topology == "clique":
                extra.append(np.column_stack([np.full(s, anchor), group]))
        work = work.with_nodes_appended(len(cut) * s, SYBIL, np.vstack(extra))

    if not is_connected(work).connected:
        raise ScenarioError("adversary placement left the graph disconnected")
    return AnnotatedGraph(graph=work, base=work, attack_edges=np.asarray(cut, np.int64).reshape(-1, 2),
                          scenario=scenario)


def apply_node_degree_attack(ag, extra_edges, seed=None):
    """Add ``extra_edges`` random new edges among the malicious nodes."""
    if extra_edges == 0:
        return ag
    rng = named_rng(ag.scenario.seed if seed is None else seed, "degree-attack")
    nodes = np.flatnonzero(ag.malicious_mask)
    k = len(nodes)
    iu, ju = np.triu_indices(k, 1)
    u, v = nodes[iu], nodes[ju]
    g = ag.graph
    present = np.fromiter((g.has_edge(a, b) for a, b in zip(u, v)), dtype=bool, count=len(u))
    free = np.flatnonzero(~present)
    if extra_edges > len(free):
        raise ScenarioError(f"only {len(free)} malicious-malicious edges can be added, "
                            f"{extra_edges} requested")
    pick = free if extra_edges == len(free) else rng.choice(free, extra_edges, replace=False)
    add = np.column_stack([u[pick], v[pick]])
    return replace(ag, graph=g.with_edges(add=add), base=ag.base.with_edges(add=add))


def add_malicious_clique(ag):
    """Node-degree attack at full strength: complete graph on the malicious nodes."""
    k = int(ag.malicious_mask.sum())
    missing = k * (k - 1) // 2 - _malicious_internal_edges(ag)
    return apply_node_degree_attack(ag, missing)


def _malicious_internal_edges(ag):
    e = ag.graph.edges()
    mm = ag.malicious_mask
    return int((mm[e[:, 0]] & mm[e[:, 1]]).sum())


def sacrifice_order(ag, seed=None):
    """Seeded random order in which attack edges are sacrificed.

    Fixed per seed, so the sacrificed sets for increasing capture fractions
    are nested (common random numbers across a capture-fraction sweep).
    """
    s = ag.scenario.seed if seed is None else seed
    return named_rng(s, "capture").permutation(len(ag.attack_edges))


def apply_route_capture(ag, scenario=None):
    """Apply the consequences of sacrificing attack edges to route capture.

    ``round(capture_fraction * g)`` attack edges are chosen uniformly at
    random (see :func:`sacrifice_order`). Under the ``local`` policy those
    edges are deleted by tit-for-tat. Under ``global`` every malicious node
    incident to a sacrificed edge is blacklisted by all nodes: all its edges
    go, and any malicious nodes cut off from the honest region with it are
    removed as well.
    """
    scenario = scenario or ag.scenario
    y = int(round(scenario.capture_fraction * ag.g))
    if y == 0:
        return ag
    order = sacrifice_order(ag, scenario.seed)
    sacrificed = ag.attack_edges[order[:y]]
    g = ag.graph
    if scenario.blacklist_policy == "local":
        return replace(ag, graph=g.with_edges(remove=sacrificed),
                       deleted_edges=np.vstack([ag.deleted_edges, sacrificed]),
                       scenario=scenario)
    culprits = np.unique(sacrificed[:, 1])
    removed = set(int(x) for x in ag.removed_nodes) | set(int(x) for x in culprits)
    graph, dropped = _isolate(g, removed)
    # malicious nodes stranded behind blacklisted ones are gone too
    active = graph.degrees > 0
    comps = is_connected(graph, active).components
    for comp in comps:
        if not graph.honest[comp].any():
            removed.update(int(x) for x in comp)
    removed.update(int(x) for x in np.flatnonzero(graph.compromised & ~active))
    graph, more = _isolate(graph, removed)
    removed_arr = np.asarray(sorted(removed), dtype=np.int64)
    return replace(ag, graph=graph, removed_nodes=removed_arr,
                   deleted_edges=np.vstack([ag.deleted_edges, dropped, more]),
                   scenario=scenario)


def _isolate(graph, nodes):
    nodes = np.asarray(sorted(nodes), dtype=np.int64)
    e = graph.edges()
    hit = np.isin(e[:, 0], nodes) | np.isin(e[:, 1], nodes)
    return graph.with_edges(remove=e[hit]), e[hit]


def write_scenario_manifest(ag, path):
    """CSV of attack edges, deleted edges and blacklisted nodes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["kind", "u", "v"])
        for u, v in ag.attack_edges:
            w.writerow(["attack_edge", int(u), int(v)])
        for u, v in ag.deleted_edges:
            w.writerow(["deleted_edge", int(u), int(v)])
        for x in ag.removed_nodes:
            w.writerow(["removed_node", int(x), ""])


def label_counts(graph):
    return {"honest": int((graph.labels == HONEST).sum()),
            "malicious": int((graph.labels == MALICIOUS).sum()),
            "sybil": int((graph.labels == SYBIL).sum())}


__all__ = [
    "AdversaryScenario", "AnnotatedGraph", "ScenarioError", "GraphError",
    "inject_adversary", "apply_node_degree_attack", "add_malicious_clique",
    "apply_route_capture", "sacrifice_order", "load_scenario", "scenario_from_mapping",
    "write_scenario_manifest", "label_counts",
]
