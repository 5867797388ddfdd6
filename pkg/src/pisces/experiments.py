"""Experiment configs, synthetic graphs and the named experiment runners.

A config is a flat TOML file. Top-level keys set graph, walk and trial
parameters; a ``[scenario]`` table sets the adversary. Unknown keys are
rejected so that typos in sweeps fail loudly.

Every runner returns rows of a shared long-format table::

    runner, config_hash, seed, graph, n, g, s, capture_fraction,
    l, k, param, param_value, metric, value, stderr

``param``/``param_value`` name the swept variable when it is not one of the
fixed columns (for example the number of testing walks).
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from ._config import named_rng
from .adversary import (
    AdversaryScenario,
    ScenarioError,
    add_malicious_clique,
    apply_route_capture,
    inject_adversary,
    scenario_from_mapping,
)
from .graph import SocialGraph, is_connected, load_edge_list
from .metrics import (
    analytic_capture_probability,
    conductance,
    end_to_end_probability,
    insider_system_entropy,
    multi_round_entropy,
    selective_dos_entropy,
    terminal_compromise_probability,
    two_hop_entropy,
    MetricError,
    _Setting,
)
from .protocol import ListServing, estimate_overhead, measure_detection, pooled_prediction
from .walks import ChurnModel, sample_walks, unreliability, unreliability_mc

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__version__ = "0.1.0"

COLUMNS = ["runner", "config_hash", "seed", "graph", "n", "g", "s", "capture_fraction",
           "l", "k", "param", "param_value", "metric", "value", "stderr"]
GRAPH_KINDS = ("small-world", "scale-free", "random-regular")


class ConfigError(ValueError):
    pass


def read_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    graph_file: str | None = None
    graph_kind: str = "small-world"
    n: int = 1000
    degree: int = 10
    rewire: float = 0.1
    graph_seed: int = 1
    scenario: AdversaryScenario = field(
        default_factory=lambda: AdversaryScenario(malicious_nodes=100))
    length: int = 25
    lengths: tuple = (1, 5, 10, 15, 20, 25, 30, 40, 50)
    k: int = 12
    ks: tuple = ()
    capture_fractions: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    testing_walks: int = 6
    testing_walk_counts: tuple = (1, 2, 3, 4, 5, 6, 8)
    detection: str = "terminal"
    serving: str = "serve-fake-always"
    serving_q: float = 1.0
    mean_lifetime: float = 24 * 3600.0
    slot_duration: float = 3 * 3600.0
    slot_durations: tuple = ()
    use_time: str = "window"
    rounds: int = 10
    trials: int = 100_000
    seed: int = 0
    method: str = "exact"
    out_dir: str = "results"

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.length < 1 or any(x < 1 for x in self.lengths):
            raise ConfigError("walk lengths must be >= 1")
        if self.graph_file is not None and not os.path.exists(self.graph_file):
            raise ConfigError(f"graph file not found: {self.graph_file}")
        if self.graph_file is None and self.graph_kind not in GRAPH_KINDS:
            raise ConfigError(f"graph_kind must be one of {GRAPH_KINDS}")
        if self.method not in ("exact", "sample"):
            raise ConfigError("method must be 'exact' or 'sample'")
        if self.detection not in ("terminal", "all-hops"):
            raise ConfigError("detection must be 'terminal' or 'all-hops'")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["scenario"] = dataclasses.asdict(self.scenario)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @property
    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


_FIELD_TYPES = {
    "graph_file": str, "graph_kind": str, "n": int, "degree": int, "rewire": float,
    "graph_seed": int, "length": int, "lengths": list, "k": int, "ks": list,
    "capture_fractions": list, "testing_walks": int, "testing_walk_counts": list,
    "detection": str, "serving": str, "serving_q": float, "mean_lifetime": float,
    "slot_duration": float, "slot_durations": list, "use_time": str, "rounds": int,
    "trials": int, "seed": int, "method": str, "out_dir": str,
}


def config_from_mapping(data, base_dir=None):
    kwargs = {}
    for key, value in data.items():
        if key == "scenario":
            if not isinstance(value, dict):
                raise ConfigError("[scenario] must be a table")
            try:
                kwargs["scenario"] = scenario_from_mapping(value)
            except ScenarioError as exc:
                raise ConfigError(str(exc)) from None
            continue
        typ = _FIELD_TYPES.get(key)
        if typ is None:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {sorted(_FIELD_TYPES)} and [scenario]")
        ok = isinstance(value, typ) and not isinstance(value, bool)
        if typ is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        if not ok:
            raise ConfigError(f"config key {key!r} must be {typ.__name__}")
        if typ is list:
            value = tuple(value)
        elif typ is float:
            value = float(value)
        if key == "graph_file" and base_dir and not os.path.isabs(value):
            value = os.path.join(base_dir, value)
        kwargs[key] = value
    return ExperimentConfig(**kwargs)


def load_config(path):
    return config_from_mapping(read_toml(path), os.path.dirname(os.path.abspath(path)))


def generate_synthetic_graph(kind, n, params=None, seed=0):
    """Connected desk-scale stand-in for a social graph.

    ``small-world``: Watts-Strogatz with ``degree`` (even) and ``rewire``;
    ``scale-free``: Barabasi-Albert with ``degree // 2`` edges per new node;
    ``random-regular``: every node has degree ``degree``.
    Disconnected draws are redrawn with the next sub-seed.
    """
    params = dict(params or {})
    if n < 10:
        raise ConfigError("n must be at least 10")
    d = int(params.pop("degree", 10))
    p = float(params.pop("rewire", 0.1))
    if params:
        raise ConfigError(f"unknown generator parameters {sorted(params)}")
    if kind not in GRAPH_KINDS:
        raise ConfigError(f"graph kind must be one of {GRAPH_KINDS}")
    if d < 1 or d >= n:
        raise ConfigError(f"degree {d} infeasible for n={n}")
    if kind == "random-regular" and (n * d) % 2:
        raise ConfigError("random-regular needs n * degree even")
    if kind == "small-world" and (d % 2 or d < 2):
        raise ConfigError("small-world needs an even degree >= 2")
    if kind == "scale-free" and d < 2:
        raise ConfigError("scale-free needs degree >= 2")
    for attempt in range(100):
        s = int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])
        if kind == "small-world":
            G = nx.watts_strogatz_graph(n, d, p, seed=s)
        elif kind == "scale-free":
            G = nx.barabasi_albert_graph(n, d // 2, seed=s)
        else:
            G = nx.random_regular_graph(d, n, seed=s)
        g = SocialGraph.from_edges(n, list(G.edges()))
        if is_connected(g).connected:
            return g
    raise ConfigError(f"could not draw a connected {kind} graph with these parameters")


def build_graph(cfg):
    if cfg.graph_file:
        return load_edge_list(cfg.graph_file)
    return generate_synthetic_graph(cfg.graph_kind, cfg.n,
                                    {"degree": cfg.degree, "rewire": cfg.rewire}, cfg.graph_seed)


def _row(cfg, ag, metric, value, stderr=0.0, *, l="", k="", param="", param_value="",
         capture_fraction=None):
    sc = cfg.scenario
    return {
        "graph": cfg.graph_file or cfg.graph_kind,
        "n": ag.graph.n if ag is not None else cfg.n,
        "g": ag.g if ag is not None else (sc.g if sc.g is not None else ""),
        "s": sc.sybils_per_edge,
        "capture_fraction": sc.capture_fraction if capture_fraction is None else capture_fraction,
        "l": l, "k": k, "param": param, "param_value": param_value,
        "metric": metric, "value": repr(float(value)), "stderr": repr(float(stderr)),
    }


def _annotated(cfg, capture_fraction=None):
    sc = cfg.scenario
    ag = inject_adversary(build_graph(cfg), sc)
    cf = sc.capture_fraction if capture_fraction is None else capture_fraction
    if cf:
        ag = apply_route_capture(ag, dataclasses.replace(sc, capture_fraction=cf))
    return ag


def run_degree_attack(cfg):
    ag = _annotated(cfg)
    rows = []
    for label, a in (("base", ag), ("clique", add_malicious_clique(ag))):
        share = a.m / (a.h + a.m)
        st = _Setting(a)
        rng = named_rng(cfg.seed, f"degree-attack/{label}")
        starts = st.initiators(cfg.trials, rng)
        hops, _ = sample_walks(st.view(), starts, max(cfg.lengths), rng)
        for l in cfg.lengths:
            p = st.M[hops[:, l]].mean()
            rows.append(_row(cfg, a, f"terminal_malicious_mass/{label}", p,
                             np.sqrt(p * (1 - p) / cfg.trials), l=l))
        rows.append(_row(cfg, a, f"malicious_share/{label}", share))
    return rows


def run_global_blacklist(cfg):
    rows = []
    for cf in cfg.capture_fractions:
        ag = _annotated(cfg, cf)
        try:
            rep = conductance(ag)
        except MetricError:
            # the whole malicious region was blacklisted away
            rep = None
        for l in cfg.lengths:
            p, se = terminal_compromise_probability(ag, l, cfg.trials, named_rng(cfg.seed, f"gb/{cf}/{l}"),
                                                    method=cfg.method)
            rows.append(_row(cfg, ag, "terminal_compromise", p, se, l=l, capture_fraction=cf))
            a = analytic_capture_probability(rep, l) if rep else 0.0
            rows.append(_row(cfg, ag, "analytic_capture", a,
                             l=l, capture_fraction=cf))
    return rows


def run_e2e_timing(cfg):
    rows = []
    for cf in cfg.capture_fractions:
        ag = _annotated(cfg, cf)
        for l in cfg.lengths:
            p, se = end_to_end_probability(ag, l, cfg.trials, named_rng(cfg.seed, f"e2e/{cf}/{l}"),
                                           method=cfg.method)
            rows.append(_row(cfg, ag, "end_to_end_compromise", p, se, l=l, capture_fraction=cf))
    return rows


def run_detection_prob(cfg):
    sc = cfg.scenario
    ag = inject_adversary(build_graph(cfg), sc)
    serving = ListServing(cfg.serving, cfg.serving_q)
    reps = max(1, min(cfg.trials, 20))
    rows = []
    for w in cfg.testing_walk_counts:
        reps_ = [measure_detection(ag.graph, serving, w, cfg.detection, cfg.length,
                                   seed=cfg.seed * 1000 + r) for r in range(reps)]
        rate = np.mean([r.rate for r in reps_])
        se = np.std([r.rate for r in reps_]) / np.sqrt(reps)
        for metric, v, e in (("detection_rate", rate, se),
                             ("coupon_collector", pooled_prediction(reps_), 0.0),
                             ("coupon_collector_exact", np.mean([r.predicted_exact for r in reps_]), 0.0)):
            rows.append(_row(cfg, ag, f"{metric}/{cfg.detection}", v, e, l=cfg.length,
                             param="testing_walks", param_value=w))
    return rows


def run_unreliability(cfg):
    rows = []
    slots = cfg.slot_durations or (cfg.slot_duration,)
    for slot in slots:
        churn = ChurnModel(cfg.mean_lifetime, slot, cfg.use_time)
        for l in cfg.lengths:
            rows.append(_row(cfg, None, "unreliability", unreliability(churn, l), l=l,
                             param="slot_duration", param_value=slot))
            p, se = unreliability_mc(churn, l, cfg.trials, named_rng(cfg.seed, f"churn/{slot}/{l}"))
            rows.append(_row(cfg, None, "unreliability_mc", p, se, l=l,
                             param="slot_duration", param_value=slot))
    return rows


def run_entropy_vs_length(cfg):
    ag = _annotated(cfg)
    rows = []
    for l in cfg.lengths:
        rep = insider_system_entropy(ag, l, cfg.trials, named_rng(cfg.seed, f"evl/{l}"), cfg.method)
        rows.append(_row(cfg, ag, "insider_entropy", rep.expected_bits, rep.stderr, l=l))
        rows.append(_row(cfg, ag, "max_entropy", rep.max_bits, l=l))
    return rows


def run_entropy_cdf(cfg):
    """Distribution of per-walk entropy for one length, as CDF points."""
    ag = _annotated(cfg)
    st = _Setting(ag)
    rng = named_rng(cfg.seed, "cdf")
    trials = min(cfg.trials, 20_000)
    hops, _ = sample_walks(st.view(), st.initiators(trials, rng), cfg.length, rng)
    comp = st.M[hops]
    comp[:, 0] = False
    last = comp[:, -1]
    first = np.where(comp.any(axis=1), np.argmax(comp, axis=1), -1)
    bits = np.full(trials, st.log2h)
    idx = np.flatnonzero(last)
    if len(idx):
        prev = hops[idx, first[idx] - 1]
        bits[idx] = st.entropies(prev, first[idx] - 1)
    rows = []
    for q in np.linspace(0.0, 1.0, 21):
        rows.append(_row(cfg, ag, "entropy_quantile", np.quantile(bits, q), l=cfg.length,
                         param="quantile", param_value=round(float(q), 2)))
    return rows


def run_insider_entropy(cfg):
    ag = _annotated(cfg)
    rep = insider_system_entropy(ag, cfg.length, cfg.trials, named_rng(cfg.seed, "insider"), cfg.method)
    rows = [_row(cfg, ag, "insider_entropy", rep.expected_bits, rep.stderr, l=cfg.length),
            _row(cfg, ag, "compromise_probability", rep.compromise_probability, l=cfg.length)]
    for event, p, b in rep.per_observation:
        rows.append(_row(cfg, ag, f"event_probability/{event}", p, l=cfg.length))
        rows.append(_row(cfg, ag, f"event_bits/{event}", b, l=cfg.length))
    return rows


def run_two_hop(cfg):
    ag = _annotated(cfg)
    ks = cfg.ks or tuple(range(1, cfg.length))
    rows = []
    for k in ks:
        rep = two_hop_entropy(ag, cfg.length, k, cfg.trials, named_rng(cfg.seed, f"two-hop/{k}"),
                              cfg.method)
        rows.append(_row(cfg, ag, "two_hop_entropy", rep.expected_bits, rep.stderr, l=cfg.length, k=k))
    return rows


def run_selective_dos(cfg):
    ag = _annotated(cfg)
    rows = []
    for l in cfg.lengths:
        rep = selective_dos_entropy(ag, l, cfg.trials, named_rng(cfg.seed, f"dos/{l}"), cfg.method)
        rows.append(_row(cfg, ag, "selective_dos_entropy", rep.expected_bits, rep.stderr, l=l))
        rows.append(_row(cfg, ag, "abstention_probability", rep.abstention_probability, l=l))
    return rows


def run_multi_round(cfg):
    ag = _annotated(cfg)
    trials = min(cfg.trials, 2000)
    ent = multi_round_entropy(ag, cfg.length, cfg.rounds, trials, named_rng(cfg.seed, "rounds"))
    return [_row(cfg, ag, "multi_round_entropy", e, l=cfg.length, param="round", param_value=z + 1)
            for z, e in enumerate(ent)]


def run_overhead(cfg):
    g = build_graph(cfg)
    rows = []
    for w in cfg.testing_walk_counts:
        est = estimate_overhead(g, w, cfg.length, detection=cfg.detection)
        per = est.per_node_kb
        for metric, v in (("mean_mb", est.mean_mb), ("median_mb", np.median(per) / 1024),
                          ("p95_mb", np.quantile(per, 0.95) / 1024)):
            rows.append({**_row(cfg, None, metric, v, l=cfg.length, param="testing_walks",
                                param_value=w), "n": g.n})
    return rows


RUNNERS = {
    "degree-attack": run_degree_attack,
    "global-blacklist": run_global_blacklist,
    "e2e-timing": run_e2e_timing,
    "detection-prob": run_detection_prob,
    "unreliability": run_unreliability,
    "entropy-vs-length": run_entropy_vs_length,
    "entropy-cdf": run_entropy_cdf,
    "insider-entropy": run_insider_entropy,
    "two-hop": run_two_hop,
    "selective-dos": run_selective_dos,
    "multi-round": run_multi_round,
    "overhead": run_overhead,
}


def run_experiment(name, cfg, out_dir=None):
    """Run one named experiment and write ``<name>.csv`` plus a manifest.

    Returns the path of the CSV file.
    """
    if name not in RUNNERS:
        raise ConfigError(f"unknown runner {name!r}; valid runners: {', '.join(sorted(RUNNERS))}")
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    rows = RUNNERS[name](cfg)
    digest = cfg.digest
    path = os.path.join(out, f"{name}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({"runner": name, "config_hash": digest, "seed": cfg.seed, **r})
    manifest = {"runner": name, "config_hash": digest, "code_version": __version__,
                "config": cfg.to_dict(), "rows": len(rows), "csv": os.path.basename(path)}
    with open(os.path.join(out, f"{name}.manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
