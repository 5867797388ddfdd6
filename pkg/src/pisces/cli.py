"""Command-line entry point: ``pisces run`` and ``pisces gen-graph``."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .adversary import ScenarioError
from .experiments import (
    GRAPH_KINDS,
    RUNNERS,
    ConfigError,
    ExperimentConfig,
    generate_synthetic_graph,
    load_config,
    run_experiment,
)
from .graph import GraphError, write_edge_list


def _parser():
    p = argparse.ArgumentParser(prog="pisces", description="Random-walk anonymity experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a named experiment")
    run.add_argument("runner", help="one of: " + ", ".join(sorted(RUNNERS)))
    run.add_argument("--config", help="TOML config file (defaults apply if omitted)")
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help="output directory")
    gen = sub.add_parser("gen-graph", help="write a synthetic social graph as an edge list")
    gen.add_argument("--kind", required=True, choices=GRAPH_KINDS)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--degree", type=int, default=10)
    gen.add_argument("--rewire", type=float, default=0.1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "gen-graph":
            g = generate_synthetic_graph(args.kind, args.n,
                                         {"degree": args.degree, "rewire": args.rewire}, args.seed)
            write_edge_list(g, args.out)
            print(f"wrote {g.n} nodes, {g.num_edges} edges to {args.out}")
            return 0
        if args.runner not in RUNNERS:
            raise ConfigError(f"unknown runner {args.runner!r}; valid runners: {', '.join(sorted(RUNNERS))}")
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        path = run_experiment(args.runner, cfg, args.out)
        print(path)
        return 0
    except (ConfigError, ScenarioError, GraphError) as exc:
        print(f"pisces: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
