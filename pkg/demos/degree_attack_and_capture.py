"""Why the walk ignores degree inflation, and how much reciprocal blacklisting buys.

Run: python demos/degree_attack_and_capture.py
"""

from pisces import (AdversaryScenario, add_malicious_clique, analytic_capture_probability,
                    apply_route_capture, conductance, generate_synthetic_graph, inject_adversary)
from pisces.metrics import terminal_compromise_probability

# a 1000-node random-regular graph with 100 colluding nodes placed at random
g = generate_synthetic_graph("random-regular", 1000, {"degree": 10}, seed=1)
ag = inject_adversary(g, AdversaryScenario(placement="random", malicious_nodes=100, seed=2))
print("m/n =", ag.m / ag.graph.n)

# Metropolis-Hastings keeps the stationary law uniform, so wiring the
# attackers into a clique (more edges, higher degree) should not help them.
for label, a in (("base", ag), ("clique", add_malicious_clique(ag))):
    p, _ = terminal_compromise_probability(a, 50)
    print(f"{label:>7}: P(last hop malicious, l=50) = {p:.4f}")

# Route capture: attackers hand out lists full of their friends. Each
# honest node that sees a fake list drops the edge back to the liar.
base = AdversaryScenario(placement="random", malicious_nodes=100, seed=2, blacklist_policy="global")
ag = inject_adversary(g, base)
print("\ncapture_fraction  l=5     l=25")
for cf in (0.0, 0.2, 0.4):
    a = apply_route_capture(ag, AdversaryScenario(**{**base.__dict__, "capture_fraction": cf}))
    rep = conductance(a)
    vals = [analytic_capture_probability(rep, l) for l in (5, 25)]
    print(f"{cf:>16.1f}  " + "  ".join(f"{v:.4f}" for v in vals))
