"""Anonymity in bits for the insider, two-hop and selective-DoS adversaries.

Run: python demos/entropy_tour.py
"""
import numpy as np

from pisces import (AdversaryScenario, generate_synthetic_graph, insider_system_entropy,
                    selective_dos_entropy, two_hop_entropy, inject_adversary)

g = generate_synthetic_graph("small-world", 1000, {"degree": 10, "rewire": 0.1}, seed=1)
ag = inject_adversary(g, AdversaryScenario(g=100, sybils_per_edge=10, seed=1))
h = int(ag.graph.honest.sum())
print(f"honest nodes {h}, ceiling log2(h) = {np.log2(h):.2f} bits")

# exact answers come from propagating distributions; sampled ones carry a stderr
for l in (5, 10, 25):
    ex = insider_system_entropy(ag, l, method="exact").expected_bits
    s = insider_system_entropy(ag, l, 5000, np.random.default_rng(l))
    print(f"insider l={l:>2}: exact {ex:.3f}  sampled {s.expected_bits:.3f} +- {s.stderr:.3f}")

# two colluders watching hops k and k+1 of a 25-hop circuit
for k in (2, 8, 12, 20):
    print(f"two-hop k={k:>2}: {two_hop_entropy(ag, 25, k, method='exact').expected_bits:.3f}")

print("selective DoS l=25:", round(selective_dos_entropy(ag, 25, method="exact").expected_bits, 3))
