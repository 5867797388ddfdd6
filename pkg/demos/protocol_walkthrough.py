"""A few intervals of the neighbor-list protocol, honest and with a liar.

Run: python demos/protocol_walkthrough.py
"""
from pisces import AdversaryScenario, ListServing, RNPNetwork, generate_synthetic_graph, inject_adversary
from pisces.protocol import measure_detection

g = generate_synthetic_graph("small-world", 60, {"degree": 6, "rewire": 0.2}, seed=3)

net = RNPNetwork(g, seed=1, availability=0.95, depart_prob=0.02)
for _ in range(50):
    net.run_interval()
print("honest run: detections", len(net.global_blacklist), "permanent", net.permanent_count)

# one node serves a forged list to every walk it sees
ag = inject_adversary(g, AdversaryScenario(placement="random", malicious_nodes=3, seed=4))
for mode, w in (("terminal", 6), ("all-hops", 3)):
    rep = measure_detection(ag.graph, ListServing("serve-fake-always"), w, mode, 25, seed=0)
    print(f"{mode:>9} w={w}: caught {rep.detected}/{rep.capturers}, "
          f"coupon-collector guess {rep.predicted_exact:.3f}")
