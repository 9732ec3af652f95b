"""
Planted matching instances
==========================

A matching instance is a graph, a relabeled copy, and some edge noise.
This walks through how one is built and scored.
"""
import numpy as np

from qapm.assign import qap_objective
from qapm.graphgen import InstanceConfig, NoiseSpec, erdos_renyi, make_instance, perturb

# One Erdos-Renyi pair with 5% edge noise. pi[i] is the node of g2 that
# node i of g1 was sent to.
cfg = InstanceConfig(model="er", n=50, p=0.2, p_e=0.05)
g1, g2, pi = make_instance(cfg, seed=7)
print(g1, g2)
print("first ten targets:", pi[:10])

# The noise removes each edge with probability p_e and adds non-edges with a
# smaller probability, chosen so the expected degree does not move.
spec = NoiseSpec(p_e=0.05, p=0.2)
print(f"p_e = {spec.p_e}, add probability = {spec.p_e2:.4f}")
degs = [perturb(erdos_renyi(50, 0.2, s), spec, 1000 + s).degrees.mean() for s in range(300)]
print(f"mean degree after noise {np.mean(degs):.3f}, before {0.2 * 49:.3f}")

# The planted permutation is scored by the QAP objective. With no noise the
# Frobenius mismatch ||AX - XB||^2 vanishes at the truth.
clean = InstanceConfig(model="er", n=50, p=0.2, p_e=0.0)
h1, h2, sigma = make_instance(clean, seed=7)
print("noise-free mismatch at the truth:", qap_objective(h1, h2, sigma)[1])
print("noisy mismatch at the truth:     ", qap_objective(g1, g2, pi)[1])
print("mismatch at a random guess:      ", qap_objective(g1, g2, np.random.default_rng(0).permutation(50))[1])

# Random regular graphs are the hard case for spectral methods: every node
# looks the same to a degree count.
r1, r2, _ = make_instance(InstanceConfig(model="regular", n=50, deg=10, p_e=0.05), seed=3)
print("regular degrees:", sorted(set(r1.degrees.astype(int).tolist())), "->", sorted(set(r2.degrees.astype(int).tolist())))
