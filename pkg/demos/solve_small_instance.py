#!/usr/bin/env python3
"""Solve one small instance three ways and compare against the optimum.

Generates an 8-customer instance, runs the nearest-neighbor construction,
a uniform random policy, and the exact dynamic program, then prints each
route with its length and gap. Runs in well under a second.
"""

import numpy as np

from qroute.baselines import exact_small, nearest_neighbor, random_policy
from qroute.core import generate_instance, optimality_gap, route_length

rng = np.random.default_rng(7)
inst = generate_instance(m=8, capacity=20, rng=rng)

print(f"instance: {inst.m} customers, capacity {inst.capacity}")
print(f"demands:  {inst.demands[1:]}")
print()

opt_route, opt_length = exact_small(inst)
rows = [
    ("exact (optimal)", opt_route, opt_length),
    ("nearest-neighbor", nearest_neighbor(inst), None),
    ("random policy", random_policy(inst, np.random.default_rng(0)), None),
]

for name, route, length in rows:
    if length is None:
        length = route_length(inst, route)
    gap = optimality_gap(length, opt_length)
    seq = "-".join(str(n) for n in route.sequence)
    print(f"{name:18s} length {length:.4f}  gap {gap:5.2f}%  route {seq}")

print()
print("every depot-to-depot segment of the optimal route stays within "
      "capacity:")
for segment in opt_route.segments():
    load = sum(inst.demands[n] for n in segment)
    print(f"  {segment} -> load {load}/{inst.capacity}")
