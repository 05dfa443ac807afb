"""Classical reference solvers: greedy construction, random policy, exact oracle.

The exact solver is a two-level dynamic program: Held-Karp path costs
give the optimal single-trip length for every capacity-feasible customer
subset, and a partition DP over subsets assembles the optimal multi-trip
solution. Any giant tour is a partition of the customers into trips, and
any trip on a fixed customer set costs at least its Held-Karp optimum,
so the DP value is a true lower bound that the reconstructed route
attains. State space is 2^m * m, refused above m = 10.
"""

from __future__ import annotations

import numpy as np

from . import env as cvrp_env
from .core import Route, distance_matrix
from .errors import ConfigurationError

EXACT_MAX_CUSTOMERS = 10


def nearest_neighbor(instance):
    """Capacity-aware nearest-neighbor construction.

    From the current node, go to the closest customer that still fits the
    load; when none fits, restock at the depot. Ties break to the lowest
    node index. Always feasible by construction.
    """
    dist = distance_matrix(instance)
    m = instance.m
    unserved = list(range(1, m + 1))
    load = instance.capacity
    cur = 0
    seq = [0]
    while unserved:
        fits = [i for i in unserved if instance.demands[i] <= load]
        if not fits:
            seq.append(0)
            cur = 0
            load = instance.capacity
            continue
        nearest = fits[int(np.argmin([dist[cur, i] for i in fits]))]
        seq.append(nearest)
        load -= instance.demands[nearest]
        unserved.remove(nearest)
        cur = nearest
    seq.append(0)
    return Route(tuple(seq))


def random_policy(instance, rng):
    """Uniform choice among feasible actions at every step."""
    state = cvrp_env.reset(instance)
    while True:
        mask = cvrp_env.feasible_mask(state)
        action = rng.choice(np.nonzero(mask)[0])
        state, terminal = cvrp_env.step(state, int(action))
        if terminal:
            return cvrp_env.as_route(state)


def exact_small(instance):
    """Provably optimal solution for instances with at most 10 customers.

    Returns (route, length). Deterministic: DP ties resolve to the
    lowest-index alternative.
    """
    m = instance.m
    if m > EXACT_MAX_CUSTOMERS:
        raise ConfigurationError(
            f"exact solver refuses m={m} (limit {EXACT_MAX_CUSTOMERS})"
        )
    dist = distance_matrix(instance)
    demands = instance.demands
    size = 1 << m
    full = size - 1
    INF = float("inf")

    subset_demand = np.zeros(size, dtype=np.int64)
    for j in range(m):
        bit = 1 << j
        subset_demand[bit:2 * bit] = subset_demand[:bit] + demands[j + 1]

    # Held-Karp over each subset: path[S][j] = cheapest depot -> S -> j walk
    path = np.full((size, m), INF)
    parent = np.full((size, m), -1, dtype=np.int64)
    for j in range(m):
        path[1 << j, j] = dist[0, j + 1]
    for S in range(1, size):
        for j in range(m):
            if not (S >> j) & 1:
                continue
            cur = path[S, j]
            if cur == INF:
                continue
            rest = full & ~S
            t = rest
            while t:
                k = (t & -t).bit_length() - 1
                cand = cur + dist[j + 1, k + 1]
                nS = S | (1 << k)
                if cand < path[nS, k]:
                    path[nS, k] = cand
                    parent[nS, k] = j
                t &= t - 1

    # close each feasible subset's path back at the depot
    trip_cost = np.full(size, INF)
    trip_end = np.full(size, -1, dtype=np.int64)
    for S in range(1, size):
        if subset_demand[S] > instance.capacity:
            continue
        closed = path[S] + dist[1:, 0]
        j = int(np.argmin(closed))
        if closed[j] < INF:
            trip_cost[S] = closed[j]
            trip_end[S] = j

    # partition the full set into feasible trips
    best = np.full(size, INF)
    best[0] = 0.0
    best_trip = np.zeros(size, dtype=np.int64)
    for S in range(1, size):
        low = S & -S  # canonical: the lowest customer anchors its trip
        T = S
        while T:
            if (T & low) and trip_cost[T] < INF:
                cand = trip_cost[T] + best[S ^ T]
                if cand < best[S]:
                    best[S] = cand
                    best_trip[S] = T
            T = (T - 1) & S

    seq = [0]
    S = full
    while S:
        T = int(best_trip[S])
        order = []
        j = int(trip_end[T])
        R = T
        while j >= 0:
            order.append(j + 1)
            nj = int(parent[R, j])
            R ^= 1 << j
            j = nj
        seq.extend(reversed(order))
        seq.append(0)
        S ^= T
    return Route(tuple(seq)), float(best[full])
