"""The CVRP decoding process as a Markov decision process.

States are immutable values; step returns a fresh state. An action is the
index of the next node to visit. Customers must be served in full, so a
customer whose demand exceeds the remaining load is masked rather than
partially served, and the depot is masked while the vehicle is already
there with work left, which rules out idle depot loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Route, route_length, validate_solution
from .errors import (
    IllegalActionError,
    IncompleteEpisodeError,
    InternalError,
    TerminalStateError,
)


@dataclass(frozen=True)
class EnvState:
    """Decoding state: what is left to serve and where the vehicle is.

    visited_partial holds the actions taken so far, without the implicit
    leading depot.
    """

    instance: object
    remaining_demands: tuple
    remaining_load: int
    current_node: int
    visited_partial: tuple
    step_count: int

    @property
    def all_served(self):
        return not any(self.remaining_demands)


def reset(instance):
    """Initial state: vehicle at the depot with a full load, nothing served."""
    return EnvState(
        instance=instance,
        remaining_demands=tuple(instance.demands),
        remaining_load=instance.capacity,
        current_node=0,
        visited_partial=(),
        step_count=0,
    )


def is_terminal(state):
    return state.all_served and state.current_node == 0


def feasible_mask(state):
    """Boolean vector over nodes: which actions are allowed right now.

    A customer is allowed iff it still has demand and that demand fits the
    remaining load. The depot is allowed iff the vehicle is away from it
    (or everything is served, which forces the final return). Raises on
    terminal states, where no action remains to be chosen.
    """
    if is_terminal(state):
        raise TerminalStateError("episode already ended; no feasible actions")
    n = len(state.remaining_demands)
    mask = np.zeros(n, dtype=bool)
    for i in range(1, n):
        d = state.remaining_demands[i]
        mask[i] = 0 < d <= state.remaining_load
    mask[0] = state.current_node != 0 or state.all_served
    return mask


def step(state, action):
    """Apply one action, returning (new_state, terminal).

    Serving a customer zeroes its demand and shrinks the load; visiting
    the depot refills the load. Actions the mask forbids raise instead of
    being corrected silently.
    """
    mask = feasible_mask(state)
    action = int(action)
    if action < 0 or action >= len(mask) or not mask[action]:
        raise IllegalActionError(
            f"action {action} is masked at node {state.current_node} "
            f"(load {state.remaining_load})"
        )
    m = state.instance.m
    new_count = state.step_count + 1
    if new_count > 2 * m + 2:
        raise InternalError(
            f"episode exceeded {2 * m + 2} steps; the feasibility mask is broken"
        )
    demands = list(state.remaining_demands)
    if action == 0:
        load = state.instance.capacity
    else:
        load = state.remaining_load - demands[action]
        demands[action] = 0
    new_state = EnvState(
        instance=state.instance,
        remaining_demands=tuple(demands),
        remaining_load=load,
        current_node=action,
        visited_partial=state.visited_partial + (action,),
        step_count=new_count,
    )
    return new_state, is_terminal(new_state)


def as_route(state):
    """The route implied by the actions so far, with the leading depot."""
    seq = (0,) + state.visited_partial
    if seq[-1] != 0:
        seq = seq + (0,)
    return Route(seq)


def episode_reward(instance, route):
    """Negative route length; only defined for complete feasible routes."""
    report = validate_solution(instance, route)
    if not report.feasible:
        kinds = sorted({v.kind for v in report.violations})
        raise IncompleteEpisodeError(f"route is not a complete solution: {kinds}")
    return -route_length(instance, route)
