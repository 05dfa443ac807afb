"""Decoding environment: masks, transitions, termination, rewards."""

import numpy as np
import pytest

from qroute import env
from qroute.core import Instance, Route, generate_instance, route_length, validate_solution
from qroute.errors import (
    IllegalActionError,
    IncompleteEpisodeError,
    InternalError,
    TerminalStateError,
)


def fixture_instance():
    return Instance(
        coords=((0.5, 0.5), (0.1, 0.1), (0.9, 0.9), (0.5, 0.9)),
        demands=(0, 4, 5, 3),
        capacity=7,
    )


class TestReset:
    def test_initial_state(self):
        inst = fixture_instance()
        s = env.reset(inst)
        assert s.current_node == 0
        assert s.remaining_load == 7
        assert s.remaining_demands == (0, 4, 5, 3)
        assert s.visited_partial == ()
        assert not s.all_served
        assert not env.is_terminal(s)


class TestMask:
    def test_depot_masked_at_start(self):
        mask = env.feasible_mask(env.reset(fixture_instance()))
        assert mask.tolist() == [False, True, True, True]

    def test_customer_over_load_masked(self):
        s = env.reset(fixture_instance())
        s, _ = env.step(s, 1)  # load 7 -> 3
        mask = env.feasible_mask(s)
        # customer 2 needs 5 > 3; depot now allowed; customer 3 fits exactly
        assert mask.tolist() == [True, False, False, True]

    def test_served_customer_masked(self):
        s = env.reset(fixture_instance())
        s, _ = env.step(s, 3)
        assert env.feasible_mask(s)[3] == False  # noqa: E712

    def test_depot_allowed_when_all_served(self):
        s = env.reset(fixture_instance())
        for a in (1, 3, 0, 2):
            s, _ = env.step(s, a)
        assert s.all_served
        assert env.feasible_mask(s).tolist() == [True, False, False, False]

    def test_terminal_state_has_no_mask(self):
        s = env.reset(fixture_instance())
        for a in (1, 3, 0, 2, 0):
            s, terminal = env.step(s, a)
        assert terminal
        with pytest.raises(TerminalStateError):
            env.feasible_mask(s)


class TestStep:
    def test_serving_updates_demand_and_load(self):
        s = env.reset(fixture_instance())
        s, terminal = env.step(s, 2)
        assert not terminal
        assert s.current_node == 2
        assert s.remaining_load == 2
        assert s.remaining_demands == (0, 4, 0, 3)

    def test_depot_refills(self):
        s = env.reset(fixture_instance())
        s, _ = env.step(s, 2)
        s, _ = env.step(s, 0)
        assert s.remaining_load == 7
        assert s.current_node == 0

    def test_masked_action_raises(self):
        s = env.reset(fixture_instance())
        with pytest.raises(IllegalActionError):
            env.step(s, 0)  # depot while at depot with work left
        with pytest.raises(IllegalActionError):
            env.step(s, 9)

    def test_stepping_after_terminal_raises(self):
        s = env.reset(fixture_instance())
        for a in (1, 3, 0, 2, 0):
            s, _ = env.step(s, a)
        with pytest.raises(TerminalStateError):
            env.step(s, 0)

    def test_runaway_episode_detected(self):
        inst = fixture_instance()
        base = env.reset(inst)
        stuck = env.EnvState(
            instance=inst,
            remaining_demands=base.remaining_demands,
            remaining_load=base.remaining_load,
            current_node=0,
            visited_partial=(2, 0) * (inst.m + 1),
            step_count=2 * inst.m + 2,
        )
        with pytest.raises(InternalError):
            env.step(stuck, 1)


class TestEpisodes:
    def test_random_play_always_terminates_feasibly(self):
        rng = np.random.default_rng(17)
        for _ in range(200):
            m = int(rng.integers(1, 15))
            inst = generate_instance(m, 20, rng)
            s = env.reset(inst)
            steps = 0
            while True:
                mask = env.feasible_mask(s)
                choices = np.nonzero(mask)[0]
                assert choices.size > 0  # the process can never dead-end
                s, terminal = env.step(s, rng.choice(choices))
                steps += 1
                assert steps <= 2 * m + 2
                if terminal:
                    break
            route = env.as_route(s)
            assert validate_solution(inst, route).feasible

    def test_route_of_fresh_state_is_depot_only(self):
        assert env.as_route(env.reset(fixture_instance())) == Route((0,))

    def test_reward_is_negative_length(self):
        inst = fixture_instance()
        route = Route((0, 1, 3, 0, 2, 0))
        assert env.episode_reward(inst, route) == pytest.approx(
            -route_length(inst, route), abs=1e-12)

    def test_reward_refuses_incomplete_routes(self):
        inst = fixture_instance()
        with pytest.raises(IncompleteEpisodeError):
            env.episode_reward(inst, Route((0, 1, 0)))
        with pytest.raises(IncompleteEpisodeError):
            env.episode_reward(inst, Route((0, 1, 2, 3, 0)))
