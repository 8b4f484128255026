# -*- coding: utf-8 -*-
import numpy as np
import pytest

from core.environments import GridWorldEnv, make_supervisor
from core.rollouts import (
    collect_demonstrations,
    deterministic,
    label_trajectories,
    mixture,
    noisy_supervisor,
    rollout,
    rollouts,
)
from core.types import (
    ConfigError,
    DataError,
    EpsGreedyNoise,
    GaussianNoise,
    LinearPolicy,
    RngStream,
    TabularPolicy,
    Trajectory,
)


def test_rollout_deterministic_walk(walk):
    tr = rollout(walk, lambda x, gen: 1.0, 3, RngStream(0))
    assert [float(x[0]) for x in tr.states] == [0.0, 1.0, 2.0, 3.0]
    assert [float(u[0]) for u in tr.controls] == [1.0, 1.0, 1.0]


def test_rollout_length_invariant(walk):
    tr = rollout(walk, lambda x, gen: 0.0, 1, RngStream(0))
    assert (len(tr.states), len(tr.controls)) == (2, 1)
    with pytest.raises(ConfigError):
        rollout(walk, lambda x, gen: 0.0, 0, RngStream(0))


def test_trajectory_length_mismatch():
    with pytest.raises(DataError):
        Trajectory(states=(0, 1), controls=(0, 1))


def test_scripted_rollout_reaches_goal_from_corner(grid3, scripted):
    env = GridWorldEnv(width=3, height=3, goal=(2, 2), horizon=4, start_cells=[(0, 0)])
    tr = rollout(env, deterministic(scripted), 4, RngStream(0))
    assert tr.states[0] == env.cell(0, 0)
    assert tr.states[-1] == env.goal_state


def test_rollouts_are_order_independent(noisy_pointmass):
    sup = make_supervisor(noisy_pointmass)
    act = noisy_supervisor(noisy_pointmass, sup, GaussianNoise(0.1 * np.eye(2)))
    serial = rollouts(noisy_pointmass, act, 10, 6, RngStream(3))
    parallel = rollouts(noisy_pointmass, act, 10, 6, RngStream(3), jobs=3)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(np.array(a.states), np.array(b.states))
        np.testing.assert_array_equal(np.array(a.controls), np.array(b.controls))


def test_zero_gaussian_collection_executes_labels(pointmass, lqr):
    data, _ = collect_demonstrations(pointmass, lqr, GaussianNoise(np.zeros((2, 2))), 2, 10, RngStream(0))
    for r in data.records:
        np.testing.assert_array_equal(r.executed, r.label)


def test_zero_eps_collection_executes_labels(grid3, scripted):
    data, _ = collect_demonstrations(grid3, scripted, EpsGreedyNoise(0.0), 3, 4, RngStream(0))
    assert all(r.executed == r.label for r in data.records)


def test_eps_half_two_actions_disagrees_half_the_time(single_state):
    sup = TabularPolicy({0: 0})
    data, _ = collect_demonstrations(single_state, sup, EpsGreedyNoise(0.5), 1, 10000, RngStream(5))
    rate = np.mean([r.executed != r.label for r in data.records])
    assert rate == pytest.approx(0.5, abs=0.02)


def test_collection_provenance(pointmass, lqr):
    data, trajs = collect_demonstrations(pointmass, lqr, GaussianNoise(0.01 * np.eye(2)), 3, 10, RngStream(7),
                                         iteration=2, first_id=5)
    assert len(data) == 30
    assert data.n_trajectories == 3
    assert {r.iteration for r in data.records} == {2}
    assert {r.trajectory_id for r in data.records} == {5, 6, 7}
    assert len(data.collection_rewards) == 3
    assert data.noise_history[0].level == pytest.approx(0.02)
    for r in data.records:
        np.testing.assert_allclose(r.label, lqr.act(r.state))
        np.testing.assert_array_equal(r.state, trajs[r.trajectory_id - 5].states[r.t])


def test_single_record_dataset(walk):
    sup = LinearPolicy(np.zeros((1, 1)), np.ones(1))
    data, _ = collect_demonstrations(walk, sup, GaussianNoise(np.zeros((1, 1))), 1, 1, RngStream(0))
    assert len(data) == 1


def test_subsample_keeps_distinct_steps(pointmass, lqr):
    trajs = rollouts(pointmass, deterministic(lqr), 10, 2, RngStream(0))
    records = label_trajectories(trajs, lqr, 0, subsample=3, rng=RngStream(0))
    assert len(records) == 6
    for tid in (0, 1):
        steps = [r.t for r in records if r.trajectory_id == tid]
        assert len(set(steps)) == 3


def test_mixture_extremes(pointmass, lqr):
    zero = LinearPolicy.zeros(2, 4)
    x = np.array([1.0, 1.0, 0.0, 0.0])
    gen = np.random.default_rng(0)
    np.testing.assert_array_equal(mixture(lqr, zero, 1.0)(x, gen), lqr.act(x))
    np.testing.assert_array_equal(mixture(lqr, zero, 0.0)(x, gen), np.zeros(2))


def test_labels_do_not_depend_on_injected_noise(pointmass, lqr):
    quiet, _ = collect_demonstrations(pointmass, lqr, GaussianNoise(np.zeros((2, 2))), 2, 10, RngStream(4))
    loud, _ = collect_demonstrations(pointmass, lqr, GaussianNoise(np.eye(2)), 2, 10, RngStream(4))
    for data in (quiet, loud):
        for rec in data.records:
            np.testing.assert_array_equal(rec.label, lqr.act(rec.state))
    starts = [(a, b) for a, b in zip(quiet.records, loud.records) if a.t == 0]
    assert len(starts) == 2
    for a, b in starts:
        np.testing.assert_array_equal(a.state, b.state)
        np.testing.assert_array_equal(a.label, b.label)
    assert any(not np.allclose(rec.executed, rec.label) for rec in loud.records)
