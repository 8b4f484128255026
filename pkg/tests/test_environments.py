# -*- coding: utf-8 -*-
import math

import numpy as np
import pytest
from scipy.linalg import solve_discrete_are
from scipy.stats import multivariate_normal

from core.environments import (
    DOWN,
    LEFT,
    RIGHT,
    UP,
    GridWorldEnv,
    LinearPointMassEnv,
    LqrSupervisor,
    ScriptedGridSupervisor,
    action_log_density,
    action_probabilities,
    check_noise_family,
    lqr_gain,
    noisy_supervisor_act,
    shortest_path_distances,
    step,
)
from core.types import (
    ConfigError,
    EpsGreedyNoise,
    GaussianNoise,
    LinearPolicy,
    SingularCovarianceError,
    SolverError,
    TabularPolicy,
    Trajectory,
)


def _gen(seed=0):
    return np.random.default_rng(seed)


def test_pointmass_step_identity_dynamics():
    env = LinearPointMassEnv(A=np.eye(2), B=np.eye(2), Q=np.eye(2), R=np.eye(2), x0_mean=np.zeros(2))
    x = step(env, np.array([1.0, 0.0]), np.array([0.0, 1.0]), _gen())
    np.testing.assert_array_equal(x, [1.0, 1.0])


def test_pointmass_rejects_indefinite_r():
    with pytest.raises(ConfigError) as err:
        LinearPointMassEnv(A=np.eye(1), B=np.eye(1), Q=np.eye(1), R=np.zeros((1, 1)), x0_mean=np.zeros(1))
    assert err.value.field_path == 'environment.R'


def test_pointmass_rejects_dimension_mismatch():
    with pytest.raises(ConfigError):
        LinearPointMassEnv(A=np.eye(2), B=np.eye(3), Q=np.eye(2), R=np.eye(3), x0_mean=np.zeros(2))


def test_pointmass_reward_scalar():
    env = LinearPointMassEnv(A=[[1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], x0_mean=[0.0])
    tr = Trajectory(states=(np.array([1.0]), np.array([0.0])), controls=(np.array([1.0]),))
    assert env.reward(tr) == -2.0


def test_pointmass_reward_zero_trajectory(pointmass):
    zeros = np.zeros(pointmass.d_x)
    tr = Trajectory(states=(zeros, zeros), controls=(np.zeros(pointmass.d_u),))
    assert pointmass.reward(tr) == 0.0


def test_double_integrator_dimensions(pointmass):
    assert (pointmass.d_x, pointmass.d_u) == (4, 2)


def test_lqr_scalar_golden_ratio():
    P = (1 + math.sqrt(5)) / 2
    K = lqr_gain(1.0, 1.0, 1.0, 1.0)
    assert K[0, 0] == pytest.approx(P / (1 + P), abs=1e-8)
    assert K[0, 0] == pytest.approx(0.6180, abs=1e-4)


def test_lqr_matches_scipy_dare(pointmass):
    X = solve_discrete_are(pointmass.A, pointmass.B, pointmass.Q, pointmass.R)
    expected = np.linalg.solve(pointmass.R + pointmass.B.T @ X @ pointmass.B, pointmass.B.T @ X @ pointmass.A)
    np.testing.assert_allclose(lqr_gain(pointmass.A, pointmass.B, pointmass.Q, pointmass.R), expected, atol=1e-6)


def test_lqr_zero_state_cost_gives_zero_gain():
    K = lqr_gain(np.eye(1), np.eye(1), np.zeros((1, 1)), np.eye(1))
    np.testing.assert_array_equal(K, [[0.0]])


def test_lqr_uncontrollable_raises_with_residual():
    A = np.diag([2.0, 1.0])
    B = np.array([[0.0], [1.0]])
    with pytest.raises(SolverError) as err:
        lqr_gain(A, B, np.eye(2), np.eye(1), max_iters=200)
    assert err.value.residual > 0


def test_lqr_rejects_zero_input_matrix_even_when_stable():
    with pytest.raises(SolverError, match="all zeros"):
        lqr_gain(0.5, 0.0, 1.0, 1.0)
    with pytest.raises(SolverError):
        lqr_gain(0.5 * np.eye(2), np.zeros((2, 1)), np.eye(2), np.eye(1))


def test_scalar_lqr_closed_loop_contracts_without_process_noise():
    env = LinearPointMassEnv(A=[[1.2]], B=[[1.0]], Q=[[1.0]], R=[[1.0]], x0_mean=[3.0], horizon=20)
    sup = LqrSupervisor.for_env(env)
    x = env.initial_state(_gen())
    norms = [np.linalg.norm(x)]
    for _ in range(env.horizon):
        x = env.step(x, sup.act(x), _gen())
        norms.append(np.linalg.norm(x))
    assert all(b < a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < 1e-3 * norms[0]


def test_lqr_supervisor_scalar_action():
    sup = LqrSupervisor(lqr_gain(1.0, 1.0, 1.0, 1.0))
    assert sup.act(np.array([2.0]))[0] == pytest.approx(-1.236, abs=1e-3)


def test_grid_moves_and_wall_clamp(grid3):
    assert grid3.step(grid3.cell(0, 0), RIGHT, _gen()) == grid3.cell(1, 0)
    assert grid3.step(grid3.cell(2, 0), RIGHT, _gen()) == grid3.cell(2, 0)
    assert grid3.move(grid3.cell(0, 0), UP) == grid3.cell(0, 0)


def test_grid_goal_is_absorbing(grid3):
    for a in (UP, DOWN, LEFT, RIGHT):
        assert grid3.move(grid3.goal_state, a) == grid3.goal_state


def test_grid_transition_probs_sum_to_one():
    env = GridWorldEnv(width=3, height=3, goal=(2, 2), slip=0.1)
    for s in range(env.n_states):
        for a in range(env.n_actions):
            assert sum(env.transition_probs(s, a).values()) == pytest.approx(1.0, abs=1e-12)


def test_grid_rejects_bad_goal_and_slip():
    with pytest.raises(ConfigError):
        GridWorldEnv(width=3, height=3, goal=(3, 0))
    with pytest.raises(ConfigError):
        GridWorldEnv(width=3, height=3, goal=(2, 2), slip=1.0)


def test_grid_reward(grid3):
    reached = Trajectory(states=(0, 1, 2, 5, 8), controls=(RIGHT, RIGHT, DOWN, DOWN))
    missed = Trajectory(states=(0, 0, 0, 0, 0), controls=(UP, UP, UP, UP))
    assert grid3.reward(reached) == 1.0
    assert grid3.reward(missed) == 0.0


def test_scripted_supervisor(grid3, scripted):
    assert scripted.act(grid3.cell(1, 2)) == RIGHT
    assert scripted.act(grid3.goal_state) == UP
    dist = shortest_path_distances(grid3)
    for s in range(grid3.n_states):
        if s != grid3.goal_state:
            assert dist[grid3.move(s, scripted.act(s))] == dist[s] - 1


def test_scripted_supervisor_corner_path_length(grid3):
    assert shortest_path_distances(grid3)[grid3.cell(0, 0)] == 4
    s = grid3.cell(0, 0)
    sup = ScriptedGridSupervisor.for_env(grid3)
    for _ in range(4):
        s = grid3.move(s, sup.act(s))
    assert s == grid3.goal_state


def test_zero_gaussian_noise_returns_supervisor_action(lqr):
    x = np.array([1.0, -1.0, 0.5, 0.0])
    u = noisy_supervisor_act(lqr, x, GaussianNoise(np.zeros((2, 2))), _gen())
    np.testing.assert_array_equal(u, lqr.act(x))


def test_eps_greedy_frequencies():
    sup = TabularPolicy({0: 2})
    gen = _gen(1)
    draws = np.array([noisy_supervisor_act(sup, 0, EpsGreedyNoise(0.6), gen, n_actions=4) for _ in range(10000)])
    freqs = np.bincount(draws, minlength=4) / draws.size
    assert freqs[2] == pytest.approx(0.4, abs=0.02)
    for a in (0, 1, 3):
        assert freqs[a] == pytest.approx(0.2, abs=0.02)


def test_gaussian_sample_covariance():
    sup = LinearPolicy.zeros(2, 2)
    gen = _gen(2)
    psi = GaussianNoise(np.eye(2))
    draws = np.array([noisy_supervisor_act(sup, np.zeros(2), psi, gen) for _ in range(10000)])
    assert np.linalg.norm(np.cov(draws, rowvar=False) - np.eye(2)) < 0.1


def test_eps_greedy_log_density():
    sup = TabularPolicy({0: 1})
    psi = EpsGreedyNoise(0.3)
    assert action_log_density(sup, 0, 1, psi) == pytest.approx(math.log(0.7))
    assert action_log_density(sup, 0, 3, psi) == pytest.approx(math.log(0.1))
    assert action_log_density(sup, 0, 3, EpsGreedyNoise(0.0)) == -math.inf


def test_gaussian_log_density_at_mode():
    sup = LinearPolicy(np.zeros((1, 1)), np.zeros(1))
    assert action_log_density(sup, np.zeros(1), np.zeros(1), GaussianNoise(np.eye(1))) == \
        pytest.approx(-0.5 * math.log(2 * math.pi))


def test_gaussian_log_density_rejects_singular():
    sup = LinearPolicy(np.zeros((1, 1)), np.zeros(1))
    with pytest.raises(SingularCovarianceError):
        action_log_density(sup, np.zeros(1), np.zeros(1), GaussianNoise(np.zeros((1, 1))))


def test_gaussian_log_density_integrates_to_one():
    sup = LinearPolicy(np.array([[0.5, -1.0], [0.0, 2.0]]), np.array([0.1, -0.2]))
    x = np.array([1.0, 0.5])
    psi = GaussianNoise(np.array([[0.5, 0.1], [0.1, 0.3]]))
    proposal = multivariate_normal(mean=sup.act(x), cov=1.5 * psi.sigma)
    draws = proposal.rvs(size=20000, random_state=_gen(3))
    weights = [math.exp(action_log_density(sup, x, u, psi) - proposal.logpdf(u)) for u in draws]
    assert np.mean(weights) == pytest.approx(1.0, rel=0.01)


def test_action_probabilities_sum_to_one():
    probs = action_probabilities(TabularPolicy({0: 0}), 0, EpsGreedyNoise(0.3), 4)
    assert probs.sum() == pytest.approx(1.0)
    assert probs[0] == pytest.approx(0.7)


def test_noise_family_mismatch(grid3, pointmass):
    with pytest.raises(ConfigError):
        check_noise_family(grid3, GaussianNoise(np.eye(2)))
    with pytest.raises(ConfigError):
        check_noise_family(pointmass, EpsGreedyNoise(0.1))
    with pytest.raises(ConfigError):
        check_noise_family(pointmass, GaussianNoise(np.eye(3)))
