# -*- coding: utf-8 -*-
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.environments import GridWorldEnv, LinearPointMassEnv, make_supervisor


class ScalarWalk:
    """x_{t+1} = x_t + u_t from x_0 = 0, no randomness"""
    env_id = 'walk'
    is_discrete = False
    d_x = 1
    d_u = 1

    def initial_state(self, rng):
        return np.zeros(1)

    def step(self, x, u, rng):
        return x + u

    def check_control(self, u):
        pass

    def reward(self, trajectory):
        return 0.0


class SingleStateWorld:
    """One state, K actions, every action stays put"""
    env_id = 'single'
    is_discrete = True
    horizon = 1

    def __init__(self, n_actions=2):
        self.n_actions = n_actions

    def initial_state(self, rng):
        return 0

    def step(self, s, a, rng):
        return 0

    def check_control(self, u):
        assert 0 <= u < self.n_actions

    def reward(self, trajectory):
        return 0.0

    def initial_probs(self):
        return {0: 1.0}

    def transition_probs(self, s, a):
        return {0: 1.0}


@pytest.fixture
def walk():
    return ScalarWalk()


@pytest.fixture
def single_state():
    return SingleStateWorld(n_actions=2)


@pytest.fixture
def pointmass():
    return LinearPointMassEnv.double_integrator(horizon=10, process_noise_std=0.0)


@pytest.fixture
def noisy_pointmass():
    return LinearPointMassEnv.double_integrator(horizon=10, process_noise_std=0.01)


@pytest.fixture
def grid3():
    return GridWorldEnv(width=3, height=3, goal=(2, 2), slip=0.0, horizon=4)


@pytest.fixture
def lqr(pointmass):
    return make_supervisor(pointmass)


@pytest.fixture
def scripted(grid3):
    return make_supervisor(grid3)
