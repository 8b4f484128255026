# -*- coding: utf-8 -*-
"""
Rollouts and Demonstration Collection

An act_fn maps (state, numpy Generator) -> control. Each trajectory draws from
its own child stream, so serial and parallel runs give identical output.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from core.environments import noisy_supervisor_act, supervisor_act, check_noise_family
from core.types import ConfigError, DemoRecord, Dataset, Trajectory, as_control


def rollout(env, act_fn, T, rng):
    """Sample x0 ~ p(x0), u_t ~ act_fn(x_t), x_{t+1} ~ p(. | x_t, u_t)"""
    if T < 1:
        raise ConfigError(f"horizon must be >= 1, got {T}")
    gen = rng.generator()
    x = env.initial_state(gen)
    states = [x]
    controls = []
    for _ in range(T):
        u = as_control(act_fn(x, gen))
        env.check_control(u)
        x = env.step(x, u, gen)
        controls.append(u)
        states.append(x)
    return Trajectory(tuple(states), tuple(controls))


def rollouts(env, act_fn, T, M, rng, jobs=1):
    """M independent rollouts on streams rng.child(i)"""
    if jobs > 1 and M > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(lambda i: rollout(env, act_fn, T, rng.child(i)), range(M)))
    return [rollout(env, act_fn, T, rng.child(i)) for i in range(M)]


def deterministic(policy):
    """act_fn of any object with .act(x)"""
    return lambda x, gen: policy.act(x)


def noisy_supervisor(env, sup, psi):
    n_actions = getattr(env, 'n_actions', 0)
    return lambda x, gen: noisy_supervisor_act(sup, x, psi, gen, n_actions=n_actions)


def mixture(sup, robot, beta):
    """Per-timestep mixture: supervisor w.p. beta, robot otherwise"""
    def act(x, gen):
        use_supervisor = gen.random() < beta
        return sup.act(x) if use_supervisor else robot.act(x)
    return act


def label_trajectories(trajectories, sup, iteration, first_id=0, subsample=None, rng=None):
    """
    Dataset records pairing each visited state (t < T) with the noiseless
    supervisor label. With subsample, keep that many steps per trajectory,
    drawn without replacement.
    """
    records = []
    for offset, traj in enumerate(trajectories):
        tid = first_id + offset
        steps = range(traj.horizon)
        if subsample is not None and subsample < traj.horizon:
            gen = rng.child('subsample', tid).generator()
            steps = sorted(gen.choice(traj.horizon, size=subsample, replace=False).tolist())
        for t in steps:
            x = traj.states[t]
            records.append(DemoRecord(
                state=x,
                label=supervisor_act(sup, x),
                executed=traj.controls[t],
                iteration=iteration,
                trajectory_id=tid,
                t=t,
            ))
    return tuple(records)


def collect_demonstrations(env, supervisor, psi, N, T, rng, iteration=0, first_id=0,
                           subsample=None, jobs=1):
    """
    N rollouts of the psi-noisy supervisor. Returns (Dataset, trajectories);
    executed (noisy) controls stay in the trajectories, labels are noiseless.
    """
    if N < 1:
        raise ConfigError(f"need at least one demonstration, got N={N}")
    check_noise_family(env, psi)
    act_fn = noisy_supervisor(env, supervisor, psi)
    trajectories = rollouts(env, act_fn, T, N, rng.child('collect', iteration), jobs=jobs)
    dataset = Dataset(
        records=label_trajectories(trajectories, supervisor, iteration, first_id, subsample, rng),
        env_id=env.env_id,
        horizon=T,
        seed=rng.seed,
        noise_history=(psi,),
        collection_rewards=tuple(env.reward(tr) for tr in trajectories),
    )
    return dataset, trajectories


def mean_reward(env, trajectories):
    return float(np.mean([env.reward(tr) for tr in trajectories]))
