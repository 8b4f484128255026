# -*- coding: utf-8 -*-
"""
Imitation Learning Algorithms

Behavior Cloning, DART, DAgger (and DAgger-B through a retrain schedule),
Isotropic-Gaussian, and fixed-covariance noise injection. BC, DART, Isotropic
and fixed-noise runs share one collection loop, so DART with its noise forced
to zero is the same computation as BC.

Stream layout under the run's RngStream:
    collect/<k>/<i>      collection rollout i of iteration k (0-based)
    subsample/<id>       per-trajectory subsample draw
    eval/<k>/robot/<i>   checkpoint rollouts of the robot
    eval/<k>/collection/<i>
    supervisor_eval/<i>  reward normalization rollouts
"""

import math
from dataclasses import dataclass, field

import numpy as np

from config import (
    CHECKPOINT_FRACTIONS,
    DAGGER_BETA,
    DEFAULT_EVAL_ROLLOUTS,
    ISOTROPIC_SCALE,
    ALGORITHM_KINDS,
    log,
    normalize_reward,
)
from core.learners import fit, initial_policy, training_loss
from core.metrics import LossSpec, ShiftReport, sample_losses
from core.noise import estimate_noise
from core.rollouts import (
    collect_demonstrations,
    deterministic,
    label_trajectories,
    mean_reward,
    mixture,
    noisy_supervisor,
    rollouts,
)
from core.types import ConfigError, Dataset, EpsGreedyNoise, GaussianNoise

ALPHA_MODES = ('current', 'multiplier', 'absolute')


@dataclass(frozen=True)
class AlgorithmConfig:
    """
    One algorithm's protocol. demos_per_iteration is an int or a list of K
    counts. alpha_mode: 'current' (alpha_k = T tr Sigma_hat_k, no rescale),
    'multiplier' (alpha = m T tr Sigma_hat_1), 'absolute'. retrain lists the
    iterations at which DAgger refits and DART re-estimates its noise
    (None = every iteration); DART holds psi between updates.
    """
    kind: str
    name: str = None
    iterations: int = 1
    demos_per_iteration: tuple = 1
    alpha_mode: str = 'current'
    alpha_value: float = 1.0
    beta: float = DAGGER_BETA
    initial_noise: float = 0.0
    isotropic_scale: float = ISOTROPIC_SCALE
    retrain: tuple = None
    warm_start: bool = True
    force_zero_noise: bool = False
    checkpoints: tuple = None
    subsample: int = None
    eval_rollouts: int = DEFAULT_EVAL_ROLLOUTS

    def __post_init__(self):
        if self.kind not in ALGORITHM_KINDS:
            raise ConfigError(f"unknown algorithm {self.kind!r}, expected one of {ALGORITHM_KINDS}", 'kind')
        if self.name is None:
            object.__setattr__(self, 'name', self.kind)
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1", 'iterations')
        counts = self.demos_per_iteration
        if isinstance(counts, int):
            counts = (counts,) * self.iterations
        counts = tuple(int(n) for n in counts)
        if len(counts) != self.iterations:
            raise ConfigError(f"needs {self.iterations} counts, got {len(counts)}", 'demos_per_iteration')
        if min(counts) < 1:
            raise ConfigError("every iteration needs at least one demonstration", 'demos_per_iteration')
        object.__setattr__(self, 'demos_per_iteration', counts)
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}", 'beta')
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigError(f"alpha mode must be one of {ALPHA_MODES}", 'alpha.mode')
        if self.alpha_value < 0:
            raise ConfigError("alpha value must be >= 0", 'alpha.value')
        if self.initial_noise < 0 or self.isotropic_scale < 0:
            raise ConfigError("noise levels must be >= 0", 'initial_noise')
        if self.eval_rollouts < 1:
            raise ConfigError("eval_rollouts must be >= 1", 'eval_rollouts')
        if self.subsample is not None and self.subsample < 1:
            raise ConfigError("subsample must be >= 1", 'subsample')
        if self.retrain is not None:
            object.__setattr__(self, 'retrain', tuple(sorted(int(k) for k in self.retrain)))
        if self.checkpoints is not None:
            points = tuple(sorted({int(k) for k in self.checkpoints} | {self.iterations}))
            if points[0] < 1 or points[-1] > self.iterations:
                raise ConfigError(f"checkpoints must lie in 1..{self.iterations}", 'checkpoints')
            object.__setattr__(self, 'checkpoints', points)

    def checkpoint_set(self):
        if self.checkpoints is not None:
            return set(self.checkpoints)
        K = self.iterations
        return {max(1, math.ceil(K * f)) for f in CHECKPOINT_FRACTIONS}

    def retrains_at(self, k):
        return self.retrain is None or k in self.retrain or k == self.iterations

    def updates_noise_at(self, k):
        return k < self.iterations and (self.retrain is None or k in self.retrain)


@dataclass(frozen=True)
class CheckpointEval:
    shift: ShiftReport
    train_loss: float
    robot_reward: float
    robot_reward_normalized: float


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    n_demos: int
    n_records: int
    n_fits: int
    noise_level: float
    collection_reward: float
    collection_reward_normalized: float
    evaluation: CheckpointEval = None
    noise_estimate: object = None


@dataclass
class RunTrace:
    """Per-iteration quantities behind the learning / shift / collection curves"""
    algorithm: str
    seed: int
    supervisor_reward: float
    records: list = field(default_factory=list)
    policy: object = None
    dataset: Dataset = None

    def rows(self, experiment=''):
        """Long-format result rows, deterministic order"""
        out = []

        def emit(rec, metric, value):
            out.append({
                'experiment': experiment,
                'algorithm': self.algorithm,
                'seed': self.seed,
                'iteration': rec.iteration,
                'n_demos': rec.n_demos,
                'metric': metric,
                'value': float(value),
            })

        for rec in self.records:
            emit(rec, 'n_records', rec.n_records)
            emit(rec, 'n_fits', rec.n_fits)
            emit(rec, 'noise_level', rec.noise_level)
            emit(rec, 'collection_reward', rec.collection_reward)
            emit(rec, 'collection_reward_normalized', rec.collection_reward_normalized)
            ev = rec.evaluation
            if ev is not None:
                emit(rec, 'loss_robot', ev.shift.loss_on_robot_dist)
                emit(rec, 'loss_robot_stderr', ev.shift.std_errors[0])
                emit(rec, 'loss_collection', ev.shift.loss_on_collection_dist)
                emit(rec, 'loss_collection_stderr', ev.shift.std_errors[1])
                emit(rec, 'shift', ev.shift.shift)
                emit(rec, 'train_loss', ev.train_loss)
                emit(rec, 'robot_reward', ev.robot_reward)
                emit(rec, 'robot_reward_normalized', ev.robot_reward_normalized)
            est = rec.noise_estimate
            if est is not None:
                emit(rec, 'noise_hat', est.psi_hat.level)
                emit(rec, 'noise_scaled', est.psi_scaled.level)
                emit(rec, 'noise_alpha', est.alpha)
                emit(rec, 'noise_beta', est.beta)
                emit(rec, 'noise_heldout', est.heldout_size)
                emit(rec, 'noise_fallback', int(est.fallback))
        if self.records:
            emit(self.records[-1], 'supervisor_reward', self.supervisor_reward)
        return out

    def final(self, metric):
        """Value of a checkpoint metric at the last iteration"""
        ev = self.records[-1].evaluation
        return {
            'loss_robot': ev.shift.loss_on_robot_dist,
            'loss_collection': ev.shift.loss_on_collection_dist,
            'shift': ev.shift.shift,
            'robot_reward': ev.robot_reward,
        }[metric]


def zero_noise(env):
    if env.is_discrete:
        return EpsGreedyNoise(0.0)
    return GaussianNoise(np.zeros((env.d_u, env.d_u)))


def _initial_noise(env, level):
    if env.is_discrete:
        return EpsGreedyNoise(level)
    return GaussianNoise.isotropic(env.d_u, level)


def supervisor_reward(env, sup, M, rng):
    """Mean reward of noiseless supervisor rollouts (normalization constant)"""
    return mean_reward(env, rollouts(env, deterministic(sup), env.horizon, M, rng.child('supervisor_eval')))


def _evaluate(env, sup, robot, collection_fn, train, cfg, rng, k, sup_reward):
    loss = LossSpec.for_env(env)
    M = cfg.eval_rollouts
    robot_trajs, robot_losses = sample_losses(env, robot, robot, sup, loss, M, rng.child('eval', k - 1, 'robot'))
    _, coll_losses = sample_losses(env, collection_fn, robot, sup, loss, M, rng.child('eval', k - 1, 'collection'))
    robot_reward = mean_reward(env, robot_trajs)
    return CheckpointEval(
        shift=ShiftReport.from_losses(robot_losses, coll_losses),
        train_loss=training_loss(robot, train, loss),
        robot_reward=robot_reward,
        robot_reward_normalized=normalize_reward(robot_reward, sup_reward),
    )


def _alpha_rule(cfg, T):
    """Map the MLE level (tr Sigma_hat or eps_hat) to alpha"""
    first_level = []

    def alpha_fn(level):
        if cfg.alpha_mode == 'absolute':
            return cfg.alpha_value
        if cfg.alpha_mode == 'multiplier':
            if not first_level:
                first_level.append(level)
            return cfg.alpha_value * T * first_level[0]
        return T * level

    return alpha_fn


def _first_split(data):
    """
    Iteration 1 has no earlier data: fit on the first half of its
    trajectories, hold out the rest (in-sample when N = 1).
    """
    ids = data.trajectory_ids()
    if len(ids) < 2:
        return data, data
    half = len(ids) // 2
    return data.select(ids[:half]), data.select(ids[half:])


def _empty(env, T, rng):
    return Dataset(env_id=env.env_id, horizon=T, seed=rng.seed)


def _check_kind(cfg, *kinds):
    if cfg.kind not in kinds:
        raise ConfigError(f"expected algorithm kind in {kinds}, got {cfg.kind!r}", 'kind')


def _run_noise_injection(env, sup, learner, cfg, rng, psi, adapt):
    T = env.horizon
    checkpoints = cfg.checkpoint_set()
    sup_reward = supervisor_reward(env, sup, cfg.eval_rollouts, rng)
    alpha_fn = _alpha_rule(cfg, T)
    trace = RunTrace(algorithm=cfg.name, seed=rng.seed, supervisor_reward=sup_reward)

    train = _empty(env, T, rng)
    n_fits = 0
    next_id = 0
    robot = None
    for k in range(1, cfg.iterations + 1):
        N = cfg.demos_per_iteration[k - 1]
        data, _ = collect_demonstrations(env, sup, psi, N, T, rng, iteration=k - 1,
                                         first_id=next_id, subsample=cfg.subsample)
        next_id += N

        estimate = None
        if adapt and cfg.updates_noise_at(k):
            fit_part, heldout = (train, data) if len(train) else _first_split(data)
            theta_hat = fit(learner, fit_part)
            n_fits += 1
            estimate = estimate_noise(heldout, theta_hat, alpha_fn, T, env, iteration=k)
            log(cfg.name, f"seed {rng.seed} iteration {k}: level {estimate.psi_hat.level:.6g} "
                          f"-> {estimate.psi_scaled.level:.6g}")

        train = train.merge(data)
        collect_reward = float(np.mean(data.collection_rewards))

        evaluation = None
        if k in checkpoints:
            robot = fit(learner, train)
            n_fits += 1
            evaluation = _evaluate(env, sup, robot, noisy_supervisor(env, sup, psi), train, cfg, rng, k, sup_reward)

        trace.records.append(IterationRecord(
            iteration=k,
            n_demos=train.n_trajectories,
            n_records=len(train),
            n_fits=n_fits,
            noise_level=psi.level,
            collection_reward=collect_reward,
            collection_reward_normalized=normalize_reward(collect_reward, sup_reward),
            evaluation=evaluation,
            noise_estimate=estimate,
        ))
        if estimate is not None:
            psi = estimate.psi_scaled

    trace.policy = robot
    trace.dataset = train
    return robot, trace


def run_behavior_cloning(env, sup, learner, cfg, rng):
    """Noiseless supervisor demonstrations, fit on the aggregate"""
    _check_kind(cfg, 'bc')
    return _run_noise_injection(env, sup, learner, cfg, rng, zero_noise(env), adapt=False)


def run_dart(env, sup, learner, cfg, rng):
    """
    Collect with psi_k, fit on earlier data, estimate psi_hat on this
    iteration's (held-out) demos, shrink to psi_alpha, repeat; the final robot
    is fit on every demonstration. With a retrain schedule the estimate runs
    only at the listed iterations and psi is held in between.
    """
    _check_kind(cfg, 'dart')
    if cfg.force_zero_noise:
        return _run_noise_injection(env, sup, learner, cfg, rng, zero_noise(env), adapt=False)
    return _run_noise_injection(env, sup, learner, cfg, rng, _initial_noise(env, cfg.initial_noise), adapt=True)


def run_isotropic(env, sup, learner, cfg, rng):
    """DART loop with psi fixed to scale * I"""
    _check_kind(cfg, 'isotropic')
    if env.is_discrete:
        raise ConfigError("isotropic noise needs a continuous environment", 'environment.kind')
    psi = GaussianNoise.isotropic(env.d_u, cfg.isotropic_scale)
    return _run_noise_injection(env, sup, learner, cfg, rng, psi, adapt=False)


def run_fixed_noise(env, sup, learner, cfg, rng, psi):
    """Noise injection with a caller-chosen constant parameter"""
    return _run_noise_injection(env, sup, learner, cfg, rng, psi, adapt=False)


def run_dagger(env, sup, learner, cfg, rng):
    """
    Roll out the per-timestep mixture (supervisor w.p. beta, else the current
    robot), label every visited state with the supervisor, aggregate, refit on
    schedule. One pure supervisor demonstration seeds the first robot.
    """
    _check_kind(cfg, 'dagger')
    T = env.horizon
    checkpoints = cfg.checkpoint_set()
    sup_reward = supervisor_reward(env, sup, cfg.eval_rollouts, rng)
    trace = RunTrace(algorithm=cfg.name, seed=rng.seed, supervisor_reward=sup_reward)

    train = _empty(env, T, rng)
    robot = initial_policy(learner, env)
    n_fits = 0
    next_id = 0
    if cfg.warm_start:
        warm = rollouts(env, deterministic(sup), T, 1, rng.child('warm_start'))
        train = train.merge(Dataset(
            records=label_trajectories(warm, sup, 0, next_id, cfg.subsample, rng),
            env_id=env.env_id, horizon=T, seed=rng.seed,
        ))
        next_id += 1
        robot = fit(learner, train)
        n_fits += 1

    for k in range(1, cfg.iterations + 1):
        N = cfg.demos_per_iteration[k - 1]
        act_fn = mixture(sup, robot, cfg.beta)
        trajs = rollouts(env, act_fn, T, N, rng.child('collect', k - 1))
        rewards = tuple(env.reward(tr) for tr in trajs)
        train = train.merge(Dataset(
            records=label_trajectories(trajs, sup, k - 1, next_id, cfg.subsample, rng),
            env_id=env.env_id, horizon=T, seed=rng.seed, collection_rewards=rewards,
        ))
        next_id += N
        collect_reward = float(np.mean(rewards))

        if cfg.retrains_at(k):
            robot = fit(learner, train)
            n_fits += 1

        evaluation = None
        if k in checkpoints:
            evaluation = _evaluate(env, sup, robot, act_fn, train, cfg, rng, k, sup_reward)
            log(cfg.name, f"seed {rng.seed} iteration {k}: loss on robot dist "
                          f"{evaluation.shift.loss_on_robot_dist:.6g}")

        trace.records.append(IterationRecord(
            iteration=k,
            n_demos=train.n_trajectories,
            n_records=len(train),
            n_fits=n_fits,
            noise_level=1.0 - cfg.beta,
            collection_reward=collect_reward,
            collection_reward_normalized=normalize_reward(collect_reward, sup_reward),
            evaluation=evaluation,
        ))

    trace.policy = robot
    trace.dataset = train
    return robot, trace


RUNNERS = {
    'bc': run_behavior_cloning,
    'dart': run_dart,
    'dagger': run_dagger,
    'isotropic': run_isotropic,
}


def run_algorithm(env, sup, learner, cfg, rng):
    """Dispatch on cfg.kind"""
    return RUNNERS[cfg.kind](env, sup, learner, cfg, rng)
