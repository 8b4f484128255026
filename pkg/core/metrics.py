# -*- coding: utf-8 -*-
"""
Metrics Module

Surrogate losses, Monte-Carlo covariate-shift reports, the held-out noise
negative log-likelihood, and exact trajectory-distribution enumeration on
grid worlds with the KL / TV bound checks built on it.
"""

import math
from dataclasses import dataclass

import numpy as np

from config import DENSITY_RIDGE, ENUMERATION_LIMIT, LEMMA_SLACK
from core.environments import action_log_density, action_probabilities
from core.noise import regularize_covariance
from core.rollouts import deterministic, noisy_supervisor, rollouts
from core.types import (
    ConfigError,
    EnumerationLimitError,
    EpsGreedyNoise,
    GaussianNoise,
    Trajectory,
)

INFINITE_KL = math.inf


@dataclass(frozen=True)
class LossSpec:
    """
    Per-step surrogate loss. kind is 'squared_l2' or 'zero_one'; a normalizer
    divides the squared loss and clips it into [0, 1].
    """
    kind: str = 'squared_l2'
    normalizer: float = None

    def __post_init__(self):
        if self.kind not in ('squared_l2', 'zero_one'):
            raise ConfigError(f"unknown loss {self.kind!r}", 'loss')
        if self.normalizer is not None and self.normalizer <= 0:
            raise ConfigError("loss normalizer must be > 0", 'loss.normalizer')

    def step(self, u1, u2):
        if self.kind == 'zero_one':
            return float(int(u1) != int(u2))
        diff = np.atleast_1d(u1) - np.atleast_1d(u2)
        value = float(diff @ diff)
        if self.normalizer is not None:
            value = min(value / self.normalizer, 1.0)
        return value

    @classmethod
    def for_env(cls, env):
        return cls('zero_one') if env.is_discrete else cls('squared_l2')


def trajectory_loss(theta_1, theta_2, trajectory, loss_spec):
    """J(theta_1, theta_2 | xi): summed over t = 0..T-1, terminal state excluded"""
    return sum(
        loss_spec.step(theta_1.act(x), theta_2.act(x))
        for x in trajectory.states[:-1]
    )


def _mean_stderr(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def sample_losses(env, act_fn, theta_1, theta_2, loss_spec, M, rng, jobs=1):
    """Roll out act_fn M times; returns (trajectories, per-trajectory J)"""
    if M < 1:
        raise ConfigError(f"need at least one rollout, got M={M}")
    if hasattr(act_fn, 'act'):
        act_fn = deterministic(act_fn)
    trajectories = rollouts(env, act_fn, env.horizon, M, rng, jobs=jobs)
    return trajectories, [trajectory_loss(theta_1, theta_2, tr, loss_spec) for tr in trajectories]


def expected_loss(env, rollout_policy, theta_1, theta_2, loss_spec, M, rng, jobs=1):
    """Monte-Carlo (mean, stderr) of J over rollouts of rollout_policy"""
    _, losses = sample_losses(env, rollout_policy, theta_1, theta_2, loss_spec, M, rng, jobs)
    return _mean_stderr(losses)


@dataclass(frozen=True)
class ShiftReport:
    """Loss on the robot's distribution split into shift + standard loss"""
    loss_on_robot_dist: float
    loss_on_collection_dist: float
    shift: float
    standard_loss: float
    n_rollouts: int
    std_errors: tuple

    @classmethod
    def from_losses(cls, robot_losses, collection_losses):
        robot_mean, robot_se = _mean_stderr(robot_losses)
        coll_mean, coll_se = _mean_stderr(collection_losses)
        return cls(
            loss_on_robot_dist=robot_mean,
            loss_on_collection_dist=coll_mean,
            shift=robot_mean - coll_mean,
            standard_loss=coll_mean,
            n_rollouts=len(robot_losses),
            std_errors=(robot_se, coll_se),
        )


def covariate_shift(env, sup, psi, robot, loss_spec, M, rng, jobs=1):
    """J(theta_R, theta*) on the robot's own rollouts vs on psi-noisy supervisor rollouts"""
    _, robot_losses = sample_losses(env, robot, robot, sup, loss_spec, M, rng.child('robot'), jobs)
    _, coll_losses = sample_losses(env, noisy_supervisor(env, sup, psi), robot, sup, loss_spec, M,
                                   rng.child('collection'), jobs)
    return ShiftReport.from_losses(robot_losses, coll_losses)


def nll_objective(heldout, sup, psi, robot, n_actions=4):
    """
    Mean over held-out trajectories of -sum_t log pi*(pi_hat(x_t) | x_t, psi).
    Gaussian densities use sigma + DENSITY_RIDGE * I. A zero density gives +inf.
    """
    if isinstance(psi, GaussianNoise):
        psi = GaussianNoise(regularize_covariance(psi.sigma, DENSITY_RIDGE))
    per_trajectory = {}
    for r in heldout.records:
        tid = (r.iteration, r.trajectory_id)
        logp = action_log_density(sup, r.state, robot.act(r.state), psi, n_actions)
        per_trajectory[tid] = per_trajectory.get(tid, 0.0) - logp
    if not per_trajectory:
        raise ConfigError("held-out set is empty")
    values = list(per_trajectory.values())
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(np.mean(values))


@dataclass(frozen=True, eq=False)
class EnumeratedDistribution:
    """
    Every positive-probability trajectory of a discrete MDP with its exact
    probability. Keys are flat tuples (x0, u0, x1, ..., x_T).
    """
    probs: dict
    horizon: int

    def items(self):
        return self.probs.items()

    @property
    def total_mass(self):
        return math.fsum(self.probs.values())

    def expectation(self, fn):
        """E_P fn(trajectory)"""
        return math.fsum(p * fn(key_to_trajectory(k)) for k, p in self.probs.items())


def key_to_trajectory(key):
    return Trajectory(states=tuple(key[0::2]), controls=tuple(key[1::2]))


def policy_density(policy, n_actions):
    """Delta distribution of a deterministic policy"""
    def density(x):
        probs = np.zeros(n_actions)
        probs[int(policy.act(x))] = 1.0
        return probs
    return density


def eps_greedy_density(sup, eps, n_actions):
    psi = EpsGreedyNoise(eps)
    return lambda x: action_probabilities(sup, x, psi, n_actions)


def enumerate_distribution(env, act_density_fn, T, limit=ENUMERATION_LIMIT):
    """p(xi) = p(x0) prod_t pi(u_t | x_t) p(x_{t+1} | x_t, u_t), exactly"""
    initial = {s: p for s, p in env.initial_probs().items() if p > 0}
    if env.n_actions ** T * len(initial) > limit:
        raise EnumerationLimitError(
            f"{env.n_actions}^{T} x {len(initial)} initial states exceeds the limit {limit}"
        )
    frontier = [((s,), p) for s, p in initial.items()]
    for _ in range(T):
        expanded = []
        for path, p in frontier:
            x = path[-1]
            probs = act_density_fn(x)
            for a, pa in enumerate(probs):
                if pa <= 0:
                    continue
                for nxt, px in env.transition_probs(x, a).items():
                    if px > 0:
                        expanded.append((path + (a, nxt), p * pa * px))
        frontier = expanded
    return EnumeratedDistribution(probs=dict(frontier), horizon=T)


def exact_kl(P, Q):
    """sum p log(p / q); INFINITE_KL when P puts mass where Q has none"""
    terms = []
    for key, p in P.items():
        if p <= 0:
            continue
        q = Q.probs.get(key, 0.0)
        if q <= 0:
            return INFINITE_KL
        terms.append(p * math.log(p / q))
    return max(math.fsum(terms), 0.0)


def exact_tv(P, Q):
    """Half the L1 distance over the union support"""
    keys = set(P.probs) | set(Q.probs)
    return 0.5 * math.fsum(abs(P.probs.get(k, 0.0) - Q.probs.get(k, 0.0)) for k in keys)


def policy_ratio_kl(P, density_a, density_b):
    """
    E_P sum_t log(pi_a(u_t|x_t) / pi_b(u_t|x_t)); equals KL between the two
    policies' trajectory distributions because the dynamics terms cancel.
    """
    total = []
    for key, p in P.items():
        log_ratio = 0.0
        for x, u in zip(key[0:-1:2], key[1::2]):
            pa = density_a(x)[u]
            pb = density_b(x)[u]
            if pb <= 0:
                return INFINITE_KL
            log_ratio += math.log(pa / pb)
        total.append(p * log_ratio)
    return math.fsum(total)


def check_lemma1(P, Q, robot, sup, loss_spec):
    """|E_Q J - E_P J| <= T sqrt(KL(P, Q) / 2) with per-step loss in [0, 1]"""
    step_loss = {}

    def J(key):
        total = 0.0
        for x in key[0:-1:2]:
            if x not in step_loss:
                step_loss[x] = loss_spec.step(robot.act(x), sup.act(x))
            total += step_loss[x]
        return total

    e_p = math.fsum(p * J(k) for k, p in P.items())
    e_q = math.fsum(q * J(k) for k, q in Q.items())
    lhs = abs(e_q - e_p)
    kl = exact_kl(P, Q)
    rhs = INFINITE_KL if math.isinf(kl) else P.horizon * math.sqrt(kl / 2.0)
    return lhs, rhs, lhs <= rhs + LEMMA_SLACK


def check_lemma2(P, Q, f, B):
    """|E_P f - E_Q f| <= B TV(P, Q) over a finite support"""
    p = np.asarray(P, dtype=float)
    q = np.asarray(Q, dtype=float)
    f = np.asarray(f, dtype=float)
    if np.any(f < 0) or np.any(f > B):
        raise ConfigError(f"f must take values in [0, {B}]")
    lhs = abs(float(p @ f) - float(q @ f))
    rhs = B * 0.5 * float(np.abs(p - q).sum())
    return lhs, rhs, lhs <= rhs + LEMMA_SLACK


@dataclass(frozen=True)
class Prop1Report:
    """Outcome of the noisy-vs-noiseless supervisor KL comparison"""
    kl_noisy: float
    kl_noiseless: float
    strict: bool
    premise_holds: bool
    robot_error: float
    message: str


def check_prop1(env, sup, robot, eps, T):
    """
    KL(robot dist, eps-noisy supervisor dist) < KL(robot dist, supervisor dist),
    the right side being infinite whenever the robot errs somewhere reachable.
    """
    K = env.n_actions
    P = enumerate_distribution(env, policy_density(robot, K), T)
    error = P.expectation(lambda tr: trajectory_loss(robot, sup, tr, LossSpec('zero_one')))
    if error <= 0:
        return Prop1Report(0.0, 0.0, False, False, error,
                           "premise violated: robot has zero error on its own distribution")
    noisy = enumerate_distribution(env, eps_greedy_density(sup, eps, K), T)
    clean = enumerate_distribution(env, policy_density(sup, K), T)
    kl_noisy = exact_kl(P, noisy)
    kl_clean = exact_kl(P, clean)
    strict = kl_noisy < kl_clean
    if strict:
        message = "noisy supervisor distribution is strictly closer"
    else:
        message = "inequality not strict (both divergences infinite)" if math.isinf(kl_noisy) \
            else "inequality not strict"
    return Prop1Report(kl_noisy, kl_clean, strict, True, error, message)
