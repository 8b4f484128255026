# -*- coding: utf-8 -*-
"""
Noise Estimation

Maximum-likelihood fit of the injected-noise parameter on held-out
demonstrations, and shrinkage of that estimate so the simulated per-trajectory
deviation matches a prior alpha on the robot's final error.

Gaussian:   Sigma_hat = mean over held-out steps of d d^T,
            d = pi_hat(x) - pi*(x)
            Sigma_alpha = alpha / (T tr Sigma_hat) * Sigma_hat
eps-greedy: eps_hat = mean per-step disagreement rate
            eps_alpha = alpha / T  (our solution of the same scaling objective:
            the expected per-step 0-1 deviation of eps-greedy noise is eps)
"""

import numpy as np
from scipy.stats import wishart

from config import EPS_CAP_MARGIN, PSD_TOL, log
from core.types import (
    ConfigError,
    DataError,
    EpsGreedyNoise,
    GaussianNoise,
    NoiseEstimate,
)


def _differences(heldout, robot_policy):
    if len(heldout) == 0:
        raise DataError("held-out set is empty")
    return np.array([
        np.atleast_1d(robot_policy.act(r.state)) - np.atleast_1d(r.label)
        for r in heldout.records
    ], dtype=float)


def mle_gaussian(heldout, robot_policy):
    """Closed-form covariance MLE of the robot-vs-supervisor deviation"""
    d = _differences(heldout, robot_policy)
    sigma = d.T @ d / d.shape[0]
    return 0.5 * (sigma + sigma.T)


def epsilon_cap(n_actions):
    """Largest eps kept in the estimator's range (uniform play sits at 1 - 1/K)"""
    return 1.0 - 1.0 / n_actions - EPS_CAP_MARGIN


def mle_epsilon(heldout, robot_policy, n_actions):
    """Disagreement rate of the robot on held-out states, clipped to the cap"""
    if len(heldout) == 0:
        raise DataError("held-out set is empty")
    counts = {}
    for r in heldout.records:
        tid = (r.iteration, r.trajectory_id)
        miss, total = counts.get(tid, (0, 0))
        counts[tid] = (miss + int(robot_policy.act(r.state) != r.label), total + 1)
    rates = [miss / total for miss, total in counts.values()]
    return float(np.clip(np.mean(rates), 0.0, epsilon_cap(n_actions)))


def shrinkage_factor(sigma_hat, alpha, T):
    """beta = alpha / (T tr Sigma_hat), None when the trace is zero"""
    trace = float(np.trace(sigma_hat))
    if trace <= 0:
        return None
    return alpha / (T * trace)


def shrink_gaussian(sigma_hat, alpha, T):
    """
    Rescale Sigma_hat so that T tr(Sigma_alpha) = alpha. A zero-trace estimate
    (robot matches the supervisor) spreads alpha isotropically instead.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}", 'alpha')
    sigma_hat = np.atleast_2d(np.asarray(sigma_hat, dtype=float))
    beta = shrinkage_factor(sigma_hat, alpha, T)
    if beta is None:
        d_u = sigma_hat.shape[0]
        return (alpha / (T * d_u)) * np.eye(d_u)
    return beta * sigma_hat


def shrink_epsilon(eps_hat, alpha, T, n_actions):
    """
    eps_alpha = clamp(alpha / T, 0, cap).

    Our own solution of the shrinkage objective for eps-greedy noise: one
    step deviates with probability eps, so the expected number of
    deviations over T steps is T eps. Only the Gaussian rule has a
    published derivation.
    """
    if alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {alpha}", 'alpha')
    return float(np.clip(alpha / T, 0.0, epsilon_cap(n_actions)))


def expected_gaussian_deviation(sigma, T):
    """E sum_t ||u_t - pi*(x_t)||^2 under N(0, sigma) noise = T tr(sigma)"""
    return T * float(np.trace(np.atleast_2d(sigma)))


def regularize_covariance(sigma, ridge):
    """sigma + ridge * I, for density evaluation"""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if ridge <= 0:
        raise ConfigError(f"ridge must be > 0, got {ridge}")
    if np.max(np.abs(sigma - sigma.T), initial=0.0) > PSD_TOL:
        raise ConfigError("covariance is not symmetric")
    return 0.5 * (sigma + sigma.T) + ridge * np.eye(sigma.shape[0])


def wishart_random_covariance(d_u, target_trace, rng):
    """G G^T with standard normal G (Wishart, d_u dof), scaled to the target trace"""
    if target_trace <= 0:
        raise ConfigError(f"target trace must be > 0, got {target_trace}")
    sample = wishart(df=d_u, scale=np.eye(d_u)).rvs(random_state=rng.generator())
    sigma = np.atleast_2d(sample)
    sigma = 0.5 * (sigma + sigma.T)
    return sigma / np.trace(sigma) * target_trace


def estimate_noise(heldout, robot_policy, alpha_fn, T, env, iteration=0):
    """
    One noise update: MLE on the held-out demos, then shrinkage. alpha_fn maps
    the MLE's level (tr Sigma_hat or eps_hat) to the prior alpha.
    """
    if env.is_discrete:
        eps_hat = mle_epsilon(heldout, robot_policy, env.n_actions)
        alpha = alpha_fn(eps_hat)
        eps_alpha = shrink_epsilon(eps_hat, alpha, T, env.n_actions)
        return NoiseEstimate(
            psi_hat=EpsGreedyNoise(eps_hat),
            psi_scaled=EpsGreedyNoise(eps_alpha),
            alpha=alpha,
            beta=eps_alpha / eps_hat if eps_hat > 0 else float('nan'),
            heldout_size=len(heldout),
            fallback=eps_hat == 0,
            iteration=iteration,
        )

    sigma_hat = mle_gaussian(heldout, robot_policy)
    alpha = alpha_fn(float(np.trace(sigma_hat)))
    beta = shrinkage_factor(sigma_hat, alpha, T)
    if beta is None:
        log('noise', f"iteration {iteration}: tr(Sigma_hat) = 0, isotropic fallback", force=True)
    return NoiseEstimate(
        psi_hat=GaussianNoise(sigma_hat),
        psi_scaled=GaussianNoise(shrink_gaussian(sigma_hat, alpha, T)),
        alpha=alpha,
        beta=float('nan') if beta is None else beta,
        heldout_size=len(heldout),
        fallback=beta is None,
        iteration=iteration,
    )
