# -*- coding: utf-8 -*-
"""
Oracle Suite

Fixed-seed checks of the estimators, the shrinkage rule and the divergence
bounds against brute-force or closed-form references. Every check returns
{'check', 'lhs', 'rhs', 'passed', 'detail'}; run_oracle_suite collects them
into one table.
"""

import math
import time

import numpy as np
import pandas as pd
from scipy.linalg import solve_discrete_are
from scipy.optimize import minimize

from config import LEMMA_SLACK, log
from core.environments import (
    GridWorldEnv,
    LinearPointMassEnv,
    LqrSupervisor,
    ScriptedGridSupervisor,
    lqr_gain,
)
from core.metrics import (
    LossSpec,
    check_lemma1,
    check_lemma2,
    check_prop1,
    enumerate_distribution,
    eps_greedy_density,
    exact_kl,
    exact_tv,
    expected_loss,
    nll_objective,
    policy_density,
    policy_ratio_kl,
)
from core.noise import (
    epsilon_cap,
    mle_epsilon,
    mle_gaussian,
    shrink_gaussian,
    wishart_random_covariance,
)
from core.rollouts import noisy_supervisor, rollouts
from core.types import (
    Dataset,
    DemoRecord,
    EpsGreedyNoise,
    GaussianNoise,
    LinearPolicy,
    RngStream,
    TabularPolicy,
)

MLE_TOL = 1e-5
EPS_GRID_STEP = 1e-4
SHRINK_REL_TOL = 1e-9
NORMALIZED_TOL = 1e-12
DEVIATION_REL_TOL = 0.02
KL_IDENTITY_TOL = 1e-10
MASS_TOL = 1e-10


def _result(check, lhs, rhs, passed, detail=''):
    return {'check': check, 'lhs': float(lhs), 'rhs': float(rhs), 'passed': bool(passed), 'detail': detail}


def _small_grid(slip=0.0, horizon=4):
    return GridWorldEnv(width=3, height=3, goal=(2, 2), slip=slip, horizon=horizon)


def _random_table(env, gen):
    return TabularPolicy({s: int(gen.integers(env.n_actions)) for s in range(env.n_states)})


def _gaussian_nll(sigmas, S, n, M):
    """Held-out NLL for a batch of covariances, from the second moment S"""
    inv = np.linalg.inv(sigmas)
    _, logdet = np.linalg.slogdet(2.0 * math.pi * sigmas)
    quad = np.einsum('kij,ji->k', inv, S)
    return (n / M) * (0.5 * quad + 0.5 * logdet)


def _cholesky_params(sigma):
    L = np.linalg.cholesky(sigma)
    return np.array([math.log(L[0, 0]), L[1, 0], math.log(L[1, 1])])


def _params_to_sigma(theta):
    """theta = (log l11, l21, log l22), batched along the first axis"""
    theta = np.atleast_2d(theta)
    L = np.zeros((theta.shape[0], 2, 2))
    L[:, 0, 0] = np.exp(theta[:, 0])
    L[:, 1, 0] = theta[:, 1]
    L[:, 1, 1] = np.exp(theta[:, 2])
    return L @ np.transpose(L, (0, 2, 1))


def check_gaussian_mle(n_instances=50, n_search=10 ** 4, seed=0):
    """Closed-form Sigma_hat against random search plus a local optimizer"""
    gen = RngStream(seed).child('oracle', 'gaussian_mle').generator()
    robot = LinearPolicy(np.eye(2), np.zeros(2))
    sup = LinearPolicy.zeros(2, 2)
    worst = -math.inf
    for _ in range(n_instances):
        M = int(gen.integers(2, 6))
        T = int(gen.integers(3, 8))
        G = gen.standard_normal((2, 2))
        true_sigma = G @ G.T + 0.1 * np.eye(2)
        d = gen.multivariate_normal(np.zeros(2), true_sigma, size=(M, T))
        heldout = Dataset(records=tuple(
            DemoRecord(state=d[m, t], label=np.zeros(2), executed=d[m, t], iteration=0, trajectory_id=m, t=t)
            for m in range(M) for t in range(T)
        ))
        sigma_hat = mle_gaussian(heldout, robot)
        closed_form = nll_objective(heldout, sup, GaussianNoise(sigma_hat), robot)

        n = M * T
        S = np.einsum('mti,mtj->ij', d, d) / n
        centre = _cholesky_params(sigma_hat)
        candidates = centre + 0.5 * gen.standard_normal((n_search, 3))
        best = float(np.min(_gaussian_nll(_params_to_sigma(candidates), S, n, M)))
        start = _cholesky_params(np.eye(2))
        opt = minimize(lambda th: float(_gaussian_nll(_params_to_sigma(th), S, n, M)[0]),
                       start, method='Nelder-Mead', options={'xatol': 1e-10, 'fatol': 1e-12, 'maxiter': 5000})
        best = min(best, float(opt.fun))
        worst = max(worst, closed_form - best)
    return _result('gaussian_mle', worst, MLE_TOL, worst <= MLE_TOL,
                   f"{n_instances} instances; max NLL(Sigma_hat) - best numerical NLL")


def _epsilon_nll(grid, mismatches, n, M, K):
    with np.errstate(divide='ignore', invalid='ignore'):
        miss = np.where(mismatches > 0, -mismatches * np.log(grid / (K - 1)), 0.0)
        hit = np.where(n - mismatches > 0, -(n - mismatches) * np.log1p(-grid), 0.0)
    return (miss + hit) / M


def check_epsilon_mle(n_instances=50, seed=0, K=4):
    """eps_hat against the argmin of the held-out NLL on a fine grid"""
    gen = RngStream(seed).child('oracle', 'epsilon_mle').generator()
    env = _small_grid()
    cap = epsilon_cap(K)
    grid = np.append(np.arange(0.0, cap, EPS_GRID_STEP), cap)
    worst = 0.0
    worst_consistency = 0.0
    for _ in range(n_instances):
        sup = _random_table(env, gen)
        agree = gen.random()
        robot = TabularPolicy({s: a if gen.random() < agree else int(gen.integers(K))
                               for s, a in sup.table.items()})
        M = int(gen.integers(2, 6))
        T = int(gen.integers(3, 8))
        states = gen.integers(env.n_states, size=(M, T))
        heldout = Dataset(records=tuple(
            DemoRecord(state=int(states[m, t]), label=sup.act(int(states[m, t])), executed=None,
                       iteration=0, trajectory_id=m, t=t)
            for m in range(M) for t in range(T)
        ))
        eps_hat = mle_epsilon(heldout, robot, K)
        mismatches = sum(robot.act(r.state) != r.label for r in heldout.records)
        nll = _epsilon_nll(grid, mismatches, M * T, M, K)
        worst = max(worst, abs(eps_hat - float(grid[int(np.argmin(nll))])))

        direct = nll_objective(heldout, sup, EpsGreedyNoise(eps_hat), robot, K)
        counted = float(_epsilon_nll(np.array([eps_hat]), mismatches, M * T, M, K)[0])
        if math.isfinite(direct) and math.isfinite(counted):
            worst_consistency = max(worst_consistency, abs(direct - counted) / max(1.0, abs(counted)))
        elif math.isfinite(direct) != math.isfinite(counted):
            worst_consistency = math.inf
    passed = worst <= EPS_GRID_STEP and worst_consistency <= 1e-9
    return _result('epsilon_mle', worst, EPS_GRID_STEP, passed,
                   f"{n_instances} instances; NLL by records vs counts differs by {worst_consistency:.2e}")


def check_shrinkage_identity(n_instances=100, seed=0, shrink=shrink_gaussian):
    """T tr(shrink(Sigma_hat, alpha, T)) = alpha; the normalized matrix is unchanged"""
    gen = RngStream(seed).child('oracle', 'shrinkage').generator()
    worst_rel = 0.0
    worst_shape = 0.0
    for _ in range(n_instances):
        d_u = int(gen.integers(1, 5))
        G = gen.standard_normal((d_u, d_u + 1))
        sigma_hat = G @ G.T
        alpha = float(gen.uniform(0.01, 10.0))
        T = int(gen.integers(1, 50))
        scaled = shrink(sigma_hat, alpha, T)
        worst_rel = max(worst_rel, abs(T * np.trace(scaled) - alpha) / alpha)
        worst_shape = max(worst_shape, float(np.max(np.abs(
            scaled / np.trace(scaled) - sigma_hat / np.trace(sigma_hat)
        ))))
    passed = worst_rel <= SHRINK_REL_TOL and worst_shape <= NORMALIZED_TOL
    return _result('shrinkage_identity', worst_rel, SHRINK_REL_TOL, passed,
                   f"{n_instances} instances; max normalized-matrix change {worst_shape:.2e}")


def check_deviation_identity(n_covariances=5, n_rollouts=10 ** 4, T=10, seed=0, jobs=1):
    """Monte-Carlo sum_t ||u_t - pi*(x_t)||^2 within 2% of T tr(Sigma)"""
    rng = RngStream(seed).child('oracle', 'deviation')
    gen = rng.child('covariances').generator()
    env = LinearPointMassEnv.double_integrator(horizon=T)
    sup = LqrSupervisor.for_env(env)
    worst = 0.0
    for i in range(n_covariances):
        target = float(gen.uniform(0.1, 2.0))
        psi = GaussianNoise(wishart_random_covariance(env.d_u, target, rng.child('wishart', i)))
        trajectories = rollouts(env, noisy_supervisor(env, sup, psi), T, n_rollouts, rng.child('rollouts', i), jobs)
        deviations = [
            sum(float(np.sum((u - sup.act(x)) ** 2)) for x, u in zip(tr.states, tr.controls))
            for tr in trajectories
        ]
        expected = T * psi.level
        worst = max(worst, abs(float(np.mean(deviations)) - expected) / expected)
    return _result('deviation_identity', worst, DEVIATION_REL_TOL, worst <= DEVIATION_REL_TOL,
                   f"{n_covariances} covariances x {n_rollouts} rollouts, T={T}; relative error")


def _noisy_pair(env, gen, T):
    """Random robot table and a random eps-greedy supervisor, both enumerated"""
    robot = _random_table(env, gen)
    sup = _random_table(env, gen)
    eps = float(gen.uniform(0.01, 0.7))
    P = enumerate_distribution(env, policy_density(robot, env.n_actions), T)
    Q = enumerate_distribution(env, eps_greedy_density(sup, eps, env.n_actions), T)
    return robot, sup, eps, P, Q


def check_lemma1_sweep(n_pairs=1000, T=4, seed=0):
    """|E_Q J - E_P J| <= T sqrt(KL / 2) on a 3x3 grid, zero-one loss"""
    gen = RngStream(seed).child('oracle', 'lemma1').generator()
    env = _small_grid(slip=0.0, horizon=T)
    loss = LossSpec('zero_one')
    tightest = (0.0, math.inf)
    failures = 0
    for _ in range(n_pairs):
        robot, sup, _, P, Q = _noisy_pair(env, gen, T)
        lhs, rhs, holds = check_lemma1(P, Q, robot, sup, loss)
        failures += not holds
        if lhs - rhs > tightest[0] - tightest[1]:
            tightest = (lhs, rhs)
    return _result('lemma1_bound', tightest[0], tightest[1], failures == 0,
                   f"{n_pairs} policy pairs, 3x3 grid, T={T}; {failures} violations; tightest pair shown")


def check_lemma2_sweep(n_triples=1000, support=10, bounds=(1.0, 5.0), seed=0):
    gen = RngStream(seed).child('oracle', 'lemma2').generator()
    tightest = (0.0, math.inf)
    failures = 0
    for i in range(n_triples):
        B = bounds[i % len(bounds)]
        P = gen.dirichlet(np.ones(support))
        Q = gen.dirichlet(np.ones(support))
        f = gen.uniform(0.0, B, size=support)
        lhs, rhs, holds = check_lemma2(P, Q, f, B)
        failures += not holds
        if lhs - rhs > tightest[0] - tightest[1]:
            tightest = (lhs, rhs)
    return _result('lemma2_bound', tightest[0], tightest[1], failures == 0,
                   f"{n_triples} triples on {support}-point supports, B in {list(bounds)}; {failures} violations")


def check_prop1_oracle(eps=0.1, T=4):
    """Disagreeing robot: finite KL to the noisy supervisor, infinite to the clean one"""
    env = _small_grid(slip=0.0, horizon=T)
    sup = ScriptedGridSupervisor.for_env(env)
    start = env.cell(0, 0)
    table = dict(sup.table)
    table[start] = (sup.table[start] + 1) % env.n_actions
    report = check_prop1(env, sup, TabularPolicy(table), eps, T)
    clean = check_prop1(env, sup, TabularPolicy(dict(sup.table)), eps, T)
    passed = (report.premise_holds and report.strict and math.isfinite(report.kl_noisy)
              and math.isinf(report.kl_noiseless) and not clean.premise_holds)
    return _result('prop1', report.kl_noisy, report.kl_noiseless, passed,
                   f"{report.message}; robot = supervisor: {clean.message}")


def check_pinsker(n_pairs=200, T=3, seed=0):
    """TV <= sqrt(KL / 2), KL >= 0 and KL(P, P) = 0 on enumerated distributions"""
    gen = RngStream(seed).child('oracle', 'pinsker').generator()
    env = _small_grid(slip=0.0, horizon=T)
    worst = -math.inf
    gibbs_ok = True
    for _ in range(n_pairs):
        sup = _random_table(env, gen)
        e1, e2 = gen.uniform(0.01, 0.7, size=2)
        P = enumerate_distribution(env, eps_greedy_density(sup, float(e1), env.n_actions), T)
        Q = enumerate_distribution(env, eps_greedy_density(sup, float(e2), env.n_actions), T)
        kl = exact_kl(P, Q)
        worst = max(worst, exact_tv(P, Q) - math.sqrt(kl / 2.0))
        gibbs_ok &= kl >= 0 and exact_kl(P, P) <= LEMMA_SLACK
    return _result('pinsker', worst, 0.0, worst <= LEMMA_SLACK and gibbs_ok,
                   f"{n_pairs} pairs; max TV - sqrt(KL/2); Gibbs {'holds' if gibbs_ok else 'fails'}")


def check_kl_policy_ratio(n_pairs=10, T=3, slip=0.1, seed=0):
    """Enumerated KL equals E_P sum_t log policy ratio (dynamics cancel)"""
    gen = RngStream(seed).child('oracle', 'kl_ratio').generator()
    env = _small_grid(slip=slip, horizon=T)
    worst = 0.0
    for _ in range(n_pairs):
        robot = _random_table(env, gen)
        sup = _random_table(env, gen)
        eps = float(gen.uniform(0.01, 0.7))
        robot_density = policy_density(robot, env.n_actions)
        sup_density = eps_greedy_density(sup, eps, env.n_actions)
        P = enumerate_distribution(env, robot_density, T)
        Q = enumerate_distribution(env, sup_density, T)
        worst = max(worst, abs(exact_kl(P, Q) - policy_ratio_kl(P, robot_density, sup_density)))
    return _result('kl_policy_ratio', worst, KL_IDENTITY_TOL, worst <= KL_IDENTITY_TOL,
                   f"{n_pairs} pairs, slip {slip}, T={T}")


def check_mc_vs_enumeration(n_rollouts=2000, T=3, slip=0.1, seed=0):
    """Monte-Carlo E_robot J within 3 standard errors of the enumerated value"""
    rng = RngStream(seed).child('oracle', 'mc_enum')
    env = _small_grid(slip=slip, horizon=T)
    sup = ScriptedGridSupervisor.for_env(env)
    robot = _random_table(env, rng.child('robot').generator())
    loss = LossSpec('zero_one')
    P = enumerate_distribution(env, policy_density(robot, env.n_actions), T)
    exact = P.expectation(lambda tr: sum(loss.step(robot.act(x), sup.act(x)) for x in tr.states[:-1]))
    mean, stderr = expected_loss(env, robot, robot, sup, loss, n_rollouts, rng.child('rollouts'))
    mass_env = _small_grid(slip=0.1, horizon=4)
    mass = abs(enumerate_distribution(mass_env, policy_density(sup, env.n_actions), 4).total_mass - 1.0)
    gap = abs(mean - exact)
    passed = gap <= 3.0 * stderr + 1e-12 and mass <= MASS_TOL
    return _result('mc_vs_enumeration', gap, 3.0 * stderr, passed,
                   f"exact {exact:.6f}, MC {mean:.6f} over {n_rollouts}; enumerated mass error {mass:.1e}")


def check_lqr(tol=1e-8):
    """Scalar closed form P = (1 + sqrt 5) / 2 and a DARE cross-check"""
    P = (1.0 + math.sqrt(5.0)) / 2.0
    scalar_err = abs(float(lqr_gain(1.0, 1.0, 1.0, 1.0)[0, 0]) - P / (1.0 + P))
    env = LinearPointMassEnv.double_integrator()
    X = solve_discrete_are(env.A, env.B, env.Q, env.R)
    reference = np.linalg.solve(env.R + env.B.T @ X @ env.B, env.B.T @ X @ env.A)
    dare_err = float(np.max(np.abs(lqr_gain(env.A, env.B, env.Q, env.R) - reference)))
    return _result('lqr_riccati', max(scalar_err, dare_err), 1e-6, scalar_err <= tol and dare_err <= 1e-6,
                   f"scalar gain error {scalar_err:.1e}; double integrator vs DARE {dare_err:.1e}")


def run_oracle_suite(seed=0, shrink=shrink_gaussian, jobs=1):
    """Run every check; returns a DataFrame with one row per check"""
    checks = [
        ('gaussian_mle', lambda: check_gaussian_mle(seed=seed)),
        ('epsilon_mle', lambda: check_epsilon_mle(seed=seed)),
        ('shrinkage_identity', lambda: check_shrinkage_identity(seed=seed, shrink=shrink)),
        ('deviation_identity', lambda: check_deviation_identity(seed=seed, jobs=jobs)),
        ('lemma1_bound', lambda: check_lemma1_sweep(seed=seed)),
        ('lemma2_bound', lambda: check_lemma2_sweep(seed=seed)),
        ('prop1', check_prop1_oracle),
        ('pinsker', lambda: check_pinsker(seed=seed)),
        ('kl_policy_ratio', lambda: check_kl_policy_ratio(seed=seed)),
        ('mc_vs_enumeration', lambda: check_mc_vs_enumeration(seed=seed)),
        ('lqr_riccati', check_lqr),
    ]
    rows = []
    for name, check in checks:
        started = time.perf_counter()
        result = check()
        result['seconds'] = round(time.perf_counter() - started, 3)
        log('oracle', f"{name}: {'pass' if result['passed'] else 'FAIL'} "
                      f"(lhs {result['lhs']:.3e}, rhs {result['rhs']:.3e})")
        rows.append(result)
    return pd.DataFrame(rows, columns=['check', 'lhs', 'rhs', 'passed', 'detail', 'seconds'])
