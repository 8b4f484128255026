# -*- coding: utf-8 -*-
"""
Learners
Empirical risk minimization on aggregated demonstrations.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from core.types import ConfigError, DataError, LinearPolicy, TabularPolicy

_SINGULAR_RTOL = 1e-13


@dataclass(frozen=True)
class RidgeLearner:
    """
    Minimizes sum ||u_i - W phi(x_i) - b||^2 + lam ||W||_F^2.
    features restricts phi to a subset of state coordinates, which is how a
    learner is made unable to represent the supervisor exactly.
    """
    lam: float = 0.0
    features: tuple = None
    fit_bias: bool = True

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ConfigError(f"lambda must be finite and >= 0, got {self.lam}", 'learner.lambda')
        if self.features is not None:
            object.__setattr__(self, 'features', tuple(int(i) for i in self.features))


@dataclass(frozen=True)
class TabularMajorityLearner:
    """Per-state majority label; ties go to the lowest action index"""
    default_action: int = 0


def fit(learner, dataset):
    """Train policy parameters on a dataset"""
    if len(dataset) == 0:
        raise DataError("cannot fit on an empty dataset")
    if isinstance(learner, RidgeLearner):
        return _fit_ridge(learner, dataset)
    if isinstance(learner, TabularMajorityLearner):
        return _fit_tabular(learner, dataset)
    raise ConfigError(f"unknown learner {learner!r}", 'learner.kind')


def predict(theta, x):
    """Deterministic policy output"""
    return theta.act(x)


def _fit_ridge(learner, dataset):
    X = dataset.state_matrix()
    U = dataset.label_matrix()
    if learner.features is not None:
        if max(learner.features, default=-1) >= X.shape[1]:
            raise ConfigError(f"feature index out of range for {X.shape[1]}-d states", 'learner.features')
        X = X[:, list(learner.features)]
    width = X.shape[1]

    if learner.fit_bias:
        X = np.c_[X, np.ones(X.shape[0])]
    penalty = np.zeros(X.shape[1])
    penalty[:width] = learner.lam
    gram = X.T @ X + np.diag(penalty)

    try:
        factor = cho_factor(gram)
    except LinAlgError:
        factor = None
    pivots = None if factor is None else np.abs(np.diag(factor[0]))
    if pivots is None or pivots.min() ** 2 <= _SINGULAR_RTOL * pivots.max() ** 2:
        raise DataError("normal equations are singular for this dataset; use lambda > 0")
    coef = cho_solve(factor, X.T @ U)

    W = coef[:width].T
    b = coef[width] if learner.fit_bias else np.zeros(U.shape[1])
    return LinearPolicy(W=W, b=b, features=learner.features)


def _fit_tabular(learner, dataset):
    votes = {}
    for r in dataset.records:
        votes.setdefault(int(r.state), Counter())[int(r.label)] += 1
    table = {}
    for s, counter in votes.items():
        top = max(counter.values())
        table[s] = min(a for a, c in counter.items() if c == top)
    return TabularPolicy(table=table, default_action=learner.default_action)


def initial_policy(learner, env):
    """Untrained policy: zeros for linear, default action everywhere for tabular"""
    if isinstance(learner, TabularMajorityLearner):
        return TabularPolicy(table={}, default_action=learner.default_action)
    return LinearPolicy.zeros(env.d_u, env.d_x, learner.features)


def training_loss(theta, dataset, loss_spec):
    """Mean per-record surrogate loss of theta against the dataset labels"""
    if len(dataset) == 0:
        return 0.0
    return float(np.mean([loss_spec.step(theta.act(r.state), r.label) for r in dataset.records]))
