# -*- coding: utf-8 -*-
"""
Domain Types
States, controls, trajectories, datasets, policy parameters, noise parameters,
seeded random streams and the error classes shared by every module.

Continuous states/controls are 1-d float numpy arrays; discrete ones are ints.
"""

import zlib
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from config import PSD_TOL


class DartError(Exception):
    """Base class for harness errors"""
    pass


class ConfigError(DartError):
    """Invalid configuration or type/dimension mismatch"""

    def __init__(self, message, field_path=None):
        self.reason = message
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class SolverError(DartError):
    """Iterative solver failed to converge"""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class DataError(DartError):
    """Empty or degenerate data handed to an estimator"""
    pass


class SingularCovarianceError(DartError):
    """Density evaluation requested on a covariance that is not positive-definite"""
    pass


class EnumerationLimitError(DartError):
    """Exact enumeration would exceed the configured size guard"""
    pass


class ArtifactExistsError(DartError):
    """Refusing to overwrite a previously written artifact"""
    pass


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode('utf-8'))
    return int(part)


@dataclass(frozen=True)
class RngStream:
    """
    Seedable stream that splits into independent children.

    A child is addressed by (master seed, key path), so a trajectory's
    randomness does not depend on the order in which trajectories run.
    """
    seed: int
    keys: tuple = ()

    def child(self, *parts):
        return RngStream(self.seed, self.keys + tuple(_key(p) for p in parts))

    def generator(self):
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=self.keys))


def as_control(u):
    """Normalize a control to the canonical representation"""
    if isinstance(u, (int, np.integer)):
        return int(u)
    return np.atleast_1d(np.asarray(u, dtype=float))


as_state = as_control


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Alternating state/control sequence, T controls and T+1 states"""
    states: tuple
    controls: tuple

    def __post_init__(self):
        if len(self.states) != len(self.controls) + 1:
            raise DataError(
                f"trajectory needs len(states) == len(controls) + 1, "
                f"got {len(self.states)} and {len(self.controls)}"
            )

    @property
    def horizon(self):
        return len(self.controls)

    def key(self):
        """Hashable identity, used by exact enumeration"""
        out = []
        for x, u in zip(self.states, self.controls):
            out.extend((_hashable(x), _hashable(u)))
        out.append(_hashable(self.states[-1]))
        return tuple(out)


def _hashable(v):
    if isinstance(v, np.ndarray):
        return tuple(float(a) for a in v)
    return v


@dataclass(frozen=True, eq=False)
class DemoRecord:
    """One supervised pair; label is the noiseless supervisor output"""
    state: object
    label: object
    executed: object
    iteration: int
    trajectory_id: int
    t: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aggregated demonstrations with provenance"""
    records: tuple = ()
    env_id: str = ''
    horizon: int = 0
    seed: int = 0
    noise_history: tuple = ()
    collection_rewards: tuple = ()

    def __len__(self):
        return len(self.records)

    @property
    def n_trajectories(self):
        return len({(r.iteration, r.trajectory_id) for r in self.records})

    def merge(self, other):
        """Serial aggregation step; returns a new dataset"""
        return Dataset(
            records=self.records + other.records,
            env_id=self.env_id or other.env_id,
            horizon=self.horizon or other.horizon,
            seed=self.seed,
            noise_history=self.noise_history + other.noise_history,
            collection_rewards=self.collection_rewards + other.collection_rewards,
        )

    def select(self, trajectory_ids):
        """Sub-dataset restricted to the given (iteration, trajectory_id) pairs"""
        wanted = set(trajectory_ids)
        return Dataset(
            records=tuple(r for r in self.records if (r.iteration, r.trajectory_id) in wanted),
            env_id=self.env_id,
            horizon=self.horizon,
            seed=self.seed,
            noise_history=self.noise_history,
        )

    def trajectory_ids(self):
        seen = []
        for r in self.records:
            tid = (r.iteration, r.trajectory_id)
            if tid not in seen:
                seen.append(tid)
        return seen

    def state_matrix(self):
        return np.array([np.atleast_1d(r.state) for r in self.records], dtype=float)

    def label_matrix(self):
        return np.array([np.atleast_1d(r.label) for r in self.records], dtype=float)


@dataclass(frozen=True, eq=False)
class LinearPolicy:
    """u = W phi(x) + b, phi selects the feature indices (None = identity)"""
    W: np.ndarray
    b: np.ndarray
    features: tuple = None

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.features is None else x[list(self.features)]

    def act(self, x):
        return self.W @ self.phi(x) + self.b

    @classmethod
    def zeros(cls, d_u, d_x, features=None):
        width = d_x if features is None else len(features)
        return cls(np.zeros((d_u, width)), np.zeros(d_u), features)


@dataclass(frozen=True, eq=False)
class TabularPolicy:
    """Action index per state, default_action for states never seen"""
    table: dict
    default_action: int = 0

    def act(self, x):
        return self.table.get(int(x), self.default_action)


@dataclass(frozen=True, eq=False)
class GaussianNoise:
    """Zero-mean Gaussian perturbation with covariance sigma"""
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape[0] != sigma.shape[1]:
            raise ConfigError(f"covariance must be square, got shape {sigma.shape}")
        if not np.all(np.isfinite(sigma)):
            raise ConfigError("covariance has non-finite entries")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > PSD_TOL:
            raise ConfigError("covariance is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if np.min(np.linalg.eigvalsh(sigma)) < -PSD_TOL:
            raise ConfigError("covariance is not positive-semidefinite")
        object.__setattr__(self, 'sigma', sigma)

    @property
    def dim(self):
        return self.sigma.shape[0]

    @property
    def level(self):
        return float(np.trace(self.sigma))

    @cached_property
    def factor(self):
        """Symmetric square-root factor, usable when sigma is singular"""
        w, v = np.linalg.eigh(self.sigma)
        return v * np.sqrt(np.clip(w, 0.0, None))

    def to_dict(self):
        return {'family': 'gaussian', 'sigma': self.sigma.tolist()}

    @classmethod
    def isotropic(cls, d_u, scale):
        return cls(scale * np.eye(d_u))


@dataclass(frozen=True)
class EpsGreedyNoise:
    """Supervisor action w.p. 1 - eps, otherwise uniform over the other actions"""
    eps: float

    def __post_init__(self):
        if not 0.0 <= self.eps < 1.0:
            raise ConfigError(f"eps must lie in [0, 1), got {self.eps}")

    @property
    def level(self):
        return float(self.eps)

    def to_dict(self):
        return {'family': 'eps_greedy', 'eps': self.eps}


def noise_from_dict(data):
    """Inverse of GaussianNoise.to_dict / EpsGreedyNoise.to_dict"""
    if data.get('family') == 'gaussian':
        return GaussianNoise(np.array(data['sigma'], dtype=float))
    if data.get('family') == 'eps_greedy':
        return EpsGreedyNoise(float(data['eps']))
    raise ConfigError(f"unknown noise family {data.get('family')!r}")


@dataclass(frozen=True)
class NoiseEstimate:
    """Outcome of one noise update: MLE, scaled parameter, prior and factor"""
    psi_hat: object
    psi_scaled: object
    alpha: float
    beta: float
    heldout_size: int
    fallback: bool = False
    iteration: int = 0
