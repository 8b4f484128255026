# -*- coding: utf-8 -*-
"""
Environments and Supervisors

LinearPointMassEnv: x' = A x + B u + w with quadratic cost, supervised by LQR.
GridWorldEnv: 4-action grid with slip, absorbing goal, supervised by a
shortest-path table. Also home to noise-injected supervisor sampling and the
supervisor's action log-density used by the noise MLE.
"""

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.stats import multivariate_normal

from config import PSD_TOL, RICCATI_TOL, RICCATI_MAX_ITERS, log
from core.types import (
    ConfigError,
    SolverError,
    SingularCovarianceError,
    GaussianNoise,
    EpsGreedyNoise,
    as_control,
)


def _check_psd(matrix, name, strict=False):
    w = np.linalg.eigvalsh(0.5 * (matrix + matrix.T))
    if strict and np.min(w) <= 0:
        raise ConfigError(f"{name} must be positive-definite", name)
    if np.min(w) < -PSD_TOL:
        raise ConfigError(f"{name} must be positive-semidefinite", name)


@dataclass(frozen=True, eq=False)
class LinearPointMassEnv:
    """Linear-Gaussian dynamics with quadratic cost"""
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    x0_mean: np.ndarray
    x0_std: float = 0.0
    process_noise_std: float = 0.0
    horizon: int = 25
    env_id: str = 'pointmass'

    is_discrete = False

    def __post_init__(self):
        for name in ('A', 'B', 'Q', 'R', 'x0_mean'):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        d_x = self.A.shape[0]
        if self.A.shape != (d_x, d_x):
            raise ConfigError(f"A must be square, got {self.A.shape}", 'environment.A')
        if self.B.ndim != 2 or self.B.shape[0] != d_x:
            raise ConfigError(f"B must be {d_x} x d_u, got {self.B.shape}", 'environment.B')
        if self.Q.shape != (d_x, d_x):
            raise ConfigError(f"Q must be {d_x} x {d_x}", 'environment.Q')
        if self.R.shape != (self.d_u, self.d_u):
            raise ConfigError(f"R must be {self.d_u} x {self.d_u}", 'environment.R')
        if self.x0_mean.shape != (d_x,):
            raise ConfigError(f"x0_mean must have length {d_x}", 'environment.x0_mean')
        if self.process_noise_std < 0 or self.x0_std < 0:
            raise ConfigError("standard deviations must be >= 0", 'environment')
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1", 'environment.horizon')
        _check_psd(self.Q, 'environment.Q')
        _check_psd(self.R, 'environment.R', strict=True)

    @property
    def d_x(self):
        return self.A.shape[0]

    @property
    def d_u(self):
        return self.B.shape[1]

    def initial_state(self, rng):
        return self.x0_mean + self.x0_std * rng.standard_normal(self.d_x)

    def step(self, x, u, rng):
        w = self.process_noise_std * rng.standard_normal(self.d_x)
        return self.A @ x + self.B @ u + w

    def check_control(self, u):
        if isinstance(u, int) or np.shape(u) != (self.d_u,):
            raise ConfigError(
                f"policy produced control of shape {np.shape(u)}, environment expects ({self.d_u},)"
            )
        if not np.all(np.isfinite(u)):
            raise ConfigError("policy produced a non-finite control")

    def reward(self, trajectory):
        """Negative quadratic cost over t = 0..T-1"""
        total = 0.0
        for x, u in zip(trajectory.states, trajectory.controls):
            total += float(x @ self.Q @ x + u @ self.R @ u)
        return -total

    @classmethod
    def double_integrator(cls, axes=2, dt=0.1, process_noise_std=0.01, horizon=25,
                          x0_mean=None, x0_std=0.5, q=1.0, r=0.1):
        """Per-axis double integrator; state is (positions..., velocities...)"""
        eye = np.eye(axes)
        A = np.block([[eye, dt * eye], [np.zeros((axes, axes)), eye]])
        B = np.vstack([0.5 * dt ** 2 * eye, dt * eye])
        if x0_mean is None:
            x0_mean = np.concatenate([np.ones(axes), np.zeros(axes)])
        return cls(A=A, B=B, Q=q * np.eye(2 * axes), R=r * eye,
                   x0_mean=np.asarray(x0_mean, dtype=float), x0_std=x0_std,
                   process_noise_std=process_noise_std, horizon=horizon)


def lqr_gain(A, B, Q, R, tol=RICCATI_TOL, max_iters=RICCATI_MAX_ITERS):
    """
    Iterate the discrete algebraic Riccati equation from P = Q to a fixed point.

    Returns the gain K (d_u x d_x); the supervisor plays u = -K x.
    Raises SolverError for an all-zero B, and with the last residual when
    max_iters is exhausted.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if not np.any(B):
        raise SolverError("B is all zeros: the control has no effect on the state", residual=math.nan)

    P = Q.copy()
    residual = math.inf
    for _ in range(max_iters):
        BtP = B.T @ P
        gain = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = Q + A.T @ P @ A - A.T @ P @ B @ gain
        P_next = 0.5 * (P_next + P_next.T)
        residual = float(np.max(np.abs(P_next - P)))
        P = P_next
        if not np.isfinite(residual):
            break
        if residual < tol:
            gain = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
            radius = np.max(np.abs(np.linalg.eigvals(A - B @ gain)))
            if radius >= 1.0:
                log('lqr', f"closed loop spectral radius {radius:.6f} >= 1", force=True)
            return gain
    raise SolverError(
        f"Riccati iteration did not converge in {max_iters} iterations "
        f"(last residual {residual:.3e}); is (A, B) stabilizable?",
        residual=residual,
    )


@dataclass(frozen=True, eq=False)
class LqrSupervisor:
    """u = -K x"""
    gain: np.ndarray

    def act(self, x):
        return -(self.gain @ x)

    @classmethod
    def for_env(cls, env):
        return cls(lqr_gain(env.A, env.B, env.Q, env.R))


UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTION_NAMES = ('up', 'down', 'left', 'right')
_MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}


@dataclass(frozen=True)
class GridWorldEnv:
    """
    Cells are indexed s = y * width + x. With probability slip the executed
    action is replaced by a uniformly random one (before clamping at walls).
    The goal is absorbing; reward is 1 when the goal is reached within T.
    """
    width: int
    height: int
    goal: tuple
    slip: float = 0.0
    horizon: int = 10
    start_cells: tuple = None
    env_id: str = 'gridworld'

    is_discrete = True
    n_actions = 4

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid must be at least 1 x 1", 'environment')
        gx, gy = self.goal
        if not (0 <= gx < self.width and 0 <= gy < self.height):
            raise ConfigError(f"goal {self.goal} outside the grid", 'environment.goal')
        if not 0.0 <= self.slip < 1.0:
            raise ConfigError(f"slip must lie in [0, 1), got {self.slip}", 'environment.slip')
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1", 'environment.horizon')
        if self.start_cells is not None:
            cells = tuple(tuple(c) for c in self.start_cells)
            for c in cells:
                if not (0 <= c[0] < self.width and 0 <= c[1] < self.height):
                    raise ConfigError(f"start cell {c} outside the grid", 'environment.start_cells')
            object.__setattr__(self, 'start_cells', cells)

    @property
    def n_states(self):
        return self.width * self.height

    @property
    def goal_state(self):
        return self.cell(*self.goal)

    def cell(self, x, y):
        return y * self.width + x

    def coords(self, s):
        return s % self.width, s // self.width

    def initial_states(self):
        if self.start_cells:
            return [self.cell(*c) for c in self.start_cells]
        states = [s for s in range(self.n_states) if s != self.goal_state]
        return states or [self.goal_state]

    def initial_probs(self):
        starts = self.initial_states()
        return {s: 1.0 / len(starts) for s in starts}

    def initial_state(self, rng):
        starts = self.initial_states()
        return starts[int(rng.integers(len(starts)))]

    def move(self, s, a):
        """Deterministic move with wall clamping"""
        if s == self.goal_state:
            return s
        x, y = self.coords(s)
        dx, dy = _MOVES[a]
        x = min(max(x + dx, 0), self.width - 1)
        y = min(max(y + dy, 0), self.height - 1)
        return self.cell(x, y)

    def step(self, s, a, rng):
        slipped = rng.random() < self.slip
        random_action = int(rng.integers(self.n_actions))
        return self.move(s, random_action if slipped else a)

    def transition_probs(self, s, a):
        """Exact next-state distribution, slip included"""
        out = {}
        nxt = self.move(s, a)
        out[nxt] = out.get(nxt, 0.0) + (1.0 - self.slip)
        if self.slip > 0:
            for b in range(self.n_actions):
                nxt = self.move(s, b)
                out[nxt] = out.get(nxt, 0.0) + self.slip / self.n_actions
        return out

    def check_control(self, u):
        if not isinstance(u, (int, np.integer)) or not 0 <= u < self.n_actions:
            raise ConfigError(f"policy produced action {u!r}, environment expects 0..{self.n_actions - 1}")

    def reward(self, trajectory):
        return 1.0 if self.goal_state in trajectory.states else 0.0


@dataclass(frozen=True, eq=False)
class ScriptedGridSupervisor:
    """Shortest-path action table; action 0 at the goal"""
    table: dict

    def act(self, s):
        return self.table[int(s)]

    @classmethod
    def for_env(cls, env):
        dist = shortest_path_distances(env)
        table = {}
        for s in range(env.n_states):
            if s == env.goal_state:
                table[s] = UP
                continue
            best = None
            for a in range(env.n_actions):
                d = dist.get(env.move(s, a), math.inf)
                if d < dist[s] and (best is None or d < dist.get(env.move(s, best), math.inf)):
                    best = a
            if best is None:
                raise ConfigError(f"cell {env.coords(s)} cannot reach the goal")
            table[s] = best
        return cls(table)


def shortest_path_distances(env):
    """Breadth-first search from the goal over deterministic moves"""
    dist = {env.goal_state: 0}
    queue = deque([env.goal_state])
    while queue:
        s = queue.popleft()
        for p in range(env.n_states):
            if p in dist:
                continue
            if any(env.move(p, a) == s for a in range(env.n_actions)):
                dist[p] = dist[s] + 1
                queue.append(p)
    return dist


def step(env, x, u, rng):
    """Sample x' ~ p(. | x, u)"""
    return env.step(x, u, rng)


def reward(env, trajectory):
    """Evaluation-only reward of a trajectory"""
    return env.reward(trajectory)


def make_supervisor(env):
    if env.is_discrete:
        return ScriptedGridSupervisor.for_env(env)
    return LqrSupervisor.for_env(env)


def supervisor_act(sup, x):
    """Deterministic supervisor output"""
    return as_control(sup.act(x))


def check_noise_family(env, psi):
    if env.is_discrete and not isinstance(psi, EpsGreedyNoise):
        raise ConfigError("discrete environments take eps-greedy noise")
    if not env.is_discrete:
        if not isinstance(psi, GaussianNoise):
            raise ConfigError("continuous environments take Gaussian noise")
        if psi.dim != env.d_u:
            raise ConfigError(f"noise covariance is {psi.dim}-d, controls are {env.d_u}-d")


def noisy_supervisor_act(sup, x, psi, rng, n_actions=4):
    """
    Sample the noise-injected supervisor. Randomness is always drawn, so a
    zero-noise parameter consumes the stream exactly like a noisy one.
    """
    target = supervisor_act(sup, x)
    if isinstance(psi, GaussianNoise):
        z = rng.standard_normal(psi.dim)
        return target + psi.factor @ z
    if isinstance(psi, EpsGreedyNoise):
        deviate = rng.random() < psi.eps
        other = int(rng.integers(n_actions - 1))
        if not deviate:
            return target
        return other if other < target else other + 1
    raise ConfigError(f"unsupported noise parameter {psi!r}")


def action_log_density(sup, x, u, psi, n_actions=4):
    """
    log pi*(u | x, psi). Gaussian needs a positive-definite covariance;
    eps-greedy returns -inf when eps = 0 and u differs from the supervisor.
    """
    target = supervisor_act(sup, x)
    if isinstance(psi, GaussianNoise):
        if np.min(np.linalg.eigvalsh(psi.sigma)) <= 0:
            raise SingularCovarianceError(
                "covariance is singular; regularize it (core.noise.regularize_covariance) first"
            )
        return float(multivariate_normal.logpdf(np.atleast_1d(u), mean=target, cov=psi.sigma))
    if isinstance(psi, EpsGreedyNoise):
        if int(u) == target:
            return math.log1p(-psi.eps)
        if psi.eps == 0:
            return -math.inf
        return math.log(psi.eps / (n_actions - 1))
    raise ConfigError(f"unsupported noise parameter {psi!r}")


def action_probabilities(sup, x, psi, n_actions=4):
    """Full eps-greedy action distribution at x"""
    probs = np.full(n_actions, psi.eps / (n_actions - 1))
    probs[supervisor_act(sup, x)] = 1.0 - psi.eps
    return probs
