"""Soft Bellman operators, m-step clamped evaluation and the sampled squared-loss critic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import xlogy

from . import kernels
from .mdp import Mdp, entropies, exact_soft_values

INFINITE = math.inf

CLAMP_PLACEMENTS = ("output", "target")
TARGET_MODES = ("expected", "sample")


@dataclass(frozen=True)
class CriticConfig:
    """Critic settings.

    ``m_steps`` is a positive integer or :data:`INFINITE`, in which case the
    exact fixed point is computed by a linear solve. ``clamp_placement``
    chooses whether clamping to ``[0, h_tau_bound]`` acts on the evaluation
    output or on every look-ahead target.
    """

    zeta: float = 0.0
    m_steps: int | float = 1
    clamp_enabled: bool = True
    h_tau_bound: float = 1.0
    target_smoothing: float = 1.0
    critic_lr: float = 0.5
    critic_steps: int = 1
    clamp_placement: str = "output"
    target_mode: str = "expected"

    def __post_init__(self) -> None:
        if self.zeta < 0:
            raise ValueError("zeta must be nonnegative")
        if not (self.m_steps == INFINITE or (float(self.m_steps).is_integer() and self.m_steps >= 1)):
            raise ValueError(f"m_steps must be a positive integer or infinite, got {self.m_steps}")
        if self.h_tau_bound <= 0:
            raise ValueError("h_tau_bound must be positive")
        if not 0.0 < self.target_smoothing <= 1.0:
            raise ValueError("target_smoothing must lie in (0, 1]")
        if self.critic_lr <= 0 or self.critic_steps < 1:
            raise ValueError("critic_lr must be positive and critic_steps at least 1")
        if self.clamp_placement not in CLAMP_PLACEMENTS:
            raise ValueError(f"clamp_placement must be one of {CLAMP_PLACEMENTS}")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"target_mode must be one of {TARGET_MODES}")

    @property
    def is_exact(self) -> bool:
        return self.m_steps == INFINITE


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int


@dataclass(frozen=True)
class TransitionBatch:
    """Column-wise batch of transitions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        for row in zip(self.states, self.actions, self.rewards, self.next_states):
            yield Transition(int(row[0]), int(row[1]), float(row[2]), int(row[3]))

    @classmethod
    def from_transitions(cls, items: Iterable[Transition]) -> TransitionBatch:
        rows = list(items)
        return cls(
            states=np.array([t[0] for t in rows], dtype=np.int64),
            actions=np.array([t[1] for t in rows], dtype=np.int64),
            rewards=np.array([t[2] for t in rows], dtype=np.float64),
            next_states=np.array([t[3] for t in rows], dtype=np.int64),
        )


def as_batch(batch: TransitionBatch | Sequence[Transition]) -> TransitionBatch:
    return batch if isinstance(batch, TransitionBatch) else TransitionBatch.from_transitions(batch)


def clamp(q: np.ndarray, upper: float) -> np.ndarray:
    return np.clip(q, 0.0, upper)


def soft_state_values(policy: np.ndarray, q: np.ndarray, zeta: float) -> np.ndarray:
    """``sum_a pi(a|s) q(s, a) + zeta H(pi(.|s))``."""
    return np.einsum("sa,sa->s", policy, q) + zeta * entropies(policy)


def soft_bellman_q(mdp: Mdp, policy: np.ndarray, zeta: float, q: np.ndarray) -> np.ndarray:
    """Apply the soft Bellman operator once; ``zeta = 0`` gives the hard operator."""
    return mdp.reward + mdp.discount * (mdp.transition @ soft_state_values(policy, q, zeta))


def m_step_evaluate(mdp: Mdp, policy: np.ndarray, cfg: CriticConfig, q_prev: np.ndarray) -> np.ndarray:
    """Apply the operator ``m`` times from ``q_prev``, then clamp if enabled."""
    if cfg.is_exact:
        return exact_soft_values(mdp, policy, cfg.zeta)[1]
    q = np.asarray(q_prev, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError("q_prev must be finite")
    clamp_each = cfg.clamp_enabled and cfg.clamp_placement == "target"
    for _ in range(int(cfg.m_steps)):
        q = soft_bellman_q(mdp, policy, cfg.zeta, q)
        if clamp_each:
            q = clamp(q, cfg.h_tau_bound)
    if cfg.clamp_enabled and not clamp_each:
        q = clamp(q, cfg.h_tau_bound)
    return q


def lookahead_target(
    transition: Transition,
    policy: np.ndarray,
    q_target: np.ndarray,
    zeta: float,
    clamp_target: bool,
    h_tau: float,
    gamma: float,
) -> float:
    """Full-expectation look-ahead target ``r + gamma E_{a'~pi}[q(s', a') - zeta ln pi(a'|s')]``."""
    _, _, r, s2 = transition
    pi = policy[s2]
    y = r + gamma * float(pi @ q_target[s2] - zeta * xlogy(pi, pi).sum())
    return min(max(y, 0.0), h_tau) if clamp_target else y


def batch_targets(
    batch: TransitionBatch,
    policy: np.ndarray,
    q_target: np.ndarray,
    cfg: CriticConfig,
    gamma: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Look-ahead targets for every transition of a batch."""
    s2 = batch.next_states
    if cfg.target_mode == "expected":
        v_next = soft_state_values(policy, q_target, cfg.zeta)[s2]
    else:
        if rng is None:
            raise ValueError("sampled targets need a random generator")
        cdf = kernels.cdf_rows(policy[s2])
        u = rng.random(len(s2))[:, None]
        a2 = (cdf <= u).sum(axis=1)
        p = policy[s2, a2]
        v_next = q_target[s2, a2] - cfg.zeta * np.log(p)
    y = batch.rewards + gamma * v_next
    if cfg.clamp_enabled and cfg.clamp_placement == "target":
        y = clamp(y, cfg.h_tau_bound)
    return y


def sampled_critic_update(
    batch: TransitionBatch | Sequence[Transition],
    policy: np.ndarray,
    q_target: np.ndarray,
    cfg: CriticConfig,
    q_online: np.ndarray,
    gamma: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Gradient steps on the mean squared error to fixed look-ahead targets."""
    batch = as_batch(batch)
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    y = batch_targets(batch, policy, q_target, cfg, gamma, rng)
    q = kernels.critic_sgd(q_online, batch.states, batch.actions, y, cfg.critic_lr, cfg.critic_steps)
    if cfg.clamp_enabled and cfg.clamp_placement == "output":
        q = clamp(q, cfg.h_tau_bound)
    return q


def polyak_update(q_target: np.ndarray, q_online: np.ndarray, coef: float) -> np.ndarray:
    if not 0.0 < coef <= 1.0:
        raise ValueError("coef must lie in (0, 1]")
    if np.shape(q_target) != np.shape(q_online):
        raise ValueError("shapes differ")
    return (1.0 - coef) * np.asarray(q_target) + coef * np.asarray(q_online)
