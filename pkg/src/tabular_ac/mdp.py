"""Finite MDPs, exact entropy-regularized policy evaluation and the soft-optimal comparator.

Policies, q-tables and value vectors are plain numpy arrays of shape
``(S, A)``, ``(S, A)`` and ``(S,)``; :func:`check_policy` validates the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import entr, logsumexp

from .errors import ConvergenceError, DomainError

ROW_TOL = 1e-12
POLICY_TOL = 1e-10


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class Mdp:
    """Finite discounted MDP with rewards in [0, 1].

    ``transition[s, a, s']`` is the probability of moving to ``s'``.
    Arrays are copied and made read-only at construction.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    discount: float

    def __post_init__(self) -> None:
        P = _frozen(self.transition)
        r = _frozen(self.reward)
        rho = _frozen(self.initial_dist)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_dist", rho)
        object.__setattr__(self, "discount", float(self.discount))

        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A = P.shape[:2]
        if r.shape != (S, A):
            raise ValueError(f"reward must have shape {(S, A)}, got {r.shape}")
        if rho.shape != (S,):
            raise ValueError(f"initial_dist must have shape {(S,)}, got {rho.shape}")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ValueError("transition entries must be finite and nonnegative")
        bad = np.abs(P.sum(axis=2) - 1.0) > ROW_TOL
        if np.any(bad):
            s, a = np.argwhere(bad)[0]
            raise ValueError(f"transition row ({s}, {a}) does not sum to 1")
        if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise ValueError("rewards must lie in [0, 1]")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > ROW_TOL:
            raise ValueError("initial_dist must be a probability vector")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    def h_bound(self, tau: float) -> float:
        """Upper bound ``(1 + tau ln A) / (1 - gamma)`` on soft values."""
        return h_tau(tau, self.num_actions, self.discount)

    def to_dict(self) -> dict:
        return {
            "S": self.num_states,
            "A": self.num_actions,
            "gamma": self.discount,
            "P": self.transition.tolist(),
            "r": self.reward.tolist(),
            "rho": self.initial_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> Mdp:
        missing = {"S", "A", "gamma", "P", "r", "rho"} - set(doc)
        if missing:
            raise ValueError(f"MDP document missing keys: {sorted(missing)}")
        mdp = cls(
            transition=np.asarray(doc["P"], dtype=float),
            reward=np.asarray(doc["r"], dtype=float),
            initial_dist=np.asarray(doc["rho"], dtype=float),
            discount=float(doc["gamma"]),
        )
        if (mdp.num_states, mdp.num_actions) != (int(doc["S"]), int(doc["A"])):
            raise ValueError("declared S/A do not match array shapes")
        return mdp

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load_json(cls, path: str | Path) -> Mdp:
        return cls.from_dict(json.loads(Path(path).read_text()))


def h_tau(tau: float, num_actions: int, gamma: float) -> float:
    return (1.0 + tau * np.log(num_actions)) / (1.0 - gamma)


def uniform_policy(num_states: int, num_actions: int) -> np.ndarray:
    return np.full((num_states, num_actions), 1.0 / num_actions)


def check_policy(policy: np.ndarray, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Return ``policy`` as a float array after checking it is row-stochastic."""
    pi = np.asarray(policy, dtype=np.float64)
    if pi.ndim != 2:
        raise ValueError(f"policy must be a 2-d table, got shape {pi.shape}")
    if shape is not None and pi.shape != tuple(shape):
        raise ValueError(f"policy shape {pi.shape} does not match {tuple(shape)}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0):
        raise ValueError("policy entries must be finite and nonnegative")
    if np.any(np.abs(pi.sum(axis=1) - 1.0) > POLICY_TOL):
        raise ValueError("policy rows must sum to 1")
    return pi


def entropies(policy: np.ndarray) -> np.ndarray:
    """Per-state Shannon entropy with ``0 ln 0 = 0``."""
    return entr(np.asarray(policy, dtype=np.float64)).sum(axis=-1)


def policy_entropy(policy: np.ndarray, state: int) -> float:
    pi = np.asarray(policy)
    if not 0 <= state < pi.shape[0]:
        raise IndexError(f"state {state} out of range")
    return float(entr(pi[state]).sum())


def state_transition(mdp: Mdp, policy: np.ndarray) -> np.ndarray:
    """``P_pi[s, s'] = sum_a pi(a|s) P(s'|s, a)``."""
    return np.einsum("sa,sat->st", policy, mdp.transition)


def exact_soft_values(mdp: Mdp, policy: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``v = r_pi + tau H_pi + gamma P_pi v`` and return ``(v, q)``."""
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    pi = check_policy(policy, (mdp.num_states, mdp.num_actions))
    rhs = np.einsum("sa,sa->s", pi, mdp.reward) + tau * entropies(pi)
    system = np.eye(mdp.num_states) - mdp.discount * state_transition(mdp, pi)
    v = lu_solve(lu_factor(system), rhs)
    q = mdp.reward + mdp.discount * (mdp.transition @ v)
    return v, q


def soft_advantage(q: np.ndarray, v: np.ndarray, policy: np.ndarray, tau: float, s: int, a: int) -> float:
    p = float(policy[s, a])
    if tau > 0:
        if p <= 0:
            raise DomainError(f"soft advantage undefined: pi({a}|{s}) = 0 with tau > 0")
        return float(q[s, a] - v[s] - tau * np.log(p))
    return float(q[s, a] - v[s])


def optimal_soft_policy(
    mdp: Mdp, tau: float, tol: float = 1e-10, max_iter: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """Soft value iteration; returns ``(pi_star, v_star)``.

    With ``tau = 0`` this is ordinary value iteration and the policy is the
    greedy one, ties going to the lowest action index.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if tau < 0:
        raise DomainError("tau must be nonnegative")
    gamma = mdp.discount
    threshold = tol * (1.0 - gamma)
    v = np.zeros(mdp.num_states)
    for _ in range(max_iter):
        q = mdp.reward + gamma * (mdp.transition @ v)
        v_new = tau * logsumexp(q / tau, axis=1) if tau > 0 else q.max(axis=1)
        change = np.max(np.abs(v_new - v))
        v = v_new
        if change < threshold:
            break
    else:
        raise ConvergenceError(f"soft value iteration did not converge in {max_iter} iterations")
    q = mdp.reward + gamma * (mdp.transition @ v)
    if tau > 0:
        logits = q / tau
        pi = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    else:
        pi = np.zeros_like(q)
        pi[np.arange(mdp.num_states), np.argmax(q, axis=1)] = 1.0
    return pi, v


def return_J(mdp: Mdp, v: np.ndarray) -> float:
    return float(mdp.initial_dist @ np.asarray(v))
