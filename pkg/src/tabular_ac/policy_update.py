"""Closed-form tabular policy updates and step-size schedules.

Every product of probabilities and exponentials is formed as a sum of logs
and normalized with log-sum-exp, so large ``eta * q`` or tiny ``tau`` do not
overflow. Zero-probability actions have log-probability ``-inf`` and stay at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import entr, logsumexp

from . import kernels
from .errors import ConvergenceError, InvalidScheduleError, StepTooLargeError

SPMA_MARGIN = 1e-9
SCHEDULE_MODES = ("theory_decay", "constant")


@dataclass(frozen=True)
class ActorSchedule:
    """Step sizes ``eta_t``, actor entropy steps ``tau_t = eta_t tau`` and exponents ``1 / (1 + tau_t)``."""

    mode: str = "theory_decay"
    c: float = 0.0
    tau: float = 0.0
    eta_const: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in SCHEDULE_MODES:
            raise InvalidScheduleError(f"mode must be one of {SCHEDULE_MODES}, got {self.mode!r}")
        if self.c < 0 or self.tau < 0:
            raise InvalidScheduleError("c and tau must be nonnegative")
        if self.mode == "theory_decay" and self.c == 0 and self.tau == 0:
            raise InvalidScheduleError("theory_decay needs c > 0 or tau > 0")
        if self.mode == "constant" and not self.eta_const > 0:
            raise InvalidScheduleError("eta_const must be positive")

    def eta(self, t: int) -> float:
        if t < 0:
            raise ValueError("t must be nonnegative")
        if self.mode == "constant":
            return float(self.eta_const)
        return 1.0 / (self.c + self.tau * (t + 1))

    def tau_t(self, t: int) -> float:
        return self.eta(t) * self.tau

    def alpha(self, t: int) -> float:
        return 1.0 / (1.0 + self.tau_t(t))


def eta_at(schedule: ActorSchedule, t: int) -> float:
    return schedule.eta(t)


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(p, dtype=np.float64))


def normalize_log(log_weights: np.ndarray) -> np.ndarray:
    """Row-wise ``exp(w) / sum exp(w)`` for log-weights that may contain ``-inf``."""
    return np.exp(log_weights - logsumexp(log_weights, axis=-1, keepdims=True))


def npg_intermediate(pi_t: np.ndarray, q: np.ndarray, eta: float) -> np.ndarray:
    """``pi_half ∝ pi_t exp(eta q)``."""
    return normalize_log(_log(pi_t) + eta * np.asarray(q))


def spma_weights(pi_t: np.ndarray, q: np.ndarray, v: np.ndarray, eta: float) -> np.ndarray:
    """``1 + eta (q - v)`` after checking it stays above the margin on the support of ``pi_t``."""
    pi_t = np.asarray(pi_t)
    adv = np.asarray(q) - np.asarray(v)[:, None]
    w = 1.0 + eta * adv
    support = pi_t > 0
    bad = support & (w < SPMA_MARGIN)
    if np.any(bad):
        s, a = (int(i) for i in np.argwhere(bad)[0])
        neg = support & (adv < 0)
        # shaved by a relative 1e-12 so the reported step passes the check despite rounding
        max_eta = float(np.min((1.0 - SPMA_MARGIN) / -adv[neg])) * (1.0 - 1e-12)
        raise StepTooLargeError(s, a, float(w[s, a]), max_eta)
    return w


def _spma_log_weights(pi_t: np.ndarray, q: np.ndarray, v: np.ndarray, eta: float) -> np.ndarray:
    w = spma_weights(pi_t, q, v, eta)
    logw = np.where(np.asarray(pi_t) > 0, _log(np.maximum(w, SPMA_MARGIN)), -np.inf)
    return _log(pi_t) + logw


def spma_intermediate(pi_t: np.ndarray, q: np.ndarray, v: np.ndarray, eta: float) -> np.ndarray:
    """``pi_half ∝ pi_t (1 + eta (q - v))``, always normalized."""
    return normalize_log(_spma_log_weights(pi_t, q, v, eta))


def rkl_project(pi_half: np.ndarray, tau_t: float) -> np.ndarray:
    """``pi ∝ pi_half ** (1 / (1 + tau_t))``."""
    pi_half = np.asarray(pi_half, dtype=np.float64)
    if tau_t < 0:
        raise ValueError("tau_t must be nonnegative")
    if tau_t == 0:
        return pi_half.copy()
    if math.isinf(tau_t):
        support = (pi_half > 0).astype(float)
        return support / support.sum(axis=-1, keepdims=True)
    return normalize_log(_log(pi_half) / (1.0 + tau_t))


def _fkl_start(p: np.ndarray, tau_t: float) -> np.ndarray:
    # zero-mass actions start near the stationary log-probability -H(p) - 1/tau_t
    logp = _log(p)
    ent = entr(p).sum(axis=-1, keepdims=True)
    guess = np.maximum(-ent - 1.0 / tau_t, -700.0)
    return np.where(p > 0, logp, guess)


def fkl_project(pi_half: np.ndarray, tau_t: float, tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """Per-state minimizer of ``KL(pi_half || pi) - tau_t H(pi)`` over the simplex.

    Solved by diagonally scaled gradient descent with backtracking on softmax
    logits, stopping once the infinity norm of the logit gradient drops below
    ``tol``. The scaling matters for actions that ``pi_half`` leaves at zero:
    their optimal probability can be tiny and plain gradient steps on such
    logits barely move.
    """
    pi_half = np.asarray(pi_half, dtype=np.float64)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if tau_t < 0:
        raise ValueError("tau_t must be nonnegative")
    if tau_t == 0:
        return pi_half.copy()
    pi, iters, resid = kernels.fkl_rows(pi_half, tau_t, tol, max_iter, _fkl_start(pi_half, tau_t))
    failed = resid > tol
    if np.any(failed):
        s = int(np.argmax(failed))
        raise ConvergenceError(
            f"forward-KL projection did not converge at state {s}: residual {resid[s]:.3e} after {iters[s]} iterations"
        )
    return pi


def soft_npg_step(pi_t: np.ndarray, q: np.ndarray, eta: float, tau_t: float) -> np.ndarray:
    """``pi ∝ pi_t ** alpha * exp(eta * alpha * q)`` with ``alpha = 1 / (1 + tau_t)``."""
    alpha = 1.0 / (1.0 + tau_t)
    return normalize_log(alpha * (_log(pi_t) + eta * np.asarray(q)))


def soft_spma_step(pi_t: np.ndarray, q: np.ndarray, v: np.ndarray, eta: float, tau_t: float) -> np.ndarray:
    """``pi ∝ (pi_t (1 + eta (q - v))) ** alpha``."""
    alpha = 1.0 / (1.0 + tau_t)
    return normalize_log(alpha * _spma_log_weights(pi_t, q, v, eta))


def dsac_actor_exact(q: np.ndarray, tau: float) -> np.ndarray:
    """``softmax(q / tau)``, the maximizer of ``E_pi[q - tau ln pi]``."""
    q = np.asarray(q, dtype=np.float64)
    if not tau > 0:
        raise ValueError("tau must be positive")
    if math.isinf(tau):
        return np.full_like(q, 1.0 / q.shape[-1])
    return normalize_log(q / tau)


def simplex_minimize(
    value: Callable[[np.ndarray], np.ndarray],
    grad: Callable[[np.ndarray], np.ndarray],
    p0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Minimize a per-row objective over the simplex by backtracking descent on logits.

    ``value(p)`` returns one objective value per row and ``grad(p)`` the
    gradient with respect to ``p``. The logit gradient is
    ``p * (g - <p, g>)``; iteration stops when its infinity norm falls below
    ``tol`` in every row.
    """
    theta = _log(np.asarray(p0, dtype=np.float64))
    if not np.all(np.isfinite(theta)):
        raise ValueError("p0 must have full support")
    step = np.ones(theta.shape[0])

    def logit_grad(th):
        p = normalize_log(th)
        g = grad(p)
        return p * (g - (p * g).sum(axis=-1, keepdims=True))

    f = value(normalize_log(theta))
    for _ in range(max_iter):
        g = logit_grad(theta)
        active = np.max(np.abs(g), axis=-1) > tol
        if not np.any(active):
            return normalize_log(theta)
        gg = (g * g).sum(axis=-1)
        pending = active.copy()
        trial = theta.copy()
        f_trial = f.copy()
        while np.any(pending):
            cand = theta - step[:, None] * g
            f_cand = value(normalize_log(cand))
            flat = np.abs(f_cand - f) <= 1e-14 * (np.abs(f) + 1.0)
            ok = ~flat & (f_cand <= f - 0.5 * step * gg)
            if np.any(flat & pending):
                # the change is below roundoff: require a smaller gradient instead
                ok |= flat & ((logit_grad(cand) ** 2).sum(axis=-1) < gg)
            ok = pending & (ok | (step < 1e-14))
            trial[ok] = cand[ok]
            f_trial[ok] = f_cand[ok]
            pending &= ~ok
            step[pending] *= 0.5
        theta, f = trial, f_trial
        step[active] = np.minimum(step[active] * 2.0, 1e6)
    raise ConvergenceError(f"simplex minimization did not converge in {max_iter} iterations")
