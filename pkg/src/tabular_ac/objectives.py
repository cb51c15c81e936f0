"""Actor surrogate objectives over tabular softmax logits, their gradients and the inner optimizer.

All objectives are maximized. Each is a weighted sum over states of a
per-state term, and all action expectations are exact sums.

Reverse-KL families share the per-state form ``<pi, c> - kappa <pi, ln pi>``:

* ``npg_rkl``: ``c = q + ln(pi_t) / eta`` and ``kappa = tau + 1 / eta``
  (``eta = inf`` drops the proximal term);
* ``spma_rkl``: ``c = ln(1 + eta (q - v)) + ln(pi_t)`` and ``kappa = 1 + eta tau``.

Forward-KL families share ``<p, ln pi> + tau_t H(pi)``, where ``p`` is the
normalized intermediate policy of the NPG or SPMA update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .mdp import entropies
from .policy_update import SPMA_MARGIN, normalize_log

FAMILIES = ("npg_rkl", "spma_rkl", "npg_fkl", "spma_fkl")


@dataclass(frozen=True)
class ObjectiveSpec:
    family: str
    eta: float
    tau: float
    state_weights: np.ndarray

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if math.isinf(self.eta) and self.family != "npg_rkl":
            raise ValueError("eta = inf is only meaningful for npg_rkl")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")
        w = np.asarray(self.state_weights, dtype=np.float64)
        if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("state_weights must be a probability vector")
        object.__setattr__(self, "state_weights", w)

    @property
    def tau_t(self) -> float:
        return self.eta * self.tau


def policy_from_logits(theta: np.ndarray) -> np.ndarray:
    return normalize_log(np.asarray(theta, dtype=np.float64))


def log_policy(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    return theta - logsumexp(theta, axis=-1, keepdims=True)


def logits_from_policy(pi: np.ndarray) -> np.ndarray:
    """Logits inducing ``pi``; ``pi`` needs full support."""
    pi = np.asarray(pi, dtype=np.float64)
    if np.any(pi <= 0):
        raise DomainError("logits exist only for full-support policies")
    return np.log(pi)


def _spma_log_weights(spec: ObjectiveSpec, pi_t, q, v) -> np.ndarray:
    w = 1.0 + spec.eta * (np.asarray(q) - np.asarray(v)[:, None])
    live = (spec.state_weights > 0)[:, None] & (np.asarray(pi_t) > 0)
    if np.any(live & (w < SPMA_MARGIN)):
        s, a = np.argwhere(live & (w < SPMA_MARGIN))[0]
        raise DomainError(f"1 + eta*(q - v) = {w[s, a]:.3e} < {SPMA_MARGIN} at (s={s}, a={a})")
    return np.log(np.maximum(w, SPMA_MARGIN))


def _log_pi_t(spec: ObjectiveSpec, pi_t) -> np.ndarray:
    pi_t = np.asarray(pi_t, dtype=np.float64)
    if np.any((spec.state_weights > 0)[:, None] & (pi_t <= 0)):
        raise DomainError("reverse-KL objectives need pi_t with full support on weighted states")
    with np.errstate(divide="ignore"):
        return np.log(pi_t)


def _rkl_terms(spec: ObjectiveSpec, pi_t, q, v) -> tuple[np.ndarray, float]:
    log_pt = _log_pi_t(spec, pi_t)
    if spec.family == "npg_rkl":
        if math.isinf(spec.eta):
            return np.asarray(q, dtype=np.float64), spec.tau
        return np.asarray(q) + log_pt / spec.eta, spec.tau + 1.0 / spec.eta
    return _spma_log_weights(spec, pi_t, q, v) + log_pt, 1.0 + spec.tau_t


def fkl_target(spec: ObjectiveSpec, pi_t, q, v) -> np.ndarray:
    """Normalized intermediate policy ``p`` weighting ``ln pi`` in forward-KL objectives."""
    with np.errstate(divide="ignore"):
        log_pt = np.log(np.asarray(pi_t, dtype=np.float64))
    if spec.family == "npg_fkl":
        return normalize_log(log_pt + spec.eta * np.asarray(q))
    logw = np.where(np.asarray(pi_t) > 0, _spma_log_weights(spec, pi_t, q, v), -np.inf)
    return normalize_log(log_pt + logw)


def _live_rows(spec: ObjectiveSpec) -> np.ndarray:
    return spec.state_weights > 0


def per_state_objective(spec: ObjectiveSpec, theta, pi_t, q, v) -> np.ndarray:
    """Unweighted per-state objective values; rows with zero weight are reported as 0."""
    logp = log_policy(theta)
    pi = np.exp(logp)
    live = _live_rows(spec)
    out = np.zeros(len(live))
    if spec.family in ("npg_rkl", "spma_rkl"):
        c, kappa = _rkl_terms(spec, pi_t, q, v)
        vals = (pi * c).sum(axis=1) - kappa * (pi * logp).sum(axis=1)
    else:
        p = fkl_target(spec, pi_t, q, v)
        vals = np.where(p > 0, p * logp, 0.0).sum(axis=1) + spec.tau_t * entropies(pi)
    out[live] = vals[live]
    return out


def evaluate_objective(spec: ObjectiveSpec, theta, pi_t, q, v) -> float:
    return float(spec.state_weights @ per_state_objective(spec, theta, pi_t, q, v))


def objective_gradient(spec: ObjectiveSpec, theta, pi_t, q, v) -> np.ndarray:
    """Analytic gradient of :func:`evaluate_objective` with respect to the logits."""
    logp = log_policy(theta)
    pi = np.exp(logp)
    live = _live_rows(spec)
    mean_logp = (pi * logp).sum(axis=1, keepdims=True)
    if spec.family in ("npg_rkl", "spma_rkl"):
        c, kappa = _rkl_terms(spec, pi_t, q, v)
        c = np.where(live[:, None], c, 0.0)
        g = pi * ((c - (pi * c).sum(axis=1, keepdims=True)) - kappa * (logp - mean_logp))
    else:
        p = fkl_target(spec, pi_t, q, v)
        mass = p.sum(axis=1, keepdims=True)
        g = (p - mass * pi) - spec.tau_t * pi * (logp - mean_logp)
    g = spec.state_weights[:, None] * g
    g[~live] = 0.0
    return g


def inner_loop_optimize(
    spec: ObjectiveSpec,
    theta_init,
    pi_t,
    q,
    v,
    n: int,
    step: float,
    backtracking: bool = True,
    tol: float | None = None,
) -> np.ndarray:
    """Run ``n`` gradient-ascent steps on the logits.

    With ``backtracking`` each state keeps its own step size, starting from
    ``step``: a trial that fails the Armijo test halves it, an accepted step
    doubles it for the next iteration. Each state's objective is then
    non-decreasing up to roundoff. ``tol`` stops early once the gradient's infinity norm
    falls below it.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if step < 0:
        raise ValueError("step must be nonnegative")
    theta = np.array(theta_init, dtype=np.float64, copy=True)
    if step == 0:
        return theta
    if not backtracking:
        for _ in range(n):
            g = objective_gradient(spec, theta, pi_t, q, v)
            if tol is not None and np.max(np.abs(g)) < tol:
                break
            theta += step * g
        return theta

    w = spec.state_weights
    steps = np.full(theta.shape[0], float(step))
    u = per_state_objective(spec, theta, pi_t, q, v)
    for _ in range(n):
        g = objective_gradient(spec, theta, pi_t, q, v)
        if tol is not None and np.max(np.abs(g)) < tol:
            break
        gg = (g * g).sum(axis=1)
        moving = gg > 0
        pending = moving.copy()
        while np.any(pending):
            cand = theta + steps[:, None] * g
            u_cand = per_state_objective(spec, cand, pi_t, q, v)
            gain = w * (u_cand - u)
            # a step too small to pass Armijo is accepted only if it does not decrease the objective
            ok = pending & ((gain >= 0.5 * steps * gg) | ((steps < 1e-14) & (gain >= 0)))
            flat = pending & ~ok & (np.abs(u_cand - u) <= 1e-14 * (np.abs(u) + 1.0))
            if np.any(flat):
                # the change is below roundoff: require a smaller gradient instead
                g_cand = objective_gradient(spec, cand, pi_t, q, v)
                ok |= flat & ((g_cand * g_cand).sum(axis=1) < gg)
            theta[ok] = cand[ok]
            u[ok] = u_cand[ok]
            stuck = pending & ~ok & (steps < 1e-14)
            pending &= ~ok & ~stuck
            steps[pending] *= 0.5
        steps[moving] = np.minimum(steps[moving] * 2.0, 1e8)
    return theta


@dataclass(frozen=True)
class EntropyTuner:
    """Temperature ``alpha = exp(log_alpha)`` driven toward a target policy entropy."""

    log_alpha: float
    target_entropy: float
    tuner_lr: float

    def __post_init__(self) -> None:
        if self.target_entropy < 0:
            raise ValueError("target_entropy must be nonnegative")
        if not self.tuner_lr > 0:
            raise ValueError("tuner_lr must be positive")

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha)

    @classmethod
    def for_actions(
        cls, num_actions: int, scale: float = 1.0, init_alpha: float = 1.0, tuner_lr: float = 3e-3
    ) -> EntropyTuner:
        """Tuner whose target is ``scale * ln A``."""
        return cls(math.log(init_alpha), scale * math.log(num_actions), tuner_lr)


def entropy_tuner_step(tuner: EntropyTuner, pi: np.ndarray, state_weights: np.ndarray) -> EntropyTuner:
    """One gradient step on ``E_s E_pi[-alpha ln pi - alpha target]`` in ``log_alpha``."""
    gap = float(np.asarray(state_weights) @ entropies(pi)) - tuner.target_entropy
    return replace(tuner, log_alpha=tuner.log_alpha - tuner.tuner_lr * tuner.alpha * gap)
