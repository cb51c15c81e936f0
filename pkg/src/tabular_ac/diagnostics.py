"""Run traces and numerical checks of the convergence guarantees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.special import entr, xlogy

from .bellman import soft_bellman_q
from .bounds import delta_tz
from .envs import garnet
from .mdp import entropies
from .policy_update import ActorSchedule, soft_npg_step
from .rng import stream

__all__ = [
    "RunTrace",
    "RateFit",
    "CheckRecord",
    "mixture_value",
    "delta_tz",
    "per_state_regret",
    "regret_terms",
    "reduction_check",
    "pe_error",
    "rate_fit",
    "generic_regret_experiment",
    "lemma_checks",
]


@dataclass
class RunTrace:
    """Per-iteration record of one run.

    Per-iteration lists hold entries for ``t = 0 .. K-1``. ``policies`` and
    ``v_soft`` also hold the final policy ``pi_K`` and its value, so they have
    ``K + 1`` entries when recorded. Table-valued lists (policies, q tables,
    values, regret terms) may be left empty in sampled mode to save memory.
    """

    run_id: str = "run"
    mode: str = "exact"
    gamma: float = 0.9
    num_actions: int = 1
    tau: float = 0.0
    zeta: float = 0.0
    policies: list[np.ndarray] = field(default_factory=list)
    q_est: list[np.ndarray] = field(default_factory=list)
    q_exact: list[np.ndarray] = field(default_factory=list)
    v_soft: list[np.ndarray] = field(default_factory=list)
    regret_terms: list[np.ndarray] = field(default_factory=list)
    iteration: list[int] = field(default_factory=list)
    eta: list[float] = field(default_factory=list)
    tau_t: list[float] = field(default_factory=list)
    eps: list[float] = field(default_factory=list)
    regret_inf_norm: list[float] = field(default_factory=list)
    subopt_mixture: list[float] = field(default_factory=list)
    subopt_last: list[float] = field(default_factory=list)
    entropy_mean: list[float] = field(default_factory=list)
    returns: list[float] = field(default_factory=list)
    alpha: list[float] = field(default_factory=list)
    greedy_return: list[float] = field(default_factory=list)
    env_steps: list[int] = field(default_factory=list)
    v_star: np.ndarray | None = None
    pi_star: np.ndarray | None = None
    final_greedy_return: float = math.nan
    optimal_return: float = math.nan

    @property
    def K(self) -> int:
        return len(self.eta)

    def validate(self) -> None:
        K = self.K
        for name in ("tau_t", "eps", "iteration"):
            if len(getattr(self, name)) != K:
                raise ValueError(f"trace field {name} has length {len(getattr(self, name))}, expected {K}")
        for name in ("q_est", "q_exact", "regret_terms"):
            n = len(getattr(self, name))
            if n not in (0, K):
                raise ValueError(f"trace field {name} has length {n}, expected 0 or {K}")
        if any(e < 0 for e in self.eps if not math.isnan(e)):
            raise ValueError("negative evaluation error")
        if any(x < -1e-9 for x in self.subopt_mixture if not math.isnan(x)):
            raise ValueError("negative sub-optimality")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]


@dataclass(frozen=True)
class CheckRecord:
    """One line of a verification report."""

    name: str
    lhs: float
    rhs: float
    holds: bool
    tolerance: float
    seed: int | None = None
    status: str = ""

    def __post_init__(self) -> None:
        if not self.status:
            object.__setattr__(self, "status", "pass" if self.holds else "fail")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "holds": bool(self.holds),
            "tolerance": self.tolerance,
            "seed": self.seed,
            "status": self.status,
        }


def mixture_value(values: Sequence[np.ndarray]) -> np.ndarray:
    """Value of the uniform mixture policy: the mean of the component values."""
    if len(values) == 0:
        raise ValueError("mixture of an empty list is undefined")
    return np.mean(np.stack([np.asarray(v, dtype=float) for v in values]), axis=0)


def regret_terms(pi_t: np.ndarray, q_t: np.ndarray, pi_star: np.ndarray, h_star: np.ndarray, tau: float) -> np.ndarray:
    """Per-state ``<pi* - pi_t, q_t> + tau (H(pi*) - H(pi_t))``."""
    return ((pi_star - pi_t) * q_t).sum(axis=1) + tau * (h_star - entropies(pi_t))


def per_state_regret(
    trace: RunTrace, pi_star: np.ndarray, h_star: np.ndarray, tau: float, K: int | None = None
) -> np.ndarray:
    """Cumulative regret against ``pi_star`` over the first ``K`` iterations, per state."""
    K = trace.K if K is None else K
    if K > len(trace.q_est) or K > len(trace.policies):
        raise ValueError("trace does not hold policies and q estimates for the requested horizon")
    total = np.zeros(len(h_star))
    for t in range(K):
        total += regret_terms(trace.policies[t], trace.q_est[t], pi_star, h_star, tau)
    return total


def reduction_check(trace: RunTrace, v_star: np.ndarray, gamma: float, K: int) -> tuple[float, float, bool]:
    """Check ``||v* - v^{mixture_K}|| <= ||Regret(K)|| / (K (1-gamma)) + 2 sum eps_t / (K (1-gamma))``."""
    if not 1 <= K <= trace.K:
        raise ValueError(f"K must lie in [1, {trace.K}]")
    if len(trace.regret_terms) < K or len(trace.v_soft) < K:
        raise ValueError("trace lacks regret terms or soft values")
    lhs = float(np.max(np.abs(np.asarray(v_star) - mixture_value(trace.v_soft[:K]))))
    regret = np.sum(trace.regret_terms[:K], axis=0)
    scale = K * (1.0 - gamma)
    rhs = float(np.max(np.abs(regret)) / scale + 2.0 * math.fsum(trace.eps[:K]) / scale)
    return lhs, rhs, lhs <= rhs + 1e-9


def pe_error(q_est: np.ndarray, q_true: np.ndarray) -> float:
    q_est, q_true = np.asarray(q_est), np.asarray(q_true)
    if q_est.shape != q_true.shape:
        raise ValueError("shapes differ")
    return float(np.max(np.abs(q_est - q_true)))


def rate_fit(xs: Sequence[float], ys: Sequence[float], window: tuple[int, int] | None = None) -> RateFit:
    """Least-squares fit of ``ln y`` on ``ln x`` over ``window`` (default: the last half)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape:
        raise ValueError("xs and ys differ in length")
    start, end = window if window is not None else (len(xs) // 2, len(xs))
    if not 0 <= start < end <= len(xs) or end - start < 3:
        raise ValueError(f"window {start, end} must hold at least 3 points of the series")
    x, y = xs[start:end], ys[start:end]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("rate fits need positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("degenerate window: all x values coincide")
    if np.ptp(ly) == 0:
        return RateFit(0.0, float(ly[0]), 1.0, (start, end))
    fit = stats.linregress(lx, ly)
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), (start, end))


def _kl(u: np.ndarray, p: np.ndarray) -> float:
    return float(np.sum(xlogy(u, u) - xlogy(u, p)))


@dataclass(frozen=True)
class GenericRegretResult:
    measured: float
    bound: float
    holds: bool
    comparator: int


def generic_regret_experiment(
    loss_vectors: np.ndarray, tau: float, schedule: ActorSchedule, bounds: Sequence[float] | None = None
) -> GenericRegretResult:
    """Run the entropy-regularized proximal update on fixed losses and check its regret bound.

    ``loss_vectors`` has shape ``(K, A)``. Comparators are the ``A`` simplex
    vertices (indices ``0 .. A-1``) and the uniform point (index ``A``); the
    returned comparator is the one closest to violating the bound.
    ``bounds`` gives ``D_t``; it defaults to ``||d_t||_inf``.
    """
    d = np.atleast_2d(np.asarray(loss_vectors, dtype=float))
    K, A = d.shape
    D = np.max(np.abs(d), axis=1) if bounds is None else np.asarray(bounds, dtype=float)
    comparators = np.vstack([np.eye(A), np.full(A, 1.0 / A)])
    h_u = entr(comparators).sum(axis=1)
    pi = np.full(A, 1.0 / A)
    lhs = np.zeros(len(comparators))
    rhs = np.zeros(len(comparators))
    for t in range(K):
        eta = schedule.eta(t)
        tau_t = eta * tau
        nxt = soft_npg_step(pi[None, :], -d[t][None, :], 1.0, tau_t)[0]
        h_pi = float(entr(pi).sum())
        for j, u in enumerate(comparators):
            lhs[j] += float((pi - u) @ d[t]) / eta + tau * (h_u[j] - h_pi)
            kl_now, kl_next = _kl(u, pi), _kl(u, nxt)
            rhs[j] += kl_now / eta - kl_next / eta - tau * kl_next + D[t] ** 2 / (2 * eta)
        pi = nxt
    worst = int(np.argmax(lhs - rhs))
    return GenericRegretResult(float(lhs[worst]), float(rhs[worst]), bool(np.all(lhs <= rhs + 1e-8)), worst)


def _entropy_difference_sides(P: np.ndarray, Q: np.ndarray, C: float) -> tuple[float, float]:
    A = len(P)
    l1 = float(np.abs(P - Q).sum())
    lhs = abs(float(entr(Q).sum() - entr(P).sum()))
    rhs = l1 * math.log(A / C) + (math.log(A - 1) / 2 + math.sqrt(2)) * math.sqrt(C)
    return lhs, rhs


def _sequence_sum(k: int, gamma: float) -> float:
    i = np.arange(1, k + 1)
    return float(np.sum(gamma ** (k - i) / np.sqrt(i + 1)))


def _perturbed(P: np.ndarray, budget: float, rng: np.random.Generator) -> np.ndarray:
    """A distribution within l1 distance ``budget`` of ``P``."""
    target = rng.dirichlet(np.full(len(P), rng.uniform(0.2, 2.0)))
    dist = float(np.abs(target - P).sum())
    lam = 1.0 if dist <= budget else budget / dist
    return (1 - lam) * P + lam * target


def lemma_checks(n_samples: int = 1000, seed: int = 0, tol: float = 1e-9) -> list[CheckRecord]:
    """Evaluate both sides of the three helper inequalities on random admissible inputs.

    Returns one record per evaluated instance; ``holds`` is false when the
    left side exceeds the right side by more than ``tol``.
    """
    records: list[CheckRecord] = []

    rng = stream(seed, "verify", 0)
    for i in range(n_samples):
        A = int(rng.integers(2, 12))
        P = rng.dirichlet(np.full(A, rng.uniform(0.1, 3.0)))
        Q = P.copy() if i % 50 == 0 else _perturbed(P, rng.uniform(0.0, 0.5), rng)
        C = float(rng.uniform(1e-6, 0.5))
        lhs, rhs = _entropy_difference_sides(P, Q, C)
        records.append(CheckRecord("entropy_difference", lhs, rhs, lhs <= rhs + tol, tol, seed))

    rng = stream(seed, "verify", 1)
    for i in range(n_samples):
        gamma = (0.5, 0.9, 0.99)[i % 3]
        K = int(rng.integers(1, 5000))
        k = int(rng.integers(1, K + 1))
        lhs = _sequence_sum(k, gamma)
        rhs = math.sqrt(2 / k) / (1 - gamma) + gamma ** (k / 2) / (1 - gamma)
        records.append(CheckRecord("sequence_sum", lhs, rhs, lhs <= rhs + tol, tol, seed))

    rng = stream(seed, "verify", 3)
    for i in range(n_samples):
        gamma = (0.5, 0.9, 0.99)[i % 3]
        k_min = math.ceil(1 / math.log(1 / gamma) ** 2)
        k = k_min + int(rng.integers(0, 5000))
        lhs = _sequence_sum(k, gamma)
        rhs = 4 / (math.sqrt(k) * (1 - gamma))
        records.append(CheckRecord("sequence_sum_large_k", lhs, rhs, lhs <= rhs + tol, tol, seed))

    rng = stream(seed, "verify", 2)
    for i in range(n_samples):
        S, A = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        gamma = float(rng.uniform(0.0, 0.99))
        mdp = garnet(S, A, int(rng.integers(1, S + 1)), gamma, int(rng.integers(0, 2**31)))
        pi = rng.dirichlet(np.ones(A), size=S)
        q = rng.uniform(-5, 5, size=(S, A))
        tau = float(rng.uniform(0, 2))
        zeta = tau if i % 50 == 0 else float(rng.uniform(0, 2))
        m = (1, 2, 5)[i % 3]
        q_tau, q_zeta = q, q
        for _ in range(m):
            q_tau = soft_bellman_q(mdp, pi, tau, q_tau)
            q_zeta = soft_bellman_q(mdp, pi, zeta, q_zeta)
        lhs = float(np.max(np.abs(q_tau - q_zeta)))
        rhs = delta_tz(tau, zeta, A, gamma)
        records.append(CheckRecord("bellman_difference", lhs, rhs, lhs <= rhs + tol, tol, seed))
    return records
