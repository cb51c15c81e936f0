"""Closed-form constants and right-hand sides of the convergence guarantees.

``A`` is the number of actions, ``K`` the number of outer iterations and
``m`` the number of Bellman applications per evaluation (``math.inf`` for
exact evaluation, which removes the evaluation-error terms).
"""

from __future__ import annotations

import math

from .mdp import h_tau


def delta_tz(tau: float, zeta: float, num_actions: int, gamma: float) -> float:
    """Gap between actor and critic entropy scales: ``|tau - zeta| ln A / (1 - gamma)``."""
    if not gamma < 1:
        raise ValueError("gamma must be below 1")
    return abs(tau - zeta) * math.log(num_actions) / (1.0 - gamma)


def _gamma_pow(gamma: float, m: float) -> float:
    return 0.0 if math.isinf(m) else gamma**m


def c_floor_soft_npg(tau: float, num_actions: int, gamma: float) -> float:
    """Smallest schedule constant ``c`` admitted by the soft NPG guarantee."""
    L = tau * math.log(num_actions)
    floors = [8 * (1 + L) / (1 - gamma), 32 * L]
    if L > 0:
        floors.append(2 * (1 + L) ** 2 / ((1 - gamma) ** 2 * L))
    return max(floors)


def c_floor_soft_spma(tau: float, num_actions: int, gamma: float, zeta: float = 0.0) -> float:
    """Smallest schedule constant ``c`` admitted by the soft SPMA guarantees.

    Includes ``2 max(H_tau, zeta ln A)``, which keeps ``1 + eta (q - v)`` at
    least one half.
    """
    L = tau * math.log(num_actions)
    floors = [
        4 * (1 + L) / (1 - gamma),
        32 * L,
        2 * (1 + L) / (1 - gamma),
        2 * max(h_tau(tau, num_actions, gamma), zeta * math.log(num_actions)),
    ]
    if L > 0:
        floors.append((1 + L) ** 2 / ((1 - gamma) ** 2 * 2 * L))
    return max(floors)


def regret_bound_soft_npg(K: int, tau: float, num_actions: int, gamma: float, c: float) -> float:
    H = h_tau(tau, num_actions, gamma)
    return H**2 / (2 * tau) * (1 + math.log(K)) + (c + tau) * math.log(num_actions)


def regret_bound_soft_spma(K: int, tau: float, num_actions: int, gamma: float, c: float) -> float:
    H = h_tau(tau, num_actions, gamma)
    return 3 * H**2 / tau * (1 + math.log(K)) + (c + tau) * math.log(num_actions)


def regret_bound_npg(K: int, num_actions: int, gamma: float) -> float:
    """Unregularized NPG with ``eta = sqrt(2 ln A) (1 - gamma) / sqrt(K)``."""
    return math.sqrt(2 * math.log(num_actions)) * math.sqrt(K) / (1 - gamma)


def regret_bound_spma(K: int, num_actions: int, gamma: float) -> float:
    """Unregularized SPMA with ``eta = min((1 - gamma) / 2, sqrt(2 ln A) (1 - gamma) / sqrt(K))``."""
    lnA = math.log(num_actions)
    return 7 * math.sqrt(lnA) * math.sqrt(K) / (math.sqrt(2) * (1 - gamma)) + 2 * lnA / (1 - gamma)


def eta_npg(K: int, num_actions: int, gamma: float) -> float:
    return math.sqrt(2) * (1 - gamma) * math.sqrt(math.log(num_actions)) / math.sqrt(K)


def eta_spma(K: int, num_actions: int, gamma: float) -> float:
    return min((1 - gamma) / 2, eta_npg(K, num_actions, gamma))


def _evaluation_term(K: int, tau: float, num_actions: int, gamma: float, m: float) -> float:
    lnA = math.log(num_actions)
    gm = _gamma_pow(gamma, m)
    if gm == 0.0:
        return 0.0
    inner = (1 + tau * math.log(num_actions * K)) * math.sqrt(lnA) * (
        math.sqrt(K) + 1 / (1 - math.sqrt(gamma))
    ) + tau * (lnA + 1) * math.sqrt(K)
    return 16 * (1 + tau * lnA) * gm / ((1 - gamma) ** 4 * K) * inner


def _soft_suboptimality(
    lead: float, K: int, tau: float, zeta: float, num_actions: int, gamma: float, c: float, m: float
) -> float:
    lnA = math.log(num_actions)
    L = 1 + tau * lnA
    optimization = (lead * L**2 / (tau * (1 - gamma) ** 2) * (1 + math.log(K)) + (c + tau) * lnA) / (
        K * (1 - gamma)
    )
    mismatch = 2 * delta_tz(tau, zeta, num_actions, gamma) / (1 - gamma)
    return optimization + _evaluation_term(K, tau, num_actions, gamma, m) + mismatch


def subopt_bound_soft_npg(K, tau, zeta, num_actions, gamma, c, m) -> float:
    """Bound on ``||v* - v^{mixture_K}||_inf`` for soft NPG on the theory schedule."""
    return _soft_suboptimality(0.5, K, tau, zeta, num_actions, gamma, c, m)


def subopt_bound_soft_spma(K, tau, zeta, num_actions, gamma, c, m) -> float:
    """Bound on ``||v* - v^{mixture_K}||_inf`` for soft SPMA on the theory schedule."""
    return _soft_suboptimality(1.5, K, tau, zeta, num_actions, gamma, c, m)


def subopt_bound_npg(K: int, num_actions: int, gamma: float, m: float) -> float:
    lnA = math.log(num_actions)
    return math.sqrt(2 * lnA) / (math.sqrt(K) * (1 - gamma) ** 2) + 4 * math.sqrt(lnA) * _gamma_pow(
        gamma, m
    ) / (math.sqrt(K) * (1 - gamma) ** 4)


def subopt_bound_spma(K: int, num_actions: int, gamma: float, m: float) -> float:
    lnA = math.log(num_actions)
    return regret_bound_spma(K, num_actions, gamma) / (K * (1 - gamma)) + 2 * math.sqrt(lnA) * _gamma_pow(
        gamma, m
    ) / (math.sqrt(K) * (1 - gamma) ** 4)


def c_floor(family: str, tau: float, num_actions: int, gamma: float, zeta: float = 0.0) -> float:
    if family == "npg_rkl":
        return c_floor_soft_npg(tau, num_actions, gamma)
    if family == "spma_rkl":
        return c_floor_soft_spma(tau, num_actions, gamma, zeta)
    raise ValueError(f"no schedule floor is known for family {family!r}")
