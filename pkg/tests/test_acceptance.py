"""End-to-end acceptance checks, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that is printed in the terminal
summary, then asserts.
"""

from __future__ import annotations

import math
import time
from pathlib import Path

import numpy as np
import pytest

from tabular_ac.bellman import INFINITE, CriticConfig, m_step_evaluate
from tabular_ac.bounds import delta_tz
from tabular_ac.config import load_run_config, parse_run_config
from tabular_ac.diagnostics import lemma_checks, rate_fit, reduction_check
from tabular_ac.envs import garnet
from tabular_ac.harness import build_env, generic_regret_suite, regret_bound, run_exact, run_sampled, theorem_bound
from tabular_ac.mdp import entropies, exact_soft_values, h_tau
from tabular_ac.objectives import (
    ObjectiveSpec,
    evaluate_objective,
    inner_loop_optimize,
    objective_gradient,
    policy_from_logits,
)
from tabular_ac.policy_update import (
    dsac_actor_exact,
    fkl_project,
    npg_intermediate,
    rkl_project,
    simplex_minimize,
    soft_npg_step,
    soft_spma_step,
    spma_intermediate,
)

from conftest import ACCEPTANCE_LINES, random_policy

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
FAMILIES = ("npg_rkl", "spma_rkl", "npg_fkl", "spma_fkl")
SEEDS = range(5)


def verdict(label: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, f"{label}: {detail}"


def tv(p, q):
    return 0.5 * np.abs(p - q).sum(axis=-1)


def garnet_doc(seed: int, gamma: float) -> dict:
    return {"name": "garnet", "num_states": 10, "num_actions": 5, "branching": 3, "gamma": gamma, "seed": seed}


def soft_cfg(family: str, seed: int, *, zeta=0.1, m="infinite", K=1000, gamma=0.4):
    return parse_run_config(
        {
            "run_id": f"{family}-s{seed}",
            "env": garnet_doc(seed, gamma),
            "algorithm": {"family": family, "tau": 0.1, "zeta": zeta, "K": K},
            "schedule": {"mode": "theory_decay", "c": "floor"},
            "critic": {"m_steps": m},
        }
    )


@pytest.fixture(scope="module")
def soft_runs():
    """Soft NPG and soft SPMA at the schedule floor on five Garnets, exact and one-step critics."""
    out = {}
    for family in ("npg_rkl", "spma_rkl"):
        for m in ("infinite", 1):
            for seed in SEEDS:
                cfg = soft_cfg(family, seed, m=m)
                mdp = build_env(cfg)
                out[family, m, seed] = (cfg, mdp, run_exact(cfg, mdp))
    return out


def test_ac01_exact_evaluation():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        mdp = garnet(20, 5, 4, 0.9, seed=seed)
        rng = np.random.default_rng(seed)
        pi = random_policy(rng, 20, 5)
        P_pi = np.einsum("sa,sat->st", pi, mdp.transition)
        for tau in (0.0, 0.1):
            r_pi = (pi * mdp.reward).sum(axis=1) + tau * entropies(pi)
            v = np.zeros(20)
            for _ in range(10_000):
                v = r_pi + 0.9 * P_pi @ v
            q = mdp.reward + 0.9 * mdp.transition @ v
            v_lu, q_lu = exact_soft_values(mdp, pi, tau)
            worst = max(worst, np.max(np.abs(v - v_lu)), np.max(np.abs(q - q_lu)))
    elapsed = time.perf_counter() - start
    verdict("AC1", worst <= 1e-8 and elapsed < 5, f"max error {worst:.2e}, {elapsed:.2f}s")


def test_ac02_contraction_and_bellman_difference():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_contraction = worst_difference = -math.inf
    for i in range(100):
        S, A = int(rng.integers(2, 8)), int(rng.integers(2, 6))
        gamma = float(rng.uniform(0.1, 0.99))
        mdp = garnet(S, A, min(S, 3), gamma, seed=i)
        pi = random_policy(rng, S, A)
        tau, zeta = rng.uniform(0, 2, size=2)
        m = int(rng.integers(1, 6))
        q1, q2 = rng.normal(scale=5, size=(2, S, A))

        def apply(entropy, q):
            cfg = CriticConfig(zeta=entropy, m_steps=m, clamp_enabled=False, h_tau_bound=h_tau(entropy, A, gamma))
            return m_step_evaluate(mdp, pi, cfg, q)

        out = np.max(np.abs(apply(zeta, q1) - apply(zeta, q2)))
        worst_contraction = max(worst_contraction, out - gamma**m * np.max(np.abs(q1 - q2)))
        diff = np.max(np.abs(apply(tau, q1) - apply(zeta, q1)))
        worst_difference = max(worst_difference, diff - delta_tz(tau, zeta, A, gamma))
    elapsed = time.perf_counter() - start
    ok = worst_contraction <= 1e-12 and worst_difference <= 1e-9 and elapsed < 5
    verdict("AC2", ok, f"contraction slack {worst_contraction:.2e}, difference slack {worst_difference:.2e}, {elapsed:.2f}s")


def test_ac03_projections_match_numeric_minimizers():
    rng = np.random.default_rng(3)
    worst_rkl = 0.0
    for _ in range(50):
        S, A = int(rng.integers(1, 5)), int(rng.integers(2, 6))
        pi_half = random_policy(rng, S, A)
        tau_t = float(rng.uniform(0.01, 5))

        def value(p):
            return (1 + tau_t) * (p * np.log(p)).sum(axis=1) - (p * np.log(pi_half)).sum(axis=1)

        def grad(p):
            return (1 + tau_t) * (np.log(p) + 1) - np.log(pi_half)

        numeric = simplex_minimize(value, grad, np.full_like(pi_half, 1.0 / A))
        worst_rkl = max(worst_rkl, np.max(np.abs(numeric - rkl_project(pi_half, tau_t))))

    xs = np.arange(1, 10_000) * 1e-4
    worst_fkl = 0.0
    for _ in range(10):
        p = rng.dirichlet(np.ones(2))
        tau_t = float(rng.uniform(0.05, 3))
        objective = -p[0] * np.log(xs) - p[1] * np.log(1 - xs) + tau_t * (xs * np.log(xs) + (1 - xs) * np.log(1 - xs))
        best = xs[int(np.argmin(objective))]
        worst_fkl = max(worst_fkl, abs(fkl_project(p[None, :], tau_t)[0, 0] - best))
    verdict("AC3", worst_rkl <= 1e-6 and worst_fkl <= 2e-4, f"rkl max error {worst_rkl:.2e}, fkl max error {worst_fkl:.2e}")


def objective_instance(rng, family, S=4, A=3):
    pi_t = random_policy(rng, S, A)
    q = rng.uniform(0, 2, size=(S, A))
    tau = float(rng.uniform(0.05, 1.0))
    v = (pi_t * q).sum(axis=1) + float(rng.uniform(0, 1)) * entropies(pi_t)
    eta = float(rng.uniform(0.05, 0.3))
    return ObjectiveSpec(family, eta, tau, rng.dirichlet(np.ones(S))), pi_t, q, v


def test_ac04_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    worst = 0.0
    h = 1e-6
    for family in FAMILIES:
        for _ in range(20):
            spec, pi_t, q, v = objective_instance(rng, family)
            theta = rng.normal(size=q.shape)
            fd = np.zeros_like(theta)
            for idx in np.ndindex(theta.shape):
                up, dn = theta.copy(), theta.copy()
                up[idx] += h
                dn[idx] -= h
                fd[idx] = (evaluate_objective(spec, up, pi_t, q, v) - evaluate_objective(spec, dn, pi_t, q, v)) / (2 * h)
            g = objective_gradient(spec, theta, pi_t, q, v)
            worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))
    verdict("AC4", worst <= 1e-5, f"max relative error {worst:.2e} over 80 instances")


def test_ac05_inner_loop_reaches_closed_forms():
    rng = np.random.default_rng(5)
    worst = 0.0
    for family in FAMILIES:
        for _ in range(10):
            spec, pi_t, q, v = objective_instance(rng, family)
            theta = inner_loop_optimize(spec, np.log(pi_t), pi_t, q, v, n=5000, step=1.0, tol=1e-10)
            tau_t = spec.tau_t
            if family == "npg_rkl":
                target = soft_npg_step(pi_t, q, spec.eta, tau_t)
            elif family == "spma_rkl":
                target = soft_spma_step(pi_t, q, v, spec.eta, tau_t)
            elif family == "npg_fkl":
                target = fkl_project(npg_intermediate(pi_t, q, spec.eta), tau_t)
            else:
                target = fkl_project(spma_intermediate(pi_t, q, v, spec.eta), tau_t)
            worst = max(worst, np.max(tv(policy_from_logits(theta), target)))
    worst_dsac = 0.0
    for _ in range(10):
        spec, pi_t, q, v = objective_instance(rng, "npg_rkl")
        big = ObjectiveSpec("npg_rkl", 1e6, spec.tau, spec.state_weights)
        theta = inner_loop_optimize(big, np.log(pi_t), pi_t, q, v, n=5000, step=1.0, tol=1e-10)
        worst_dsac = max(worst_dsac, np.max(tv(policy_from_logits(theta), dsac_actor_exact(q, spec.tau))))
    verdict("AC5", worst <= 1e-3 and worst_dsac <= 1e-4, f"max TV {worst:.2e}, large-step vs dsac {worst_dsac:.2e}")


def test_ac06_reduction_grid():
    start = time.perf_counter()
    checked = failures = 0
    worst = -math.inf
    for family in ("npg_rkl", "spma_rkl"):
        for zeta in (0.1, 0.0):
            for m in (1, 5, "infinite"):
                for seed in SEEDS:
                    trace = run_exact(soft_cfg(family, seed, zeta=zeta, m=m, gamma=0.9))
                    for k in (10, 50, 100, 500, 1000):
                        lhs, rhs, holds = reduction_check(trace, trace.v_star, trace.gamma, k)
                        checked += 1
                        failures += not holds
                        worst = max(worst, lhs - rhs)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 180
    verdict("AC6", ok, f"{checked - failures}/{checked} checks hold, max lhs - rhs {worst:.3g}, {elapsed:.1f}s")


def test_ac07_soft_rates(soft_runs):
    violations = 0
    out_of_hyp = 0
    slopes = []
    for (family, m, seed), (cfg, mdp, trace) in soft_runs.items():
        for k in range(1, trace.K + 1):
            rhs, in_hyp = theorem_bound(cfg, mdp, k)
            out_of_hyp += not in_hyp
            violations += trace.subopt_mixture[k - 1] > rhs + 1e-9
        if m == "infinite":
            slopes.append(rate_fit(np.arange(1, trace.K + 1), trace.subopt_mixture, (249, 1000)).slope)
    slopes_ok = all(-1.3 <= s <= -0.6 for s in slopes)
    ok = violations == 0 and out_of_hyp == 0 and slopes_ok
    detail = f"{violations} bound violations, slopes in [{min(slopes):.3f}, {max(slopes):.3f}]"
    verdict("AC7", ok, detail)


def test_ac08_mismatched_critic_floor():
    worst = -math.inf
    in_hyp_all = True
    for family in ("npg_rkl", "spma_rkl"):
        for seed in SEEDS:
            cfg = soft_cfg(family, seed, zeta=0.0, K=2000)
            mdp = build_env(cfg)
            trace = run_exact(cfg, mdp)
            rhs, in_hyp = theorem_bound(cfg, mdp, 2000)
            in_hyp_all &= in_hyp
            worst = max(worst, trace.subopt_mixture[-1] / rhs)
    verdict("AC8", worst <= 1.0 and in_hyp_all, f"largest sub-optimality / bound at K=2000: {worst:.3g}")


def test_ac09_unregularized_rates():
    ratios = []
    slopes = []
    for family in ("npg_rkl", "spma_rkl"):
        means = []
        for K in (100, 400, 1600):
            vals = []
            for seed in SEEDS:
                cfg = parse_run_config(
                    {
                        "env": garnet_doc(seed, 0.4),
                        "algorithm": {"family": family, "tau": 0.0, "zeta": 0.0, "K": K},
                        "schedule": {"mode": "constant", "eta_const": "theorem"},
                        "critic": {"m_steps": "infinite"},
                    }
                )
                mdp = build_env(cfg)
                trace = run_exact(cfg, mdp)
                rhs, in_hyp = theorem_bound(cfg, mdp, K)
                assert in_hyp
                ratios.append(trace.subopt_mixture[-1] / rhs)
                vals.append(trace.subopt_mixture[-1])
            means.append(float(np.mean(vals)))
        slopes.append(rate_fit([100, 400, 1600], means, (0, 3)).slope)
    ok = max(ratios) <= 1.0 and all(-0.7 <= s <= -0.3 for s in slopes)
    verdict("AC9", ok, f"largest sub-optimality / bound {max(ratios):.3g}, slopes {', '.join(f'{s:.3f}' for s in slopes)}")


def test_ac10_regret(soft_runs):
    violations = checked = 0
    for (family, m, seed), (cfg, mdp, trace) in soft_runs.items():
        if m != "infinite":
            continue
        for k in range(1, trace.K + 1):
            rhs, in_hyp = regret_bound(cfg, mdp, k)
            checked += 1
            violations += (not in_hyp) or trace.regret_inf_norm[k - 1] > rhs + 1e-9
    generic = generic_regret_suite(100, seed=10)
    generic_ok = sum(r.holds for r in generic)
    ok = violations == 0 and generic_ok == 100
    verdict("AC10", ok, f"{checked - violations}/{checked} regret checks hold, generic sequences {generic_ok}/100")


def test_ac11_helper_lemmas():
    records = lemma_checks(1000, seed=11)
    counts: dict[str, list[int]] = {}
    for r in records:
        counts.setdefault(r.name, [0, 0])
        counts[r.name][0] += 1
        counts[r.name][1] += not r.holds
    ok = len(counts) == 4 and all(n == 1000 and bad == 0 for n, bad in counts.values())
    verdict("AC11", ok, ", ".join(f"{name} {bad}/{n} violations" for name, (n, bad) in sorted(counts.items())))


def gridworld_runs(family: str, zeta):
    base = load_run_config(CONFIGS / "sampled_gridworld_dsac.toml")
    alg = base.algorithm.__class__(**{**base.algorithm.__dict__, "family": family, "zeta": zeta})
    cfg = base.with_overrides(algorithm=alg)
    start = time.perf_counter()
    traces = [run_sampled(cfg.with_overrides(seed=s, run_id=f"{family}-s{s}")) for s in SEEDS]
    return traces, time.perf_counter() - start


def test_ac12_sampled_gridworld():
    lines = []
    ok = True
    for family in ("dsac", "npg_rkl"):
        traces, elapsed = gridworld_runs(family, 0.0)
        frac = np.mean([t.final_greedy_return for t in traces]) / traces[0].optimal_return
        steps = max(t.env_steps[-1] for t in traces)
        ok &= frac >= 0.9 and steps <= 200_000 and elapsed < 300
        lines.append(f"{family} zeta=0 reaches {100 * frac:.1f}% of optimal J in {steps} steps ({elapsed:.0f}s)")
    for family in ("dsac", "npg_rkl"):
        traces, elapsed = gridworld_runs(family, "tau")
        frac = np.mean([t.final_greedy_return for t in traces]) / traces[0].optimal_return
        ok &= elapsed < 300
        lines.append(f"{family} zeta=tau completes at {100 * frac:.1f}% ({elapsed:.0f}s)")
    verdict("AC12", ok, "; ".join(lines))
