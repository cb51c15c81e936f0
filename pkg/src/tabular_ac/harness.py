"""Training loops in exact and sampled mode, trace output and the verification grid."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import bounds, kernels
from .bellman import CriticConfig, TransitionBatch, m_step_evaluate, polyak_update, sampled_critic_update
from .config import RunConfig, parse_run_config
from .diagnostics import CheckRecord, RunTrace, generic_regret_experiment, lemma_checks, rate_fit, reduction_check, regret_terms
from .envs import make_env
from .errors import ConfigError, IterationError
from .mdp import Mdp, entropies, exact_soft_values, h_tau, optimal_soft_policy, return_J, uniform_policy
from .objectives import EntropyTuner, ObjectiveSpec, entropy_tuner_step, inner_loop_optimize, policy_from_logits
from .policy_update import (
    ActorSchedule,
    dsac_actor_exact,
    fkl_project,
    npg_intermediate,
    soft_npg_step,
    soft_spma_step,
    spma_intermediate,
)
from .replay import ReplayBuffer
from .rng import stream

CSV_COLUMNS = (
    "run_id",
    "t",
    "eta_t",
    "tau_t",
    "eps_t",
    "regret_inf_norm_cum",
    "subopt_mixture",
    "subopt_last",
    "entropy_mean",
    "return_empirical",
    "alpha",
)

OPTIMAL_TOL = 1e-12


def build_env(cfg: RunConfig) -> Mdp:
    return make_env(cfg.env.name, **cfg.env.params)


def resolve_schedule(cfg: RunConfig, mdp: Mdp) -> ActorSchedule:
    """Turn the schedule table into an :class:`ActorSchedule`, filling in symbolic constants."""
    alg, sch = cfg.algorithm, cfg.schedule
    tau = 0.0 if alg.auto_tau else float(alg.tau)
    A, gamma = mdp.num_actions, mdp.discount
    c = sch.c
    if c == "floor" and alg.family == "dsac":
        c = 0.0  # the step is infinite, the schedule is never read
    elif c == "floor":
        if alg.family not in ("npg_rkl", "spma_rkl"):
            raise ConfigError(f"no schedule floor is known for family {alg.family!r}; give schedule.c a number")
        zeta = tau if alg.zeta == "tau" else float(alg.zeta)
        c = bounds.c_floor(alg.family, tau, A, gamma, zeta)
    eta_const = sch.eta_const
    if eta_const == "theorem":
        if alg.family == "npg_rkl":
            eta_const = bounds.eta_npg(max(alg.K, 1), A, gamma)
        elif alg.family == "spma_rkl":
            eta_const = bounds.eta_spma(max(alg.K, 1), A, gamma)
        else:
            raise ConfigError(f"no theorem step size is known for family {alg.family!r}")
    return ActorSchedule(sch.mode, float(c), tau, float(eta_const))


def critic_config(cfg: RunConfig, mdp: Mdp, tau: float, zeta: float) -> CriticConfig:
    cr = cfg.critic
    return CriticConfig(
        zeta=zeta,
        m_steps=cr.m_steps,
        clamp_enabled=cfg.clamp_enabled,
        h_tau_bound=h_tau(tau, mdp.num_actions, mdp.discount),
        target_smoothing=cr.target_smoothing,
        critic_lr=cr.critic_lr,
        critic_steps=cr.critic_steps,
        clamp_placement=cr.clamp_placement,
        target_mode=cr.target_mode,
    )


def _zeta(cfg: RunConfig, tau: float) -> float:
    return tau if cfg.algorithm.zeta == "tau" else float(cfg.algorithm.zeta)


def greedy_return(mdp: Mdp, pi: np.ndarray) -> float:
    """Unregularized return of the greedy policy (ties to the lowest action index)."""
    greedy = np.zeros_like(pi)
    greedy[np.arange(pi.shape[0]), np.argmax(pi, axis=1)] = 1.0
    return return_J(mdp, exact_soft_values(mdp, greedy, 0.0)[0])


def _objective_family(family: str) -> str:
    return "npg_rkl" if family == "dsac" else family


def exact_actor_update(cfg: RunConfig, pi: np.ndarray, q: np.ndarray, eta: float, tau: float, zeta: float) -> np.ndarray:
    """One policy update of the configured family from an evaluated critic."""
    alg = cfg.algorithm
    family = alg.family
    tau_t = eta * tau
    v = (pi * q).sum(axis=1) + zeta * entropies(pi)
    if alg.actor_solver == "inner_loop":
        eta_obj = math.inf if family == "dsac" else eta
        spec = ObjectiveSpec(_objective_family(family), eta_obj, tau, np.full(pi.shape[0], 1.0 / pi.shape[0]))
        theta = inner_loop_optimize(
            spec, np.log(pi), pi, q, v, alg.n, alg.inner_step, alg.inner_backtracking, alg.inner_tol
        )
        return policy_from_logits(theta)
    if family == "npg_rkl":
        return soft_npg_step(pi, q, eta, tau_t)
    if family == "spma_rkl":
        return soft_spma_step(pi, q, v, eta, tau_t)
    if family == "npg_fkl":
        return fkl_project(npg_intermediate(pi, q, eta), tau_t, alg.fkl_tol)
    if family == "spma_fkl":
        return fkl_project(spma_intermediate(pi, q, v, eta), tau_t, alg.fkl_tol)
    return dsac_actor_exact(q, tau)


def run_exact(cfg: RunConfig, mdp: Mdp | None = None) -> RunTrace:
    """Exact tabular loop: evaluate ``pi_t`` with the m-step critic, then apply the family's update."""
    if cfg.algorithm.mode != "exact":
        raise ConfigError("run_exact needs mode = 'exact'")
    mdp = build_env(cfg) if mdp is None else mdp
    S, A, gamma = mdp.num_states, mdp.num_actions, mdp.discount
    tau = float(cfg.algorithm.tau)
    zeta = _zeta(cfg, tau)
    schedule = resolve_schedule(cfg, mdp)
    critic = critic_config(cfg, mdp, tau, zeta)
    pi_star, v_star = optimal_soft_policy(mdp, tau, tol=OPTIMAL_TOL)
    h_star = entropies(pi_star)
    keep = cfg.record_tables

    trace = RunTrace(cfg.run_id, "exact", gamma, A, tau, zeta, v_star=v_star, pi_star=pi_star)
    trace.optimal_return = return_J(mdp, optimal_soft_policy(mdp, 0.0, tol=OPTIMAL_TOL)[1])
    pi = uniform_policy(S, A)
    q = exact_soft_values(mdp, pi, zeta)[1]
    regret = np.zeros(S)
    v_sum = np.zeros(S)
    for t in range(cfg.algorithm.K):
        try:
            if t > 0:
                q = m_step_evaluate(mdp, pi, critic, q)
            v_pi, q_pi = exact_soft_values(mdp, pi, tau)
            term = regret_terms(pi, q, pi_star, h_star, tau)
            eta = math.inf if cfg.algorithm.family == "dsac" else schedule.eta(t)
            pi_next = exact_actor_update(cfg, pi, q, eta, tau, zeta)
        except Exception as exc:
            raise IterationError(t, exc) from exc
        regret += term
        v_sum += v_pi
        trace.iteration.append(t)
        trace.eta.append(eta)
        trace.tau_t.append(eta * tau if tau > 0 else 0.0)
        trace.eps.append(float(np.max(np.abs(q - q_pi))))
        trace.regret_inf_norm.append(float(np.max(np.abs(regret))))
        trace.subopt_mixture.append(float(np.max(np.abs(v_star - v_sum / (t + 1)))))
        trace.subopt_last.append(float(np.max(np.abs(v_star - v_pi))))
        trace.entropy_mean.append(float(entropies(pi).mean()))
        trace.returns.append(math.nan)
        trace.alpha.append(math.nan)
        if keep:
            trace.policies.append(pi)
            trace.q_est.append(q)
            trace.q_exact.append(q_pi)
            trace.v_soft.append(v_pi)
            trace.regret_terms.append(term)
        pi = pi_next
    if keep:
        trace.policies.append(pi)
        trace.v_soft.append(exact_soft_values(mdp, pi, tau)[0])
    trace.final_greedy_return = greedy_return(mdp, pi)
    trace.validate()
    return trace


@dataclass
class _EpisodeTracker:
    """Discounted returns of episodes that started from the initial distribution."""

    gamma: float
    window: int = 20
    running: float = 0.0
    discount: float = 1.0
    finished: list[float] = field(default_factory=list)

    def update(self, rewards: np.ndarray, ends: np.ndarray) -> None:
        for r, end in zip(rewards, ends):
            self.running += self.discount * r
            self.discount *= self.gamma
            if end:
                self.finished.append(self.running)
                self.running, self.discount = 0.0, 1.0

    def mean(self) -> float:
        recent = self.finished[-self.window :]
        return float(np.mean(recent)) if recent else math.nan


def run_sampled(cfg: RunConfig, mdp: Mdp | None = None, buffer: ReplayBuffer | None = None) -> RunTrace:
    """Off-policy loop: collect ``N`` steps, fit the critic on replayed batches, take ``n`` actor steps.

    A pre-filled ``buffer`` may be supplied, which with ``N = 0`` gives pure
    offline training.
    """
    if cfg.algorithm.mode != "sampled":
        raise ConfigError("run_sampled needs mode = 'sampled'")
    alg, smp = cfg.algorithm, cfg.sampled
    mdp = build_env(cfg) if mdp is None else mdp
    S, A, gamma = mdp.num_states, mdp.num_actions, mdp.discount
    if alg.auto_tau and cfg.clamp_enabled:
        raise ConfigError("clamping needs a fixed tau to define its ceiling")
    schedule = resolve_schedule(cfg, mdp)
    seed = cfg.seed

    tuner = None
    if alg.auto_tau:
        tc = cfg.tuner
        tuner = EntropyTuner.for_actions(A, tc.target_entropy_scale, tc.init_alpha, tc.lr)
    fixed_tau = None if alg.auto_tau else float(alg.tau)

    trace = RunTrace(cfg.run_id, "sampled", gamma, A, math.nan if alg.auto_tau else fixed_tau, math.nan)
    trace.optimal_return = return_J(mdp, optimal_soft_policy(mdp, 0.0, tol=OPTIMAL_TOL)[1])
    v_star = pi_star = h_star = None
    if fixed_tau is not None:
        pi_star, v_star = optimal_soft_policy(mdp, fixed_tau, tol=OPTIMAL_TOL)
        h_star = entropies(pi_star)
        trace.v_star, trace.pi_star = v_star, pi_star
    keep = cfg.record_tables

    buffer = ReplayBuffer(smp.buffer_capacity) if buffer is None else buffer
    trans_cdf = kernels.cdf_rows(mdp.transition)
    start_cdf = kernels.cdf_rows(mdp.initial_dist)
    state = int(np.searchsorted(start_cdf, stream(seed, "reset").random(), side="right"))
    clock = 0
    episodes = _EpisodeTracker(gamma)
    env_steps = 0

    def collect(policy: np.ndarray, n: int, call: int) -> None:
        nonlocal state, clock, env_steps
        if n == 0:
            return
        u = stream(seed, "rollout", call).random((n, 3))
        s, a, r, s2, ends, state, clock = kernels.rollout(
            trans_cdf, kernels.cdf_rows(policy), start_cdf, mdp.reward, state, clock, smp.episode_length, u
        )
        buffer.extend(TransitionBatch(s, a, r, s2))
        episodes.update(r, ends)
        env_steps += n

    theta = np.zeros((S, A))
    q_online = np.zeros((S, A))
    q_target = np.zeros((S, A))
    collect(uniform_policy(S, A), smp.warmup_steps, 0)
    regret = np.zeros(S)
    v_sum = np.zeros(S)
    actor_batch = smp.actor_batch_size or smp.batch_size

    for t in range(alg.K):
        try:
            pi = policy_from_logits(theta)
            tau = tuner.alpha if tuner is not None else fixed_tau
            zeta = _zeta(cfg, tau)
            critic = critic_config(cfg, mdp, tau, zeta)
            collect(pi, smp.N, t + 1)
            rng_buffer = stream(seed, "buffer", t)
            rng_critic = stream(seed, "critic", t)
            for _ in range(cfg.critic.updates_per_iteration):
                batch = buffer.sample(smp.batch_size, rng_buffer)
                q_online = sampled_critic_update(batch, pi, q_target, critic, q_online, gamma, rng_critic)
                q_target = polyak_update(q_target, q_online, critic.target_smoothing)
            states = buffer.sample(actor_batch, rng_buffer).states
            weights = np.bincount(states, minlength=S) / len(states)
            q = q_online
            v = (pi * q).sum(axis=1) + zeta * entropies(pi)
            eta = math.inf if alg.family == "dsac" else schedule.eta(t)
            spec = ObjectiveSpec(_objective_family(alg.family), eta, tau, weights)
            theta = inner_loop_optimize(spec, theta, pi, q, v, alg.n, alg.inner_step, alg.inner_backtracking, alg.inner_tol)
            if tuner is not None:
                tuner = entropy_tuner_step(tuner, pi, weights)
        except Exception as exc:
            raise IterationError(t, exc) from exc

        trace.iteration.append(t)
        trace.eta.append(eta)
        trace.tau_t.append(eta * tau if tau > 0 else 0.0)
        trace.alpha.append(tau if tuner is not None else math.nan)
        trace.entropy_mean.append(float(entropies(pi).mean()))
        trace.returns.append(episodes.mean())
        trace.env_steps.append(env_steps)
        evaluate = (t + 1) % cfg.diagnostics.eval_every == 0 or t == alg.K - 1
        eps = reg = sub_mix = sub_last = math.nan
        if evaluate or v_star is not None:
            v_pi, q_pi = exact_soft_values(mdp, pi, tau)
            eps = float(np.max(np.abs(q - q_pi)))
            if v_star is not None:
                term = regret_terms(pi, q, pi_star, h_star, tau)
                regret += term
                v_sum += v_pi
                reg = float(np.max(np.abs(regret)))
                sub_mix = float(np.max(np.abs(v_star - v_sum / (t + 1))))
                sub_last = float(np.max(np.abs(v_star - v_pi)))
                if keep:
                    trace.policies.append(pi)
                    trace.q_est.append(q)
                    trace.q_exact.append(q_pi)
                    trace.v_soft.append(v_pi)
                    trace.regret_terms.append(term)
        trace.eps.append(eps)
        trace.regret_inf_norm.append(reg)
        trace.subopt_mixture.append(sub_mix)
        trace.subopt_last.append(sub_last)
        trace.greedy_return.append(greedy_return(mdp, pi) if evaluate else math.nan)
    final = policy_from_logits(theta)
    if keep and v_star is not None:
        trace.policies.append(final)
        trace.v_soft.append(exact_soft_values(mdp, final, fixed_tau)[0])
    trace.final_greedy_return = greedy_return(mdp, final)
    trace.validate()
    return trace


def run(cfg: RunConfig) -> RunTrace:
    return run_exact(cfg) if cfg.algorithm.mode == "exact" else run_sampled(cfg)


def _cell(value: float) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def trace_rows(trace: RunTrace) -> list[dict[str, str]]:
    rows = []
    for i, t in enumerate(trace.iteration):
        rows.append(
            {
                "run_id": trace.run_id,
                "t": str(t),
                "eta_t": _cell(trace.eta[i]),
                "tau_t": _cell(trace.tau_t[i]),
                "eps_t": _cell(trace.eps[i]),
                "regret_inf_norm_cum": _cell(trace.regret_inf_norm[i]),
                "subopt_mixture": _cell(trace.subopt_mixture[i]),
                "subopt_last": _cell(trace.subopt_last[i]),
                "entropy_mean": _cell(trace.entropy_mean[i]),
                "return_empirical": _cell(trace.returns[i]),
                "alpha": _cell(trace.alpha[i]),
            }
        )
    return rows


def write_trace_csv(traces: Iterable[RunTrace], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for trace in traces:
            writer.writerows(trace_rows(trace))


def write_report(records: Sequence[CheckRecord], path: str | Path) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in records], indent=2, default=_json_default))


def _json_default(x: Any):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


# ---------------------------------------------------------------- verification grid

CHECKS = ("reduction", "suboptimality", "regret", "rate", "exact_evaluation", "initial_error")
GRID_KEYS = {"ks", "seeds", "checks", "rate_window", "rate_slope", "lemmas", "lemma_samples", "generic_regret"}


@dataclass(frozen=True)
class GridCell:
    name: str
    config: RunConfig
    seeds: tuple[int, ...]
    checks: tuple[str, ...]
    ks: tuple[int, ...]
    rate_window: tuple[int, int] | None
    rate_slope: tuple[float, float] | None
    rate_group: str | None


@dataclass(frozen=True)
class Grid:
    cells: tuple[GridCell, ...] = ()
    lemma_samples: int = 0
    generic_regret: int = 0


def parse_grid(doc: dict) -> Grid:
    """Parse a verification grid: a ``[grid]`` table of defaults and a list of ``[[cells]]``.

    Each cell holds a run configuration plus optional overrides of the grid
    defaults and an optional ``name`` and ``rate_group``.
    """
    unknown = set(doc) - {"grid", "cells"}
    if unknown:
        raise ConfigError(f"unknown top-level keys in grid: {sorted(unknown)}")
    defaults = dict(doc.get("grid", {}))
    bad = set(defaults) - GRID_KEYS
    if bad:
        raise ConfigError(f"unknown keys in [grid]: {sorted(bad)}")
    cells = []
    for i, raw in enumerate(doc.get("cells", [])):
        raw = dict(raw)
        name = raw.pop("name", f"cell{i}")
        group = raw.pop("rate_group", None)
        opts = {k: raw.pop(k, defaults.get(k)) for k in ("ks", "seeds", "checks", "rate_window", "rate_slope")}
        for k in ("lemmas", "lemma_samples", "generic_regret"):
            if k in raw:
                raise ConfigError(f"{k} is a grid-wide setting")
        cfg = parse_run_config(raw)
        if cfg.algorithm.mode != "exact":
            raise ConfigError(f"grid cell {name!r} must use exact mode")
        checks = tuple(opts["checks"] or ("reduction",))
        for c in checks:
            if c not in CHECKS:
                raise ConfigError(f"unknown check {c!r}; choose from {CHECKS}")
        seeds = tuple(opts["seeds"] or (cfg.env.params.get("seed", 0),))
        ks = tuple(opts["ks"] or (cfg.algorithm.K,))
        window = tuple(opts["rate_window"]) if opts["rate_window"] else None
        slope = tuple(opts["rate_slope"]) if opts["rate_slope"] else None
        cells.append(GridCell(name, cfg, seeds, checks, ks, window, slope, group))
    samples = defaults.get("lemma_samples", 1000) if defaults.get("lemmas", False) else 0
    return Grid(tuple(cells), int(samples), int(defaults.get("generic_regret", 0)))


def _seeded(cfg: RunConfig, seed: int) -> RunConfig:
    params = dict(cfg.env.params)
    if "seed" in params:
        params["seed"] = seed
    env = type(cfg.env)(cfg.env.name, params)
    return cfg.with_overrides(env=env, seed=seed, run_id=f"{cfg.run_id}-s{seed}")


def theorem_bound(cfg: RunConfig, mdp: Mdp, K: int) -> tuple[float, bool]:
    """Closed-form sub-optimality bound at horizon ``K`` and whether the run meets its hypotheses."""
    alg = cfg.algorithm
    tau = float(alg.tau)
    zeta = _zeta(cfg, tau)
    A, gamma = mdp.num_actions, mdp.discount
    m = cfg.critic.m_steps
    sch = resolve_schedule(cfg, mdp)
    if alg.family not in ("npg_rkl", "spma_rkl") or alg.actor_solver != "closed_form":
        return math.nan, False
    if tau > 0:
        in_hyp = sch.mode == "theory_decay" and sch.c >= bounds.c_floor(alg.family, tau, A, gamma) - 1e-12
        if m != math.inf:
            in_hyp &= cfg.clamp_enabled
        fn = bounds.subopt_bound_soft_npg if alg.family == "npg_rkl" else bounds.subopt_bound_soft_spma
        return fn(K, tau, zeta, A, gamma, sch.c, m), in_hyp
    eta = bounds.eta_npg(K, A, gamma) if alg.family == "npg_rkl" else bounds.eta_spma(K, A, gamma)
    in_hyp = sch.mode == "constant" and math.isclose(sch.eta_const, eta, rel_tol=1e-12) and zeta == 0
    in_hyp &= K == alg.K
    fn = bounds.subopt_bound_npg if alg.family == "npg_rkl" else bounds.subopt_bound_spma
    return fn(K, A, gamma, m), in_hyp


def regret_bound(cfg: RunConfig, mdp: Mdp, K: int) -> tuple[float, bool]:
    alg = cfg.algorithm
    tau = float(alg.tau)
    A, gamma = mdp.num_actions, mdp.discount
    sch = resolve_schedule(cfg, mdp)
    if alg.family not in ("npg_rkl", "spma_rkl") or alg.actor_solver != "closed_form":
        return math.nan, False
    if tau > 0:
        zeta = _zeta(cfg, tau)
        floor = bounds.c_floor(alg.family, tau, A, gamma, zeta)
        in_hyp = sch.mode == "theory_decay" and sch.c >= floor - 1e-12
        in_hyp &= cfg.critic.m_steps == math.inf or cfg.clamp_enabled
        fn = bounds.regret_bound_soft_npg if alg.family == "npg_rkl" else bounds.regret_bound_soft_spma
        return fn(K, tau, A, gamma, sch.c), in_hyp
    eta = bounds.eta_npg(K, A, gamma) if alg.family == "npg_rkl" else bounds.eta_spma(K, A, gamma)
    in_hyp = sch.mode == "constant" and math.isclose(sch.eta_const, eta, rel_tol=1e-12) and K == alg.K
    fn = bounds.regret_bound_npg if alg.family == "npg_rkl" else bounds.regret_bound_spma
    return fn(K, A, gamma), in_hyp


def _gated(name: str, lhs: float, rhs: float, in_hyp: bool, tol: float, seed: int) -> CheckRecord:
    holds = lhs <= rhs + tol
    if not in_hyp:
        return CheckRecord(name, lhs, rhs, True, tol, seed, "out_of_hypothesis")
    return CheckRecord(name, lhs, rhs, holds, tol, seed)


def check_run(cell: GridCell, seed: int) -> tuple[list[CheckRecord], list[dict]]:
    """Run one ``(cell, seed)`` pair and evaluate its checks; exceptions become failed records."""
    cfg = _seeded(cell.config, seed)
    prefix = f"{cell.name}/seed={seed}"
    try:
        mdp = build_env(cfg)
        trace = run_exact(cfg, mdp)
    except Exception as exc:
        return [CheckRecord(f"{prefix}/run_error: {exc}", math.nan, math.nan, False, 0.0, seed)], []
    records: list[CheckRecord] = []
    K_run = trace.K
    ks = [k for k in cell.ks if 1 <= k <= K_run]
    tau, zeta = trace.tau, trace.zeta
    for check in cell.checks:
        if check == "reduction":
            for k in ks:
                lhs, rhs, holds = reduction_check(trace, trace.v_star, trace.gamma, k)
                records.append(CheckRecord(f"{prefix}/reduction/K={k}", lhs, rhs, holds, 1e-9, seed))
        elif check == "suboptimality":
            for k in ks:
                rhs, in_hyp = theorem_bound(cfg, mdp, k)
                records.append(_gated(f"{prefix}/suboptimality/K={k}", trace.subopt_mixture[k - 1], rhs, in_hyp, 1e-9, seed))
        elif check == "regret":
            worst = None
            for k in range(1, K_run + 1):
                rhs, in_hyp = regret_bound(cfg, mdp, k)
                if tau == 0 and k != K_run:
                    continue
                lhs = trace.regret_inf_norm[k - 1]
                if worst is None or lhs - rhs > worst[0] - worst[1]:
                    worst = (lhs, rhs, in_hyp, k)
            if worst is not None:
                lhs, rhs, in_hyp, k = worst
                records.append(_gated(f"{prefix}/regret/worst_K={k}", lhs, rhs, in_hyp, 1e-9, seed))
        elif check == "rate":
            if cell.rate_window is None or cell.rate_slope is None:
                raise ConfigError(f"cell {cell.name!r} needs rate_window and rate_slope for the rate check")
            lo, hi = cell.rate_window
            xs = np.arange(1, K_run + 1)
            fit = rate_fit(xs, trace.subopt_mixture, (lo - 1, min(hi, K_run)))
            a, b = cell.rate_slope
            records.append(CheckRecord(f"{prefix}/rate_slope", fit.slope, b, a <= fit.slope <= b, 0.0, seed))
        elif check == "exact_evaluation":
            worst = max(trace.eps) if trace.eps else 0.0
            records.append(CheckRecord(f"{prefix}/exact_evaluation", worst, 1e-8, worst <= 1e-8, 0.0, seed))
        elif check == "initial_error":
            delta = bounds.delta_tz(tau, zeta, trace.num_actions, trace.gamma)
            e0 = trace.eps[0] if trace.eps else 0.0
            records.append(CheckRecord(f"{prefix}/initial_error", e0, delta, e0 <= delta + 1e-9, 1e-9, seed))
    rows = [
        {"cell": cell.name, "group": cell.rate_group or "", "seed": seed, "K": k, "subopt_mixture": trace.subopt_mixture[k - 1]}
        for k in ks
    ]
    return records, rows


def _group_rate_checks(cells: Sequence[GridCell], rows: list[dict]) -> list[CheckRecord]:
    """Rate fits across cells that share a ``rate_group`` (one horizon per cell, seeds averaged)."""
    records = []
    groups = sorted({c.rate_group for c in cells if c.rate_group})
    for group in groups:
        members = [c for c in cells if c.rate_group == group]
        slope = next((c.rate_slope for c in members if c.rate_slope), None)
        points = []
        for c in members:
            K = c.config.algorithm.K
            vals = [r["subopt_mixture"] for r in rows if r["cell"] == c.name and r["K"] == K]
            if vals:
                points.append((K, float(np.mean(vals))))
        points.sort()
        if slope is None or len(points) < 3:
            records.append(CheckRecord(f"{group}/rate_slope", math.nan, math.nan, False, 0.0, None))
            continue
        fit = rate_fit([p[0] for p in points], [p[1] for p in points], (0, len(points)))
        records.append(CheckRecord(f"{group}/rate_slope", fit.slope, slope[1], slope[0] <= fit.slope <= slope[1], 0.0, None))
    return records


def _check_task(args: tuple[GridCell, int]):
    return check_run(*args)


def verify_theory(grid: Grid, jobs: int = 1, seed: int = 0) -> tuple[list[CheckRecord], list[dict]]:
    """Run every ``(cell, seed)`` pair, then the grid-wide checks; failures never abort other cells."""
    tasks = [(cell, s) for cell in grid.cells for s in cell.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_check_task, tasks))
    else:
        results = [_check_task(t) for t in tasks]
    records: list[CheckRecord] = []
    rows: list[dict] = []
    for recs, rws in results:
        records.extend(recs)
        rows.extend(rws)
    records.extend(_group_rate_checks(grid.cells, rows))
    if grid.lemma_samples:
        by_lemma: dict[str, list[CheckRecord]] = {}
        for rec in lemma_checks(grid.lemma_samples, seed):
            by_lemma.setdefault(rec.name, []).append(rec)
        for name, recs in by_lemma.items():
            worst = max(recs, key=lambda r: r.lhs / r.rhs if r.rhs > 0 else r.lhs - r.rhs)
            violations = sum(not r.holds for r in recs)
            records.append(
                CheckRecord(f"lemma/{name}/violations={violations}/of={len(recs)}", worst.lhs, worst.rhs, violations == 0, worst.tolerance, seed)
            )
    if grid.generic_regret:
        records.extend(generic_regret_suite(grid.generic_regret, seed))
    return records, rows


def generic_regret_suite(n_sequences: int, seed: int = 0, K: int = 200) -> list[CheckRecord]:
    """Adversarial loss sequences with ``||d_t|| <= 1`` fed to the proximal update."""
    out = []
    for i in range(n_sequences):
        rng = stream(seed, "verify", 100 + i)
        A = int(rng.integers(2, 8))
        tau = float(rng.choice([0.0, 0.01, 0.1, 1.0]))
        c = float(rng.uniform(0.5, 5.0))
        schedule = ActorSchedule("theory_decay", c=c, tau=tau)
        kind = i % 3
        if kind == 0:
            d = rng.uniform(-1, 1, size=(K, A))
        elif kind == 1:
            # alternate which action is penalized to keep the learner chasing
            d = np.zeros((K, A))
            d[np.arange(K), (np.arange(K) // max(1, int(rng.integers(1, 10)))) % A] = 1.0
        else:
            d = np.sign(rng.uniform(-1, 1, size=(K, A)))
        res = generic_regret_experiment(d, tau, schedule)
        out.append(CheckRecord(f"generic_regret/seq={i}", res.measured, res.bound, res.holds, 1e-8, seed))
    return out


def write_rate_table(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["cell", "group", "seed", "K", "subopt_mixture"])
        writer.writeheader()
        writer.writerows(rows)
