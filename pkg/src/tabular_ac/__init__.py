"""Tabular off-policy actor-critic with entropy-regularized critics and closed-form actor updates."""

from __future__ import annotations

from .bellman import CriticConfig, INFINITE, Transition, TransitionBatch, m_step_evaluate, sampled_critic_update
from .config import RunConfig, load_run_config, parse_run_config
from .diagnostics import CheckRecord, RunTrace, rate_fit, reduction_check
from .envs import chain_mdp, garnet, gridworld, make_env
from .harness import run, run_exact, run_sampled, verify_theory
from .mdp import Mdp, exact_soft_values, optimal_soft_policy, uniform_policy
from .objectives import EntropyTuner, ObjectiveSpec, inner_loop_optimize
from .policy_update import (
    ActorSchedule,
    dsac_actor_exact,
    fkl_project,
    npg_intermediate,
    rkl_project,
    soft_npg_step,
    soft_spma_step,
    spma_intermediate,
)
from .replay import ReplayBuffer

__version__ = "0.1.0"

__all__ = [
    "ActorSchedule",
    "CheckRecord",
    "CriticConfig",
    "EntropyTuner",
    "INFINITE",
    "Mdp",
    "ObjectiveSpec",
    "ReplayBuffer",
    "RunConfig",
    "RunTrace",
    "Transition",
    "TransitionBatch",
    "chain_mdp",
    "dsac_actor_exact",
    "exact_soft_values",
    "fkl_project",
    "garnet",
    "gridworld",
    "inner_loop_optimize",
    "load_run_config",
    "m_step_evaluate",
    "make_env",
    "npg_intermediate",
    "optimal_soft_policy",
    "parse_run_config",
    "rate_fit",
    "reduction_check",
    "rkl_project",
    "run",
    "run_exact",
    "run_sampled",
    "sampled_critic_update",
    "soft_npg_step",
    "soft_spma_step",
    "spma_intermediate",
    "uniform_policy",
    "verify_theory",
]
