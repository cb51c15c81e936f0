from __future__ import annotations

import math

import numpy as np
import pytest

from tabular_ac.config import parse_run_config
from tabular_ac.diagnostics import reduction_check
from tabular_ac.envs import garnet
from tabular_ac.errors import ConfigError, IterationError
from tabular_ac.harness import (
    Grid,
    build_env,
    parse_grid,
    run_exact,
    run_sampled,
    trace_rows,
    verify_theory,
    write_trace_csv,
)
from tabular_ac.mdp import exact_soft_values, uniform_policy
from tabular_ac.policy_update import dsac_actor_exact
from tabular_ac.replay import ReplayBuffer
from tabular_ac.bellman import TransitionBatch

GARNET = {"name": "garnet", "num_states": 6, "num_actions": 3, "branching": 2, "gamma": 0.6, "seed": 2}


def exact_cfg(**algorithm):
    alg = {"family": "npg_rkl", "tau": 0.1, "zeta": 0.1, "K": 30, **algorithm}
    return parse_run_config(
        {
            "run_id": "t",
            "env": GARNET,
            "algorithm": alg,
            "schedule": {"mode": "theory_decay", "c": "floor"},
            "critic": {"m_steps": "infinite"},
        }
    )


def sampled_cfg(**overrides):
    doc = {
        "run_id": "s",
        "seed": 4,
        "env": GARNET,
        "algorithm": {"family": "npg_rkl", "mode": "sampled", "tau": 0.1, "zeta": 0.1, "K": 15, "n": 3},
        "schedule": {"mode": "constant", "eta_const": 1.0},
        "critic": {"critic_lr": 0.5, "target_smoothing": 0.5, "updates_per_iteration": 2},
        "sampled": {"N": 40, "batch_size": 32, "episode_length": 20},
        "diagnostics": {"eval_every": 5, "record_tables": True},
    }
    for k, v in overrides.items():
        doc[k] = {**doc.get(k, {}), **v}
    return parse_run_config(doc)


class TestExactLoop:
    def test_zero_iterations(self):
        cfg = exact_cfg(K=0)
        trace = run_exact(cfg)
        mdp = build_env(cfg)
        assert trace.K == 0
        assert len(trace.policies) == 1
        np.testing.assert_array_equal(trace.policies[0], uniform_policy(6, 3))
        np.testing.assert_allclose(trace.v_soft[0], exact_soft_values(mdp, uniform_policy(6, 3), 0.1)[0])
        assert trace_rows(trace) == []

    def test_dsac_is_soft_policy_iteration(self):
        cfg = exact_cfg(family="dsac", K=8)
        mdp = build_env(cfg)
        trace = run_exact(cfg)
        for t in range(cfg.algorithm.K):
            q = exact_soft_values(mdp, trace.policies[t], 0.1)[1]
            np.testing.assert_allclose(trace.policies[t + 1], dsac_actor_exact(q, 0.1), atol=1e-12)

    def test_exact_critic_has_zero_error(self):
        trace = run_exact(exact_cfg())
        assert max(trace.eps) < 1e-10

    @pytest.mark.parametrize("family", ["npg_rkl", "spma_rkl", "npg_fkl", "spma_fkl", "dsac"])
    def test_traces_pass_reduction(self, family):
        cfg = parse_run_config(
            {
                "env": GARNET,
                "algorithm": {"family": family, "tau": 0.1, "zeta": 0.0, "K": 25},
                "schedule": {"mode": "theory_decay", "c": 20.0},
                "critic": {"m_steps": 2},
            }
        )
        trace = run_exact(cfg)
        for k in (1, 5, 25):
            lhs, rhs, holds = reduction_check(trace, trace.v_star, trace.gamma, k)
            assert holds, (family, k, lhs, rhs)

    def test_inner_loop_matches_closed_form(self):
        closed = run_exact(exact_cfg(K=10))
        inner = run_exact(exact_cfg(K=10, actor_solver="inner_loop", n=3000, inner_tol=1e-12))
        for a, b in zip(closed.policies, inner.policies):
            assert np.max(0.5 * np.abs(a - b).sum(axis=1)) < 1e-3

    def test_deterministic(self, tmp_path):
        write_trace_csv([run_exact(exact_cfg())], tmp_path / "a.csv")
        write_trace_csv([run_exact(exact_cfg())], tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_errors_carry_iteration(self):
        # a constant step far past the admissible range for the linear update
        cfg = parse_run_config(
            {
                "env": GARNET,
                "algorithm": {"family": "spma_rkl", "tau": 0.0, "zeta": 0.0, "K": 5},
                "schedule": {"mode": "constant", "eta_const": 1e6},
                "critic": {"m_steps": "infinite"},
            }
        )
        with pytest.raises(IterationError) as info:
            run_exact(cfg)
        assert info.value.iteration == 0

    def test_floor_needs_a_known_family(self):
        with pytest.raises(ConfigError, match="floor"):
            run_exact(exact_cfg(family="npg_fkl"))

    def test_mode_mismatch(self):
        with pytest.raises(ConfigError):
            run_sampled(exact_cfg())
        with pytest.raises(ConfigError):
            run_exact(sampled_cfg())


class TestSampledLoop:
    def test_deterministic(self, tmp_path):
        a, b = run_sampled(sampled_cfg()), run_sampled(sampled_cfg())
        write_trace_csv([a], tmp_path / "a.csv")
        write_trace_csv([b], tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        np.testing.assert_array_equal(a.policies[-1], b.policies[-1])

    def test_seed_changes_run(self):
        a = run_sampled(sampled_cfg())
        b = run_sampled(sampled_cfg().with_overrides(seed=5))
        assert not np.array_equal(a.policies[-1], b.policies[-1])

    def test_offline_with_prefilled_buffer(self):
        cfg = sampled_cfg(sampled={"N": 0})
        mdp = build_env(cfg)
        rng = np.random.default_rng(0)
        n = 500
        s = rng.integers(0, 6, n)
        a = rng.integers(0, 3, n)
        s2 = np.array([rng.choice(6, p=mdp.transition[i, j]) for i, j in zip(s, a)])
        buffer = ReplayBuffer(1000).extend(TransitionBatch(s, a, mdp.reward[s, a], s2))
        trace = run_sampled(cfg, mdp, buffer)
        assert trace.K == 15
        assert trace.env_steps[-1] == 0
        assert all(math.isnan(r) for r in trace.returns)
        assert np.isfinite(trace.subopt_mixture).all()

    def test_auto_tau_records_alpha(self):
        cfg = sampled_cfg(
            algorithm={"family": "dsac", "tau": "auto", "zeta": 0.0}, tuner={"init_alpha": 0.5, "lr": 0.05}
        )
        trace = run_sampled(cfg)
        assert trace.alpha[0] == pytest.approx(0.5)
        assert all(a > 0 for a in trace.alpha)
        assert rows_have_alpha(trace)

    def test_env_steps_and_returns(self):
        trace = run_sampled(sampled_cfg())
        assert trace.env_steps == [40 * (t + 1) for t in range(15)]
        assert any(np.isfinite(trace.returns))
        assert np.isfinite(trace.greedy_return[4]) and math.isnan(trace.greedy_return[3])


def rows_have_alpha(trace) -> bool:
    return all(row["alpha"] != "" for row in trace_rows(trace))


GRID_CELL = {
    "env": {"name": "garnet", "num_states": 5, "num_actions": 3, "branching": 2, "gamma": 0.5, "seed": 0},
    "algorithm": {"family": "npg_rkl", "tau": 0.1, "zeta": 0.1, "K": 40},
    "schedule": {"mode": "theory_decay", "c": "floor"},
    "critic": {"m_steps": "infinite"},
}


class TestVerifyTheory:
    def test_empty_grid(self):
        records, rows = verify_theory(Grid())
        assert records == [] and rows == []

    def test_passing_cell(self):
        grid = parse_grid(
            {"grid": {"ks": [10, 40], "checks": ["reduction", "suboptimality", "regret"]}, "cells": [GRID_CELL]}
        )
        records, rows = verify_theory(grid)
        assert len(records) == 5
        assert all(r.holds and r.status == "pass" for r in records)
        assert len(rows) == 2

    def test_below_floor_is_out_of_hypothesis(self):
        cell = {**GRID_CELL, "schedule": {"mode": "theory_decay", "c": 0.5}}
        grid = parse_grid({"grid": {"checks": ["suboptimality", "regret"]}, "cells": [cell]})
        records, _ = verify_theory(grid)
        assert {r.status for r in records} == {"out_of_hypothesis"}

    def test_failures_do_not_abort(self):
        bad = {**GRID_CELL, "algorithm": {"family": "spma_rkl", "tau": 0.0, "zeta": 0.0, "K": 5}}
        bad["schedule"] = {"mode": "constant", "eta_const": 1e6}
        grid = parse_grid({"cells": [bad, GRID_CELL]})
        records, _ = verify_theory(grid)
        assert [r.status for r in records] == ["fail", "pass"]
        assert "run_error" in records[0].name

    def test_parallel_matches_serial(self):
        grid = parse_grid({"grid": {"seeds": [0, 1, 2], "ks": [20]}, "cells": [GRID_CELL]})
        serial, _ = verify_theory(grid, jobs=1)
        parallel, _ = verify_theory(grid, jobs=2)
        assert [r.to_dict() for r in serial] == [r.to_dict() for r in parallel]

    def test_grid_rejects_sampled_and_unknown(self):
        with pytest.raises(ConfigError):
            parse_grid({"grid": {"kz": [1]}})
        with pytest.raises(ConfigError):
            parse_grid({"cells": [{**GRID_CELL, "checks": ["vibes"]}]})
        sampled = {**GRID_CELL, "algorithm": {"mode": "sampled", "tau": 0.1}, "sampled": {}}
        with pytest.raises(ConfigError):
            parse_grid({"cells": [sampled]})
