from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabular_ac.bellman import (
    INFINITE,
    CriticConfig,
    Transition,
    TransitionBatch,
    batch_targets,
    clamp,
    lookahead_target,
    m_step_evaluate,
    polyak_update,
    sampled_critic_update,
    soft_bellman_q,
    soft_state_values,
)
from tabular_ac.bounds import delta_tz
from tabular_ac.envs import garnet
from tabular_ac.mdp import entropies, exact_soft_values, h_tau, uniform_policy

from conftest import random_policy


class TestOperator:
    def test_fixed_point_is_soft_q(self, small_garnet, rng):
        pi = random_policy(rng, 6, 3)
        _, q = exact_soft_values(small_garnet, pi, 0.3)
        np.testing.assert_allclose(soft_bellman_q(small_garnet, pi, 0.3, q), q, atol=1e-12)

    def test_state_values(self):
        pi = np.array([[0.5, 0.5]])
        q = np.array([[1.0, 3.0]])
        np.testing.assert_allclose(soft_state_values(pi, q, 2.0), [2.0 + 2 * math.log(2)])

    def test_contraction(self, small_garnet, rng):
        pi = random_policy(rng, 6, 3)
        q1, q2 = rng.normal(size=(2, 6, 3))
        d_in = np.max(np.abs(q1 - q2))
        d_out = np.max(np.abs(soft_bellman_q(small_garnet, pi, 0.5, q1) - soft_bellman_q(small_garnet, pi, 0.5, q2)))
        assert d_out <= 0.9 * d_in + 1e-12


class TestMStepEvaluate:
    def test_infinite_is_exact(self, small_garnet, rng):
        pi = random_policy(rng, 6, 3)
        cfg = CriticConfig(zeta=0.2, m_steps=INFINITE, h_tau_bound=h_tau(0.2, 3, 0.9))
        np.testing.assert_allclose(
            m_step_evaluate(small_garnet, pi, cfg, np.zeros((6, 3))), exact_soft_values(small_garnet, pi, 0.2)[1]
        )

    def test_m_applications(self, small_garnet, rng):
        pi = random_policy(rng, 6, 3)
        q0 = rng.uniform(0, 1, size=(6, 3))
        cfg = CriticConfig(zeta=0.1, m_steps=3, clamp_enabled=False)
        expected = q0
        for _ in range(3):
            expected = soft_bellman_q(small_garnet, pi, 0.1, expected)
        np.testing.assert_allclose(m_step_evaluate(small_garnet, pi, cfg, q0), expected, atol=1e-14)

    def test_clamp_placements_differ_at_boundary(self, small_garnet):
        pi = uniform_policy(6, 3)
        q0 = np.full((6, 3), 50.0)
        out = CriticConfig(m_steps=2, h_tau_bound=10.0, clamp_placement="output")
        tgt = CriticConfig(m_steps=2, h_tau_bound=10.0, clamp_placement="target")
        a = m_step_evaluate(small_garnet, pi, out, q0)
        b = m_step_evaluate(small_garnet, pi, tgt, q0)
        assert np.all(a <= 10.0) and np.all(b <= 10.0)
        assert not np.allclose(a, b)

    def test_estimate_error_contracts(self, small_garnet, rng):
        pi = random_policy(rng, 6, 3)
        _, q_true = exact_soft_values(small_garnet, pi, 0.0)
        q0 = rng.uniform(0, 10, size=(6, 3))
        for m in (1, 5):
            q = m_step_evaluate(small_garnet, pi, CriticConfig(m_steps=m, h_tau_bound=10.0), q0)
            assert np.max(np.abs(q - q_true)) <= 0.9**m * np.max(np.abs(q0 - q_true)) + 1e-12

    def test_rejects_nonfinite(self, small_garnet):
        q0 = np.full((6, 3), np.nan)
        with pytest.raises(ValueError):
            m_step_evaluate(small_garnet, uniform_policy(6, 3), CriticConfig(), q0)

    @pytest.mark.parametrize("m", [0, 1.5, -1])
    def test_bad_m(self, m):
        with pytest.raises(ValueError):
            CriticConfig(m_steps=m)


class TestSampledCritic:
    def test_lookahead_target(self):
        pi = np.array([[1.0, 0.0], [0.5, 0.5]])
        q = np.array([[0.0, 0.0], [1.0, 3.0]])
        y = lookahead_target(Transition(0, 1, 0.5, 1), pi, q, 1.0, False, 10.0, 0.9)
        assert y == pytest.approx(0.5 + 0.9 * (2.0 + math.log(2)))
        assert lookahead_target(Transition(0, 1, 0.5, 1), pi, q, 1.0, True, 1.0, 0.9) == 1.0

    def test_batch_targets_agree_with_scalar(self, rng):
        pi = random_policy(rng, 4, 3)
        q = rng.uniform(0, 2, size=(4, 3))
        items = [Transition(int(rng.integers(4)), int(rng.integers(3)), float(rng.random()), int(rng.integers(4))) for _ in range(10)]
        cfg = CriticConfig(zeta=0.3, clamp_enabled=False)
        y = batch_targets(TransitionBatch.from_transitions(items), pi, q, cfg, 0.9)
        expected = [lookahead_target(t, pi, q, 0.3, False, 1.0, 0.9) for t in items]
        np.testing.assert_allclose(y, expected, atol=1e-12)

    def test_sample_targets_are_unbiased(self, rng):
        pi = np.array([[0.2, 0.3, 0.5]])
        q = np.array([[1.0, 2.0, 4.0]])
        batch = TransitionBatch.from_transitions([Transition(0, 0, 0.0, 0)] * 200_000)
        cfg = CriticConfig(zeta=0.5, clamp_enabled=False, target_mode="sample")
        y = batch_targets(batch, pi, q, cfg, 1.0, rng)
        expected = float(soft_state_values(pi, q, 0.5)[0])
        assert y.mean() == pytest.approx(expected, abs=0.02)

    def test_sample_mode_never_picks_zero_probability(self, rng):
        pi = np.array([[0.0, 1.0, 0.0]])
        q = np.array([[100.0, 1.0, 100.0]])
        batch = TransitionBatch.from_transitions([Transition(0, 0, 0.0, 0)] * 1000)
        y = batch_targets(batch, pi, q, CriticConfig(zeta=0.1, clamp_enabled=False, target_mode="sample"), 1.0, rng)
        np.testing.assert_array_equal(y, 1.0)

    def test_single_step_moves_toward_target(self):
        pi = np.array([[1.0, 0.0]])
        q = np.zeros((1, 2))
        batch = [Transition(0, 1, 1.0, 0)]
        cfg = CriticConfig(critic_lr=0.25, clamp_enabled=False)
        new = sampled_critic_update(batch, pi, q, cfg, q, 0.0)
        # gradient of (q - 1)^2 at 0 is -2, so q moves by 0.25 * 2
        np.testing.assert_allclose(new, [[0.0, 0.5]])

    def test_fixed_targets_converge(self, rng):
        pi = random_policy(rng, 3, 2)
        q_target = rng.uniform(0, 1, size=(3, 2))
        items = [Transition(s, a, 0.3, (s + 1) % 3) for s in range(3) for a in range(2)]
        cfg = CriticConfig(zeta=0.0, critic_lr=0.5, critic_steps=500, clamp_enabled=False)
        q = sampled_critic_update(items, pi, q_target, cfg, np.zeros((3, 2)), 0.9)
        y = batch_targets(TransitionBatch.from_transitions(items), pi, q_target, cfg, 0.9)
        np.testing.assert_allclose(q[[t.state for t in items], [t.action for t in items]], y, atol=1e-10)

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            sampled_critic_update([], uniform_policy(1, 2), np.zeros((1, 2)), CriticConfig(), np.zeros((1, 2)), 0.9)

    def test_output_clamp(self):
        pi = np.array([[1.0, 0.0]])
        cfg = CriticConfig(critic_lr=0.5, h_tau_bound=0.2)
        new = sampled_critic_update([Transition(0, 0, 1.0, 0)], pi, np.zeros((1, 2)), cfg, np.zeros((1, 2)), 0.0)
        assert new[0, 0] == pytest.approx(0.2)


class TestPolyak:
    def test_coefficients(self):
        a, b = np.zeros(3), np.ones(3)
        np.testing.assert_allclose(polyak_update(a, b, 1.0), b)
        np.testing.assert_allclose(polyak_update(a, b, 0.25), 0.25)

    @pytest.mark.parametrize("coef", [0.0, 1.5])
    def test_bad_coefficient(self, coef):
        with pytest.raises(ValueError):
            polyak_update(np.zeros(2), np.zeros(2), coef)


def test_clamp():
    np.testing.assert_array_equal(clamp(np.array([-1.0, 0.5, 3.0]), 2.0), [0.0, 0.5, 2.0])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), tau=st.floats(0, 2), zeta=st.floats(0, 2), m=st.integers(1, 6))
def test_bellman_difference_property(seed, tau, zeta, m):
    mdp = garnet(4, 3, 2, 0.8, seed=seed)
    rng = np.random.default_rng(seed)
    pi = random_policy(rng, 4, 3)
    q = rng.normal(size=(4, 3))
    q_tau, q_zeta = q, q
    for _ in range(m):
        q_tau = soft_bellman_q(mdp, pi, tau, q_tau)
        q_zeta = soft_bellman_q(mdp, pi, zeta, q_zeta)
    assert np.max(np.abs(q_tau - q_zeta)) <= delta_tz(tau, zeta, 3, 0.8) + 1e-9
