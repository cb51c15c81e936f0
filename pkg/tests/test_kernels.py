from __future__ import annotations

import numpy as np
import pytest

from tabular_ac import kernels
from tabular_ac.policy_update import _fkl_start

BACKENDS = kernels.backends()


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    return BACKENDS[request.param]


def test_compiled_backend_is_built():
    assert "cython" in BACKENDS
    assert kernels.BACKEND in BACKENDS


def test_cdf_rows_pins_tail():
    cdf = kernels.cdf_rows(np.array([[0.1, 0.2, 0.7, 0.0], [0.0, 1.0, 0.0, 0.0]]))
    np.testing.assert_array_equal(cdf[:, -1], 1.0)
    assert cdf[0, 2] == 1.0 and cdf[1, 1] == 1.0
    assert cdf[0, 0] == pytest.approx(0.1)


class TestFklRows:
    def test_stationary_point(self, backend, rng):
        p = rng.dirichlet(np.ones(5), size=6)
        p[0, 2] = 0.0
        p[0] /= p[0].sum()
        out, iters, resid = backend.fkl_rows(p, 0.3, 1e-11, 10_000, _fkl_start(p, 0.3))
        assert np.all(resid <= 1e-11)
        H = -(out * np.log(out)).sum(axis=1, keepdims=True)
        g = (out - p) + 0.3 * out * (np.log(out) + H)
        assert np.max(np.abs(g)) <= 1e-11

    def test_backends_agree(self, rng):
        if len(BACKENDS) < 2:
            pytest.skip("compiled backend unavailable")
        p = rng.dirichlet(np.full(4, 0.5), size=10)
        theta0 = _fkl_start(p, 0.05)
        a = BACKENDS["cython"].fkl_rows(p, 0.05, 1e-11, 10_000, theta0)[0]
        b = BACKENDS["python"].fkl_rows(p, 0.05, 1e-11, 10_000, theta0)[0]
        np.testing.assert_allclose(a, b, atol=1e-9)


def rollout_inputs(mdp, rng, n):
    policy = rng.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states)
    return (
        kernels.cdf_rows(mdp.transition),
        kernels.cdf_rows(policy),
        kernels.cdf_rows(mdp.initial_dist),
        np.ascontiguousarray(mdp.reward),
        0,
        0,
        7,
        rng.random((n, 3)),
    ), policy


class TestRollout:
    def test_trajectory_is_consistent(self, backend, small_garnet, rng):
        args, _ = rollout_inputs(small_garnet, rng, 200)
        s, a, r, s2, ends, state, clock = backend.rollout(*args)
        np.testing.assert_array_equal(r, small_garnet.reward[s, a])
        assert np.all(small_garnet.transition[s, a, s2] > 0)
        # without an episode end the next step starts where the last one went
        cont = ~ends[:-1]
        np.testing.assert_array_equal(s[1:][cont], s2[:-1][cont])
        assert ends.sum() == 200 // 7
        assert clock == 200 % 7

    def test_action_frequencies(self, backend, small_garnet, rng):
        args, policy = rollout_inputs(small_garnet, rng, 30_000)
        s, a, *_ = backend.rollout(*args)
        for state in range(2):
            mask = s == state
            freq = np.bincount(a[mask], minlength=3) / mask.sum()
            np.testing.assert_allclose(freq, policy[state], atol=0.03)

    def test_backends_agree(self, small_garnet, rng):
        if len(BACKENDS) < 2:
            pytest.skip("compiled backend unavailable")
        args, _ = rollout_inputs(small_garnet, rng, 500)
        out_c = BACKENDS["cython"].rollout(*args)
        out_p = BACKENDS["python"].rollout(*args)
        for x, y in zip(out_c, out_p):
            np.testing.assert_array_equal(x, y)


class TestCriticSgd:
    def test_matches_vectorized_gradient(self, backend, rng):
        q = rng.normal(size=(4, 3))
        s = rng.integers(0, 4, size=50)
        a = rng.integers(0, 3, size=50)
        y = rng.normal(size=50)
        expected = q.copy()
        for _ in range(3):
            g = np.zeros_like(q)
            np.add.at(g, (s, a), 2 * (expected[s, a] - y) / 50)
            expected -= 0.3 * g
        out = backend.critic_sgd(q, s.astype(np.int64), a.astype(np.int64), y, 0.3, 3)
        np.testing.assert_allclose(out, expected, atol=1e-13)
        assert not np.shares_memory(out, q)

    def test_read_only_inputs(self, backend):
        q = np.zeros((2, 2))
        q.setflags(write=False)
        s = np.array([0, 1], dtype=np.int64)
        out = backend.critic_sgd(q, s, s, np.ones(2), 0.5, 1)
        np.testing.assert_allclose(out, [[0.5, 0.0], [0.0, 0.5]])
