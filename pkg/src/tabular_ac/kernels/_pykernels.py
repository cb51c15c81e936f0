"""Pure-Python versions of the compiled kernels, used when the extension is unavailable."""

from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np


def _log_softmax(theta: list[float]) -> list[float]:
    mx = max(theta)
    lz = mx + math.log(sum(math.exp(t - mx) for t in theta))
    return [t - lz for t in theta]


def _fkl_value(theta: list[float], p: list[float], tau_t: float) -> float:
    logp = _log_softmax(theta)
    f = -sum(pi * lp for pi, lp in zip(p, logp) if pi > 0.0)
    neg_ent = sum(math.exp(lp) * lp for lp in logp)
    return f + tau_t * neg_ent


def _fkl_grad(theta: list[float], p: list[float], mass: float, tau_t: float):
    logp = _log_softmax(theta)
    pi = [math.exp(lp) for lp in logp]
    ent = -sum(x * lp for x, lp in zip(pi, logp))
    grad = [(mass * x - pb) + tau_t * x * (lp + ent) for x, pb, lp in zip(pi, p, logp)]
    scale = [x * max(mass + tau_t * (1.0 + lp + ent), tau_t) for x, lp in zip(pi, logp)]
    return grad, scale, pi, max(abs(g) for g in grad)


def fkl_rows(p, tau_t: float, tol: float, max_iter: int, theta0):
    p = np.asarray(p, dtype=np.float64)
    theta0 = np.asarray(theta0, dtype=np.float64)
    S, A = p.shape
    out = np.empty((S, A))
    iters = np.zeros(S, dtype=np.int64)
    resid = np.zeros(S)
    for s in range(S):
        row = p[s].tolist()
        theta = theta0[s].tolist()
        mass = sum(row)
        step = 1.0
        grad, scale, pi, res = _fkl_grad(theta, row, mass, tau_t)
        f0 = _fkl_value(theta, row, tau_t)
        it = 0
        while res > tol and it < max_iter:
            gd = sum(g * g / c for g, c in zip(grad, scale))
            while True:
                trial = [t - step * g / c for t, g, c in zip(theta, grad, scale)]
                f1 = _fkl_value(trial, row, tau_t)
                grad1, scale1, pi, res1 = _fkl_grad(trial, row, mass, tau_t)
                if step < 1e-12:
                    break
                if abs(f1 - f0) <= 1e-14 * (abs(f0) + 1.0):
                    # the change is below roundoff: require a smaller gradient instead
                    if sum(g * g / c for g, c in zip(grad1, scale1)) < gd:
                        break
                elif f1 <= f0 - 0.5 * step * gd:
                    break
                step *= 0.5
            theta, f0, grad, scale, res = trial, f1, grad1, scale1, res1
            step = step * 2.0 if step < 1e6 else step
            it += 1
        out[s] = pi
        iters[s] = it
        resid[s] = res
    return out, iters, resid


def rollout(trans_cdf, policy_cdf, start_cdf, reward, state: int, clock: int, episode_length: int, uniforms):
    trans_cdf = np.asarray(trans_cdf)
    policy_rows = np.asarray(policy_cdf).tolist()
    start = np.asarray(start_cdf).tolist()
    reward = np.asarray(reward)
    uniforms = np.asarray(uniforms)
    n = uniforms.shape[0]
    last_a = len(policy_rows[0]) - 1
    last_s = len(start) - 1
    states = np.empty(n, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    nexts = np.empty(n, dtype=np.int64)
    ends = np.zeros(n, dtype=bool)
    for k in range(n):
        u0, u1, u2 = uniforms[k]
        a = min(bisect_right(policy_rows[state], u0), last_a)
        s2 = min(bisect_right(trans_cdf[state, a], u1), last_s)
        states[k] = state
        actions[k] = a
        rewards[k] = reward[state, a]
        nexts[k] = s2
        clock += 1
        if episode_length > 0 and clock >= episode_length:
            ends[k] = True
            clock = 0
            state = min(bisect_right(start, u2), last_s)
        else:
            state = int(s2)
    return states, actions, rewards, nexts, ends, int(state), int(clock)


def critic_sgd(q, s, a, y, lr: float, steps: int):
    out = np.array(q, dtype=np.float64, copy=True)
    s = np.asarray(s, dtype=np.int64)
    a = np.asarray(a, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    scale = 2.0 / len(y)
    for _ in range(steps):
        grad = np.zeros_like(out)
        np.add.at(grad, (s, a), scale * (out[s, a] - y))
        out -= lr * grad
    return out
