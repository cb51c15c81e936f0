# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_pykernels`` holds line-for-line Python twins."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


cdef double _fkl_value(double[:] theta, const double[:] p, double[:] work, Py_ssize_t n, double mass, double tau_t) nogil:
    # f(theta) = -sum p ln pi + tau_t sum pi ln pi, with pi = softmax(theta)
    cdef Py_ssize_t i
    cdef double mx = -INFINITY, z = 0.0, lz, lp, f = 0.0, neg_ent = 0.0
    for i in range(n):
        if theta[i] > mx:
            mx = theta[i]
    for i in range(n):
        work[i] = exp(theta[i] - mx)
        z += work[i]
    lz = mx + log(z)
    for i in range(n):
        lp = theta[i] - lz
        if p[i] > 0.0:
            f -= p[i] * lp
        neg_ent += (work[i] / z) * lp
    return f + tau_t * neg_ent


cdef double _fkl_grad(double[:] theta, const double[:] p, double[:] grad, double[:] scale, double[:] pi,
                      Py_ssize_t n, double mass, double tau_t) nogil:
    # logit gradient and a positive diagonal curvature estimate; returns the gradient's infinity norm
    cdef Py_ssize_t i
    cdef double mx = -INFINITY, z = 0.0, lz, lp, ent = 0.0, g, c, res = 0.0
    for i in range(n):
        if theta[i] > mx:
            mx = theta[i]
    for i in range(n):
        pi[i] = exp(theta[i] - mx)
        z += pi[i]
    lz = mx + log(z)
    for i in range(n):
        pi[i] = pi[i] / z
        ent -= pi[i] * (theta[i] - lz)
    for i in range(n):
        lp = theta[i] - lz
        g = (mass * pi[i] - p[i]) + tau_t * pi[i] * (lp + ent)
        c = mass + tau_t * (1.0 + lp + ent)
        if c < tau_t:
            c = tau_t
        grad[i] = g
        scale[i] = pi[i] * c
        if fabs(g) > res:
            res = fabs(g)
    return res


def fkl_rows(const double[:, :] p, double tau_t, double tol, long max_iter, const double[:, :] theta0):
    """Minimize ``-sum p ln pi - tau_t H(pi)`` over softmax logits, row by row.

    Descent direction is the logit gradient divided by a diagonal curvature
    estimate, with Armijo backtracking. Returns ``(pi, iterations, residual)``
    where the residual is the infinity norm of the logit gradient; rows that
    hit the cap keep their last iterate.
    """
    cdef Py_ssize_t S = p.shape[0], A = p.shape[1], s, i
    cdef long it
    cdef double mass, step, f0, f1, res, res1, gd, gd1
    out = np.empty((S, A))
    iters = np.zeros(S, dtype=np.int64)
    resid = np.zeros(S)
    cdef double[:, :] out_v = out
    cdef cnp.int64_t[:] iters_v = iters
    cdef double[:] resid_v = resid
    cdef double[:] theta = np.empty(A)
    cdef double[:] trial = np.empty(A)
    cdef double[:] grad = np.empty(A)
    cdef double[:] grad1 = np.empty(A)
    cdef double[:] scale = np.empty(A)
    cdef double[:] scale1 = np.empty(A)
    cdef double[:] pi = np.empty(A)
    cdef double[:] work = np.empty(A)
    with nogil:
        for s in range(S):
            mass = 0.0
            for i in range(A):
                theta[i] = theta0[s, i]
                mass += p[s, i]
            step = 1.0
            res = _fkl_grad(theta, p[s], grad, scale, pi, A, mass, tau_t)
            f0 = _fkl_value(theta, p[s], work, A, mass, tau_t)
            it = 0
            while res > tol and it < max_iter:
                gd = 0.0
                for i in range(A):
                    gd += grad[i] * grad[i] / scale[i]
                while True:
                    for i in range(A):
                        trial[i] = theta[i] - step * grad[i] / scale[i]
                    f1 = _fkl_value(trial, p[s], work, A, mass, tau_t)
                    res1 = _fkl_grad(trial, p[s], grad1, scale1, pi, A, mass, tau_t)
                    if step < 1e-12:
                        break
                    if fabs(f1 - f0) <= 1e-14 * (fabs(f0) + 1.0):
                        # the change is below roundoff: require a smaller gradient instead
                        gd1 = 0.0
                        for i in range(A):
                            gd1 += grad1[i] * grad1[i] / scale1[i]
                        if gd1 < gd:
                            break
                    elif f1 <= f0 - 0.5 * step * gd:
                        break
                    step *= 0.5
                for i in range(A):
                    theta[i] = trial[i]
                    grad[i] = grad1[i]
                    scale[i] = scale1[i]
                f0 = f1
                res = res1
                step = step * 2.0 if step < 1e6 else step
                it += 1
            _fkl_grad(theta, p[s], grad, scale, pi, A, mass, tau_t)
            for i in range(A):
                out_v[s, i] = pi[i]
            iters_v[s] = it
            resid_v[s] = res
    return out, iters, resid


cdef inline Py_ssize_t _search(const double[:] cdf, double u) nogil:
    # first index whose cumulative mass exceeds u
    cdef Py_ssize_t lo = 0, hi = cdf.shape[0] - 1, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo


def rollout(const double[:, :, :] trans_cdf, const double[:, :] policy_cdf, const double[:] start_cdf,
            const double[:, :] reward, long state, long clock, long episode_length,
            const double[:, :] uniforms):
    """Simulate ``len(uniforms)`` steps; column 0 picks the action, 1 the successor, 2 a reset state.

    Returns ``(states, actions, rewards, next_states, episode_end, state, clock)``.
    """
    cdef Py_ssize_t n = uniforms.shape[0], k
    states = np.empty(n, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    nexts = np.empty(n, dtype=np.int64)
    ends = np.zeros(n, dtype=np.bool_)
    cdef cnp.int64_t[:] st = states, ac = actions, nx = nexts
    cdef double[:] rw = rewards
    cdef cnp.npy_bool[:] en = ends
    cdef long a, s2
    with nogil:
        for k in range(n):
            a = _search(policy_cdf[state], uniforms[k, 0])
            s2 = _search(trans_cdf[state, a], uniforms[k, 1])
            st[k] = state
            ac[k] = a
            rw[k] = reward[state, a]
            nx[k] = s2
            clock += 1
            if episode_length > 0 and clock >= episode_length:
                en[k] = 1
                clock = 0
                state = _search(start_cdf, uniforms[k, 2])
            else:
                state = s2
    return states, actions, rewards, nexts, ends, state, clock


def critic_sgd(const double[:, :] q, const cnp.int64_t[:] s, const cnp.int64_t[:] a, const double[:] y, double lr, long steps):
    """Gradient steps on ``mean_i (q[s_i, a_i] - y_i)^2``; returns an updated copy of ``q``."""
    cdef Py_ssize_t B = y.shape[0], i
    cdef long k
    out = np.array(q, copy=True)
    grad = np.zeros_like(out)
    cdef double[:, :] qv = out
    cdef double[:, :] gv = grad
    cdef double scale = 2.0 / B
    with nogil:
        for k in range(steps):
            for i in range(B):
                gv[s[i], a[i]] = 0.0
            for i in range(B):
                gv[s[i], a[i]] += scale * (qv[s[i], a[i]] - y[i])
            for i in range(B):
                if gv[s[i], a[i]] != 0.0:
                    qv[s[i], a[i]] -= lr * gv[s[i], a[i]]
                    gv[s[i], a[i]] = 0.0
    return out
