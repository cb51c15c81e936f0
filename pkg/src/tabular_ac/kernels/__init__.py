"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; setting the environment
variable ``TABULAR_AC_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _pykernels


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("TABULAR_AC_PURE_PYTHON", "") not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()


def backends() -> dict[str, ModuleType]:
    """All importable backends by name, for tests and benchmarks."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels

        found["cython"] = _ckernels
    except ImportError:
        pass
    return found


def fkl_rows(p, tau_t, tol, max_iter, theta0):
    return _impl.fkl_rows(_f64(p), float(tau_t), float(tol), int(max_iter), _f64(theta0))


def rollout(trans_cdf, policy_cdf, start_cdf, reward, state, clock, episode_length, uniforms):
    return _impl.rollout(
        _f64(trans_cdf),
        _f64(policy_cdf),
        _f64(start_cdf),
        _f64(reward),
        int(state),
        int(clock),
        int(episode_length),
        _f64(uniforms),
    )


def critic_sgd(q, s, a, y, lr, steps):
    return _impl.critic_sgd(_f64(q), _i64(s), _i64(a), _f64(y), float(lr), int(steps))


def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def _i64(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64)


def cdf_rows(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to exactly 1 from the last positive entry on.

    Searching for the first entry exceeding ``u ~ U[0, 1)`` then never lands
    on a zero-probability index, even with rounding in the sums.
    """
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=-1)
    positive = probs > 0
    n = probs.shape[-1]
    last = n - 1 - np.argmax(positive[..., ::-1], axis=-1)
    cdf[np.arange(n) >= last[..., None]] = 1.0
    return np.ascontiguousarray(cdf)
