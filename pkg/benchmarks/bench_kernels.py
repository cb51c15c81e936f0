"""Compare the compiled kernels against the pure-Python fallback.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is timed on the
same inputs for every importable backend and the best of several repeats is
reported.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from tabular_ac.envs import gridworld
from tabular_ac.kernels import backends, cdf_rows


def kernel_cases(rng: np.random.Generator) -> dict:
    S, A = 50, 6
    p = rng.dirichlet(np.full(A, 0.3), size=S)
    mdp = gridworld(5, 5, (4, 4), gamma=0.9)
    pi = rng.dirichlet(np.ones(mdp.num_actions), size=mdp.num_states)
    uniforms = rng.random((20_000, 3))
    q = np.zeros((25, 4))
    s = rng.integers(0, 25, 256)
    a = rng.integers(0, 4, 256)
    y = rng.random(256)
    return {
        "fkl_rows (50x6)": lambda k: k.fkl_rows(p, 0.3, 1e-10, 10_000, np.log(p + 1e-3)),
        "rollout (20k steps)": lambda k: k.rollout(
            cdf_rows(mdp.transition),
            cdf_rows(pi),
            cdf_rows(mdp.initial_dist),
            np.ascontiguousarray(mdp.reward),
            0,
            0,
            50,
            uniforms,
        ),
        "critic_sgd (256 x 10)": lambda k: k.critic_sgd(q, s, a, y, 0.5, 10),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    impls = backends()
    cases = kernel_cases(np.random.default_rng(0))
    names = list(impls)
    print(f"{'kernel':<24}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases.items():
        times = {}
        for name, impl in impls.items():
            number = 1
            while timeit.timeit(lambda: fn(impl), number=number) < 0.05:
                number *= 2
            times[name] = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat)) / number
        row = f"{label:<24}" + "".join(f"{times[n] * 1e3:>10.3f}ms" for n in names)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
