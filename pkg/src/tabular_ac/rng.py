"""Counter-based random streams keyed by ``(seed, component, call_index)``.

Every consumer of randomness asks for its own stream, so adding draws in one
component never shifts the numbers seen by another.
"""

from __future__ import annotations

import zlib

import numpy as np

# Stable integer ids for the components that draw random numbers.
COMPONENTS = {
    "env": 1,
    "rollout": 2,
    "buffer": 3,
    "critic": 4,
    "actor": 5,
    "garnet": 6,
    "verify": 7,
    "reset": 8,
}


def component_id(name: str) -> int:
    if name in COMPONENTS:
        return COMPONENTS[name]
    return zlib.crc32(name.encode()) | (1 << 32)


def stream(seed: int, component: str | int, call_index: int = 0) -> np.random.Generator:
    """Return an independent Philox generator for one ``(seed, component, call)`` key."""
    if seed < 0 or call_index < 0:
        raise ValueError("seed and call_index must be nonnegative")
    comp = component if isinstance(component, int) else component_id(component)
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(comp), int(call_index)))
    return np.random.Generator(np.random.Philox(seq))


class StreamFactory:
    """Hands out successive streams for one component, counting calls."""

    def __init__(self, seed: int, component: str | int):
        self.seed = int(seed)
        self.component = component
        self.calls = 0

    def next(self) -> np.random.Generator:
        gen = stream(self.seed, self.component, self.calls)
        self.calls += 1
        return gen
