"""Fixed-capacity FIFO replay buffer with uniform sampling."""

from __future__ import annotations

import numpy as np

from .bellman import Transition, TransitionBatch
from .errors import EmptyBufferError


class ReplayBuffer:
    """Ring buffer of transitions; once full, each push overwrites the oldest entry."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self._s = np.zeros(capacity, dtype=np.int64)
        self._a = np.zeros(capacity, dtype=np.int64)
        self._r = np.zeros(capacity)
        self._s2 = np.zeros(capacity, dtype=np.int64)
        self.write_cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition) -> ReplayBuffer:
        s, a, r, s2 = transition
        i = self.write_cursor
        self._s[i], self._a[i], self._r[i], self._s2[i] = s, a, r, s2
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return self

    def extend(self, batch: TransitionBatch) -> ReplayBuffer:
        """Push a batch in order; equivalent to pushing each transition."""
        n = len(batch)
        if n == 0:
            return self
        if n > self.capacity:
            tail = slice(n - self.capacity, n)
            batch = TransitionBatch(
                batch.states[tail], batch.actions[tail], batch.rewards[tail], batch.next_states[tail]
            )
            self.write_cursor = (self.write_cursor + n - self.capacity) % self.capacity
            n = self.capacity
        idx = (self.write_cursor + np.arange(n)) % self.capacity
        self._s[idx] = batch.states
        self._a[idx] = batch.actions
        self._r[idx] = batch.rewards
        self._s2[idx] = batch.next_states
        self.write_cursor = int((self.write_cursor + n) % self.capacity)
        self.size = min(self.size + n, self.capacity)
        return self

    def oldest_first(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""
        start = self.write_cursor if self.size == self.capacity else 0
        idx = (start + np.arange(self.size)) % self.capacity
        return list(self._batch(idx))

    def _batch(self, idx: np.ndarray) -> TransitionBatch:
        return TransitionBatch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx])

    def sample(self, batch_size: int, rng: np.random.Generator) -> TransitionBatch:
        """Uniform draw with replacement."""
        if self.size == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        return self._batch(rng.integers(0, self.size, size=batch_size))


def buffer_push(buffer: ReplayBuffer, transition: Transition) -> ReplayBuffer:
    return buffer.push(transition)


def buffer_sample(buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator) -> list[Transition]:
    return list(buffer.sample(batch_size, rng))
