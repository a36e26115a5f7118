"""Transition records and a fixed-capacity ring replay buffer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray
    terminal: bool = False


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.r.shape[0]

    @staticmethod
    def concat(*batches: "Batch") -> "Batch":
        batches = [b for b in batches if len(b)]
        return Batch(*(np.concatenate(parts) for parts in zip(*batches)))


class ReplayBuffer:
    """Ring buffer of transitions with uniform sampling over its contents."""

    def __init__(self, obs_dim: int, act_dim: int, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.obs_dim, self.act_dim, self.capacity = obs_dim, act_dim, int(capacity)
        self.s = np.zeros((self.capacity, obs_dim))
        self.a = np.zeros((self.capacity, act_dim))
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def add(self, s, a, r, s2, terminal=False):
        i = self.inserted % self.capacity
        self.s[i], self.a[i], self.r[i], self.s2[i] = s, a, r, s2
        self.done[i] = float(terminal)
        self.inserted += 1

    def add_transition(self, tr: Transition):
        self.add(tr.s, tr.a, tr.r, tr.s2, tr.terminal)

    def add_batch(self, s, a, r, s2, done=None):
        n = len(r)
        if done is None:
            done = np.zeros(n)
        if n >= self.capacity:
            s, a, r, s2, done = (v[-self.capacity:] for v in (s, a, r, s2, done))
            self.inserted += n - self.capacity
            n = self.capacity
        idx = (self.inserted + np.arange(n)) % self.capacity
        self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx] = s, a, r, s2, done
        self.inserted += n

    def clear(self):
        self.inserted = 0

    def contents(self) -> Batch:
        n = len(self)
        return Batch(self.s[:n], self.a[:n], self.r[:n], self.s2[:n], self.done[:n])

    def take(self, idx) -> Batch:
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        return self.take(rng.integers(0, len(self), size=n))

    def copy(self) -> "ReplayBuffer":
        other = ReplayBuffer(self.obs_dim, self.act_dim, self.capacity)
        n = len(self)
        for name in ("s", "a", "r", "s2", "done"):
            getattr(other, name)[:n] = getattr(self, name)[:n]
        other.inserted = self.inserted
        return other
