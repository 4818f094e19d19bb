"""Proportional prioritized replay with annealed importance-sampling correction.

Priorities are linear-scanned rather than kept in a sum tree; buffers here
hold at most a few thousand records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Experience:
    features: np.ndarray
    target: np.ndarray  # strategy over all actions, zero where illegal
    weight: float  # importance weight W of the trajectory
    td_error: float
    mask: np.ndarray
    iteration: int
    infoset: int = -1


class PrioritizedReplay:
    """Ring buffer sampled with probability p_i proportional to
    (|delta_i| + eps)^alpha. ``alpha = 0`` gives uniform replay."""

    def __init__(self, capacity: int = 10_000, alpha: float = 0.6, eps: float = 1e-3, beta: float = 0.0):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.eps = eps
        self.beta = beta
        self._items: list[Experience] = []
        self._priorities = np.zeros(capacity)
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def priority(self, td_error: float) -> float:
        return (abs(td_error) + self.eps) ** self.alpha

    def push(self, exp: Experience) -> None:
        pri = self.priority(exp.td_error)
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._next] = exp
        self._priorities[self._next] = pri
        self._next = (self._next + 1) % self.capacity

    @property
    def items(self) -> list[Experience]:
        """Stored records, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[:self._next]

    def probabilities(self) -> np.ndarray:
        pri = self._priorities[: len(self._items)]
        return pri / pri.sum()

    def sample_batch(self, batch_size: int, rng: np.random.Generator):
        """Draw with replacement; returns (experiences, weights, indices) with
        weights (N p_i)^-beta scaled so the largest in the batch is 1."""
        n = len(self._items)
        if n == 0:
            raise IndexError("cannot sample from an empty replay buffer")
        idx = rng.choice(n, size=batch_size, p=self.probabilities())
        w = self.correction_weights(idx)
        w = w / w.max()
        return [self._items[i] for i in idx], w, idx

    def correction_weights(self, idx) -> np.ndarray:
        """Unnormalised (N p_i)^-beta for the given positions."""
        n = len(self._items)
        return (n * self.probabilities()[np.asarray(idx)]) ** (-self.beta)

    def anneal_beta(self, t: int, total: int, beta0: float = 0.0) -> float:
        if not 0 <= t <= total:
            raise ValueError(f"t={t} outside [0, {total}]")
        self.beta = beta0 + (1.0 - beta0) * t / total
        return self.beta
