"""Bounded replay memory with sliding-window and random dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

POLICIES = ("sliding_window", "random")


@dataclass
class Sample:
    """One stored stream item: feature vector, optional label, arrival step."""

    features: np.ndarray
    label: int | None
    arrival_step: int


class MemoryBuffer:
    """Ordered bounded store of samples.

    Items stay in arrival order; the two dropout mechanisms remove
    either the oldest items (sliding window) or a uniform random subset.
    The buffer may transiently exceed its capacity between a batch
    update and the dropout step of the same training step.
    """

    def __init__(self, capacity: int, policy: str = "sliding_window", drop_count: int = 10):
        if capacity < 1:
            raise InputError("capacity must be >= 1")
        if policy not in POLICIES:
            raise InputError(f"unknown dropout policy {policy!r}")
        self.capacity = capacity
        self.policy = policy
        self.drop_count = drop_count
        self.items: list[Sample] = []

    def __len__(self) -> int:
        return len(self.items)

    def update(self, batch: list[Sample]) -> None:
        """Append an incoming batch, preserving arrival order."""
        self.items.extend(batch)

    def is_full(self) -> bool:
        return len(self.items) >= self.capacity

    def dropout_sw(self, n: int) -> None:
        """Remove the n oldest items."""
        if n > len(self.items):
            raise InputError(f"cannot drop {n} of {len(self.items)} items")
        del self.items[:n]

    def dropout_random(self, n: int, rng: np.random.Generator) -> None:
        """Remove n items drawn uniformly without replacement; survivors keep order."""
        if n > len(self.items):
            raise InputError(f"cannot drop {n} of {len(self.items)} items")
        if n == 0:
            return
        doomed = set(rng.choice(len(self.items), size=n, replace=False).tolist())
        self.items = [s for i, s in enumerate(self.items) if i not in doomed]

    def drop(self, n: int, rng: np.random.Generator) -> None:
        """Apply the buffer's configured dropout mechanism."""
        if self.policy == "sliding_window":
            self.dropout_sw(n)
        else:
            self.dropout_random(n, rng)

    def clear(self) -> None:
        """Empty the buffer; capacity and policy are kept."""
        self.items = []

    def features_matrix(self) -> np.ndarray:
        """All stored feature vectors stacked as rows, in arrival order."""
        if not self.items:
            return np.empty((0, 0))
        return np.stack([s.features for s in self.items])

    def labels(self) -> list[int | None]:
        return [s.label for s in self.items]

    def arrival_steps(self) -> list[int]:
        return [s.arrival_step for s in self.items]
