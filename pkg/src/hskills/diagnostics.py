"""Exploration accounting: estimate the number of unique states visited by
hashing observations with random sign projections and counting distinct
codes."""

from __future__ import annotations

import numpy as np


class SimHasher:
    """Locality-sensitive sign hash over a fixed random projection.

    Each state maps to a k-bit code (one bit per projection row); the set of
    codes seen so far estimates the number of distinct states visited.
    """

    def __init__(self, state_dim: int, k: int = 32, seed: int = 0):
        if state_dim < 1 or k < 1:
            raise ValueError("state_dim and k must be positive")
        self.state_dim = state_dim
        self.k = k
        self.projection = np.random.default_rng(seed).standard_normal((k, state_dim))
        self.seen: set[int] = set()

    def hash_state(self, state: np.ndarray) -> int:
        """k-bit code: bit j set iff the j-th projection is non-negative."""
        state = np.asarray(state, dtype=float)
        if state.shape != (self.state_dim,):
            raise ValueError(
                f"state shape {state.shape} does not match ({self.state_dim},)"
            )
        bits = (self.projection @ state) >= 0.0
        code = 0
        for b in bits:
            code = (code << 1) | int(b)
        return code

    def record(self, state: np.ndarray) -> int:
        """Insert the state's code; returns the running unique count."""
        self.seen.add(self.hash_state(state))
        return len(self.seen)

    @property
    def unique_count(self) -> int:
        return len(self.seen)

    def merge(self, other: "SimHasher") -> None:
        """Union another hasher's codes (must share the same projection)."""
        if other.k != self.k or other.state_dim != self.state_dim \
                or not np.array_equal(other.projection, self.projection):
            raise ValueError("cannot merge hashers with different projections")
        self.seen |= other.seen
