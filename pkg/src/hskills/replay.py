"""Experience storage: a FIFO circular buffer for flat skill transitions and
for fixed-interval high-level segment blocks.

Segment blocks store the full reward list and the per-offset states once;
the step index ``i`` is drawn uniformly at minibatch time, which is
equivalent in expectation to materializing every (i, suffix) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Transition", "Segment", "CircularBuffer", "sample_minibatch", "sample_segments"]


@dataclass
class Transition:
    """One low-level step: conditioning (bag-of-words + goal delta), action,
    reward and post-step conditioning for bootstrapping."""

    s_p: np.ndarray
    fs_bow: np.ndarray
    delta_goal: np.ndarray
    action: np.ndarray
    reward: float
    s_p_next: np.ndarray
    fs_bow_next: np.ndarray
    delta_goal_next: np.ndarray
    done: float

    def validate(self):
        for name in ("s_p", "fs_bow", "delta_goal", "action", "s_p_next",
                     "fs_bow_next", "delta_goal_next"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite transition field {name!r}")
        if not np.isfinite(self.reward):
            raise ValueError("non-finite reward")


@dataclass
class SegmentBlock:
    """One high-level action interval: states at every offset 0..L, the L
    per-step rewards, and whether the episode terminated inside the block."""

    states: np.ndarray      # (L + 1, state_dim)
    fs_index: int
    goal: np.ndarray        # normalized goal, length |F|
    rewards: np.ndarray     # (L,)
    terminal: bool

    def validate(self):
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.rewards))):
            raise ValueError("non-finite segment data")
        if len(self.rewards) != len(self.states) - 1 or len(self.rewards) == 0:
            raise ValueError("segment length mismatch")


@dataclass
class Segment:
    """A sampled view of a block at step index ``i``: the query state, the
    (L - i)-step reward suffix and the bootstrap state."""

    s_t: np.ndarray
    fs_index: int
    goal: np.ndarray
    step_index: int
    rewards: np.ndarray
    s_end: np.ndarray
    terminal: bool


class CircularBuffer:
    """Fixed-capacity FIFO store; appending past capacity evicts the oldest."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._entries: list = []
        self._cursor = 0

    def __len__(self):
        return len(self._entries)

    def append(self, entry) -> None:
        if hasattr(entry, "validate"):
            entry.validate()
        if len(self._entries) < self.capacity:
            self._entries.append(entry)
        else:
            self._entries[self._cursor] = entry
        self._cursor = (self._cursor + 1) % self.capacity

    def __iter__(self):
        # oldest-first iteration
        if len(self._entries) < self.capacity:
            return iter(self._entries)
        return iter(self._entries[self._cursor:] + self._entries[:self._cursor])

    def __getitem__(self, i: int):
        return self._entries[i]


def sample_minibatch(buffer: CircularBuffer, n: int, rng: np.random.Generator) -> list:
    """Uniform sampling with replacement."""
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty buffer")
    idx = rng.integers(0, len(buffer), size=n)
    return [buffer[i] for i in idx]


def sample_segments(
    buffer: CircularBuffer, n: int, c: int, rng: np.random.Generator
) -> list[Segment]:
    """Sample blocks and draw the step index i ~ U[0, c) for each; for
    truncated blocks i is drawn over the valid offsets only."""
    if len(buffer) == 0:
        raise ValueError("cannot sample from an empty buffer")
    idx = rng.integers(0, len(buffer), size=n)
    out = []
    for bi in idx:
        block: SegmentBlock = buffer[bi]
        length = len(block.rewards)
        i = int(rng.integers(0, min(c, length)))
        out.append(
            Segment(
                s_t=block.states[i],
                fs_index=block.fs_index,
                goal=block.goal,
                step_index=i,
                rewards=block.rewards[i:],
                s_end=block.states[-1],
                terminal=block.terminal,
            )
        )
    return out
