"""Shared hierarchy primitives: goal projection, subgoal bookkeeping,
reward definitions, and the replay buffers both levels train from.

Subgoal scheme flag eta: 1 means subgoals are absolute goal-space
points, 0 means they are desired goal-space displacements that get
re-expressed after every step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class HierarchyParams:
    """Static description of the two-level decomposition."""
    c: int                      # steps between high-level decisions
    eta: int                    # 1 absolute subgoals, 0 relative
    goal_indices: tuple[int, ...]
    subgoal_low: np.ndarray
    subgoal_high: np.ndarray
    reward_scale_lo: float = 1.0
    reward_scale_hi: float = 0.1

    def __post_init__(self):
        if self.c < 1:
            raise ValueError("c must be >= 1")
        if self.eta not in (0, 1):
            raise ValueError("eta must be 0 or 1")
        self.subgoal_low = np.asarray(self.subgoal_low, dtype=np.float64)
        self.subgoal_high = np.asarray(self.subgoal_high, dtype=np.float64)
        if self.subgoal_low.shape != (len(self.goal_indices),):
            raise ValueError("subgoal box does not match goal dimension")


def project(s, goal_indices):
    """Goal-space projection phi: select the goal coordinates of a state."""
    s = np.asarray(s)
    return s[..., list(goal_indices)]


def subgoal_transition(sg_prev, s_prev, s_cur, eta, goal_indices):
    """sg_t = sg_{t-1} + (1 - eta) * (phi(s_{t-1}) - phi(s_t)).

    Keeps an absolute subgoal fixed; re-expresses a relative one in the
    new state's frame. Works on single vectors and on batches.
    """
    sg_prev = np.asarray(sg_prev, dtype=np.float64)
    if eta == 1:
        return sg_prev.copy()
    return sg_prev + (project(s_prev, goal_indices) - project(s_cur, goal_indices))


def intrinsic_reward(sg_next, s_next, eta, goal_indices, scale=1.0):
    """Low-level reward -||sg_{t+1} - eta * phi(s_{t+1})||_2 * scale."""
    sg_next = np.asarray(sg_next, dtype=np.float64)
    diff = sg_next - eta * project(s_next, goal_indices)
    return -np.linalg.norm(diff, axis=-1) * scale


def high_reward(rewards, scale=0.1):
    """High-level reward: scaled sum of the interval's env rewards."""
    return scale * float(np.sum(rewards))


@dataclass
class LowTransition:
    s: np.ndarray
    sg: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    sg_next: np.ndarray
    done: float


@dataclass
class HighTransition:
    """One high-level interval: states s_t..s_{t+c} (c+1 of them), the
    episode goal, the subgoal sequence actually pursued, the low-level
    actions taken, the summed scaled reward, and the terminal flag."""
    states: np.ndarray
    g: np.ndarray
    subgoals: np.ndarray
    actions: np.ndarray
    reward: float
    done: float


class ReplayBuffer:
    """Fixed-capacity ring over named array fields.

    push() overwrites the oldest entry once full; sample() draws
    uniformly with replacement from the seeded generator.
    """

    def __init__(self, capacity, fields, rng):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._data = {name: np.zeros((self.capacity, *shape), dtype=np.float64)
                      for name, shape in fields.items()}
        self._rng = rng
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, row):
        i = self._next
        for name, arr in self._data.items():
            arr[i] = row[name]
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, n):
        if self._size < n:
            raise ValueError(f"buffer holds {self._size} < {n} entries")
        idx = self._rng.integers(0, self._size, size=n)
        return {name: arr[idx] for name, arr in self._data.items()}

    def column(self, name):
        """View of the stored entries for one field (no copy)."""
        return self._data[name][:self._size]


def low_buffer(capacity, state_dim, goal_dim, action_dim, rng):
    return ReplayBuffer(capacity, {
        "s": (state_dim,), "sg": (goal_dim,), "a": (action_dim,), "r": (),
        "s_next": (state_dim,), "sg_next": (goal_dim,), "done": (),
    }, rng)


def high_buffer(capacity, c, state_dim, goal_dim, action_dim, rng):
    return ReplayBuffer(capacity, {
        "states": (c + 1, state_dim), "g": (goal_dim,), "subgoals": (c, goal_dim),
        "actions": (c, action_dim), "reward": (), "done": (),
    }, rng)
