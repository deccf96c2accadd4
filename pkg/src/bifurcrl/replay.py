"""Bounded FIFO replay buffer with uniform minibatch sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float  # penalized reward
    next_state: np.ndarray
    terminal: bool


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray


class ReplayBuffer:
    """Ring buffer over preallocated arrays; evicts oldest when full."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        if capacity <= 0:
            raise ConfigError("replay capacity must be positive")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self._states = np.zeros((capacity, obs_dim))
        self._actions = np.zeros((capacity, act_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, obs_dim))
        self._terminals = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def push(self, tr: Transition):
        s = np.asarray(tr.state, dtype=np.float64).reshape(-1)
        a = np.asarray(tr.action, dtype=np.float64).reshape(-1)
        ns = np.asarray(tr.next_state, dtype=np.float64).reshape(-1)
        if s.size != self.obs_dim or ns.size != self.obs_dim:
            raise ConfigError(
                f"state width {s.size}/{ns.size} != buffer obs_dim {self.obs_dim}")
        if a.size != self.act_dim:
            raise ConfigError(
                f"action width {a.size} != buffer act_dim {self.act_dim}")
        if not np.isfinite(tr.reward):
            raise ConfigError("non-finite reward rejected")
        i = self._next
        self._states[i] = s
        self._actions[i] = a
        self._rewards[i] = tr.reward
        self._next_states[i] = ns
        self._terminals[i] = bool(tr.terminal)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def retained(self) -> list:
        """Current contents in insertion order (oldest first)."""
        if self._size < self.capacity:
            order = np.arange(self._size)
        else:
            order = (np.arange(self.capacity) + self._next) % self.capacity
        return [Transition(self._states[i].copy(), self._actions[i].copy(),
                           float(self._rewards[i]), self._next_states[i].copy(),
                           bool(self._terminals[i])) for i in order]

    def sample_batch(self, n: int, rng: np.random.Generator) -> Batch | None:
        """n uniform-with-replacement draws, or None when empty."""
        if self._size == 0:
            return None
        idx = rng.integers(0, self._size, size=n)
        return Batch(self._states[idx].copy(), self._actions[idx].copy(),
                     self._rewards[idx].copy(), self._next_states[idx].copy(),
                     self._terminals[idx].copy())
