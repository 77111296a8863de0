"""Fixed-capacity ring buffer of transitions with uniform sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Transition", "ReplayBuffer"]


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool  # true only on genuine termination, never on time-limit truncation


class ReplayBuffer:
    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.actions = np.zeros((capacity, action_dim), dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.next_states = np.zeros((capacity, obs_dim), dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=np.float64)
        self.ptr = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, t: Transition):
        i = self.ptr
        self.states[i] = t.state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.next_states[i] = t.next_state
        self.dones[i] = float(t.done)
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, n: int):
        """Uniform with replacement: (states, actions, rewards, next_states, dones)."""
        if self.size < n:
            raise ValueError(f"buffer holds {self.size} transitions, requested {n}")
        idx = rng.integers(0, self.size, size=n)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )

    def sample_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.size < n:
            raise ValueError(f"buffer holds {self.size} transitions, requested {n}")
        return self.states[rng.integers(0, self.size, size=n)]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {
            "states": self.states,
            "actions": self.actions,
            "rewards": self.rewards,
            "next_states": self.next_states,
            "dones": self.dones,
            "ptr": np.array([self.ptr], dtype=np.int64),
            "size": np.array([self.size], dtype=np.int64),
        }

    def load_state_dict(self, d, prefix: str = ""):
        np.copyto(self.states, d[prefix + "states"])
        np.copyto(self.actions, d[prefix + "actions"])
        np.copyto(self.rewards, d[prefix + "rewards"])
        np.copyto(self.next_states, d[prefix + "next_states"])
        np.copyto(self.dones, d[prefix + "dones"])
        self.ptr = int(d[prefix + "ptr"][0])
        self.size = int(d[prefix + "size"][0])
