"""Pendulum swing-up: a self-contained continuous-control benchmark.

A torque-limited pendulum must be swung to the upright position and held
there.  Angle 0 is upright; the dynamics are

    thdot' = thdot + (3 g / (2 l) sin(th) + 3 / (m l^2) u) * dt
    th'    = th + thdot' * dt          (semi-implicit Euler)

with gravity pulling the pole away from upright.  The per-step reward is
``-(wrap(th)^2 + 0.1 thdot^2 + 0.001 u^2)`` where ``wrap`` maps angles to
(-pi, pi], so 0 is the best achievable reward and a hanging pole costs
about -pi^2 per step.  Episodes truncate after ``max_steps`` steps; the
task has no terminal states, and truncation is reported separately from
termination so value bootstrapping stays correct.
"""

from __future__ import annotations

import numpy as np

__all__ = ["PendulumEnv", "wrap_angle"]


def wrap_angle(theta: float) -> float:
    """Map an angle to (-pi, pi]."""
    return ((float(theta) + np.pi) % (2.0 * np.pi)) - np.pi


class PendulumEnv:
    obs_dim = 3
    action_dim = 1

    def __init__(self, seed: int | None = None, max_torque: float = 2.0,
                 max_steps: int = 200):
        self.rng = np.random.default_rng(seed)
        self.max_torque = float(max_torque)
        self.max_speed = 8.0
        self.dt = 0.05
        self.g = 10.0
        self.m = 1.0
        self.l = 1.0
        self.max_steps = int(max_steps)
        self.theta = 0.0
        self.theta_dot = 0.0
        self.steps = 0

    @property
    def action_scale(self) -> float:
        return self.max_torque

    def reset(self, state: tuple[float, float] | None = None) -> np.ndarray:
        """Start from a random (or given) angle/velocity; returns the observation."""
        if state is None:
            self.theta = float(self.rng.uniform(-np.pi, np.pi))
            self.theta_dot = float(self.rng.uniform(-1.0, 1.0))
        else:
            self.theta, self.theta_dot = float(state[0]), float(state[1])
        self.steps = 0
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array(
            [np.cos(self.theta), np.sin(self.theta), self.theta_dot], dtype=np.float64
        )

    def step(self, action) -> tuple[np.ndarray, float, bool, bool]:
        """Advance one step; returns (obs, reward, terminated, truncated)."""
        u = float(np.asarray(action).reshape(-1)[0])
        if not np.isfinite(u):
            raise ValueError("action must be finite")
        u = float(np.clip(u, -self.max_torque, self.max_torque))
        cost = wrap_angle(self.theta) ** 2 + 0.1 * self.theta_dot**2 + 0.001 * u**2
        acc = 3.0 * self.g / (2.0 * self.l) * np.sin(self.theta) + 3.0 / (
            self.m * self.l**2
        ) * u
        self.theta_dot = float(np.clip(self.theta_dot + acc * self.dt, -self.max_speed,
                                       self.max_speed))
        self.theta = self.theta + self.theta_dot * self.dt
        self.steps += 1
        truncated = self.steps >= self.max_steps
        return self._obs(), -cost, False, truncated

    def energy(self) -> float:
        """Mechanical energy with the upright position as potential reference."""
        kinetic = 0.5 * (self.m * self.l**2 / 3.0) * self.theta_dot**2
        potential = self.m * self.g * (self.l / 2.0) * (np.cos(self.theta) - 1.0)
        return float(kinetic + potential)
