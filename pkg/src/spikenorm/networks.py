"""Spiking actor network with hand-written backprop-through-time, and a dense critic.

Actor layout: three affine maps, each followed by batch normalization; the
first two normalized currents drive hidden spiking layers, the third feeds
a non-spiking accumulator whose time-averaged potential is squashed by
tanh into the action range.  The observation is injected as a constant
current at every timestep, so the whole forward runs layer-major: each
affine+norm stage processes all timesteps at once (normalization pools its
statistics over batch x timesteps) and only the membrane recurrence loops
over time.

The backward pass reverses that structure.  Within a spiking layer the
time loop runs backward with the rectangular surrogate standing in for
ds/dh, and the reset path v_t = (1 - s_t) h_t + s_t v_reset is
differentiated through both branches.  With ``relaxed=True`` the forward
replaces the hard threshold by the matching piecewise-linear spike, making
the backward pass the exact gradient of the (relaxed) forward -- that is
the configuration finite-difference checks validate.

The critic is a plain two-hidden-layer ReLU network on (state, action)
with no normalization; its backward also returns the gradient with
respect to the inputs, which the deterministic policy gradient needs.
"""

from __future__ import annotations

import numpy as np

from spikenorm.neurons import NeuronParams, relaxed_spike, surrogate_grad
from spikenorm.norm import BatchNorm, fuse_affine
from spikenorm.stats import BatchStats, EstimatorMode

__all__ = ["ActorNet", "CriticNet"]


def _affine_init(rng, fan_in, fan_out, limit=None):
    lim = np.sqrt(6.0 / fan_in) if limit is None else limit
    w = rng.uniform(-lim, lim, size=(fan_out, fan_in))
    b = np.zeros(fan_out, dtype=np.float64)
    return w, b


class ActorNet:
    """Maps observations to bounded actions through two spiking hidden layers."""

    def __init__(
        self,
        obs_dim: int,
        action_dim: int,
        action_scale: float,
        hidden: int = 256,
        timesteps: int = 5,
        neuron_kind: str = "clif",
        neuron: NeuronParams | None = None,
        mode: EstimatorMode | None = None,
        rng: np.random.Generator | None = None,
        relaxed: bool = False,
    ):
        if neuron_kind not in ("lif", "clif"):
            raise ValueError(f"neuron_kind must be 'lif' or 'clif', got {neuron_kind!r}")
        if timesteps < 1:
            raise ValueError("timesteps must be >= 1")
        rng = rng if rng is not None else np.random.default_rng()
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.action_scale = float(action_scale)
        self.hidden = hidden
        self.timesteps = timesteps
        self.neuron_kind = neuron_kind
        self.neuron = neuron if neuron is not None else NeuronParams()
        self.relaxed = relaxed
        mode = mode if mode is not None else EstimatorMode(kind="ca_re")
        self.w1, self.b1 = _affine_init(rng, obs_dim, hidden)
        self.w2, self.b2 = _affine_init(rng, hidden, hidden)
        self.w3, self.b3 = _affine_init(rng, hidden, action_dim)
        self.bn1 = BatchNorm(hidden, mode=mode)
        self.bn2 = BatchNorm(hidden, mode=mode)
        self.bn3 = BatchNorm(action_dim, mode=mode)
        self._ctx = None

    # ------------------------------------------------------------------
    # parameter plumbing
    # ------------------------------------------------------------------

    @property
    def bn_layers(self) -> list[BatchNorm]:
        return [self.bn1, self.bn2, self.bn3]

    def trainable_params(self) -> list[np.ndarray]:
        out = [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
        for bn in self.bn_layers:
            out += [bn.params.gamma, bn.params.beta]
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {
            "w1": self.w1, "b1": self.b1,
            "w2": self.w2, "b2": self.b2,
            "w3": self.w3, "b3": self.b3,
        }
        for i, bn in enumerate(self.bn_layers, start=1):
            pre = f"bn{i}"
            out[f"{pre}/gamma"] = bn.params.gamma
            out[f"{pre}/beta"] = bn.params.beta
            out[f"{pre}/channels"] = np.array([bn.channels], dtype=np.int64)
            out[f"{pre}/mu_hat"] = bn.moving.mu_hat
            out[f"{pre}/var_hat"] = bn.moving.var_hat
            out[f"{pre}/d_mu"] = bn.moving.d_mu
            out[f"{pre}/d_sigma"] = bn.moving.d_sigma
            out[f"{pre}/initialized"] = np.array([bn.moving.initialized], dtype=np.int64)
            out[f"{pre}/steps"] = np.array([bn.estimator_steps], dtype=np.int64)
        return out

    def load_state_dict(self, d: dict[str, np.ndarray], prefix: str = ""):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            np.copyto(getattr(self, name), d[prefix + name])
        for i, bn in enumerate(self.bn_layers, start=1):
            pre = f"{prefix}bn{i}"
            if int(d[f"{pre}/channels"][0]) != bn.channels:
                raise ValueError(f"checkpoint channel count mismatch at {pre}")
            np.copyto(bn.params.gamma, d[f"{pre}/gamma"])
            np.copyto(bn.params.beta, d[f"{pre}/beta"])
            bn.moving.mu_hat = d[f"{pre}/mu_hat"].copy()
            bn.moving.var_hat = d[f"{pre}/var_hat"].copy()
            bn.moving.d_mu = d[f"{pre}/d_mu"].copy()
            bn.moving.d_sigma = d[f"{pre}/d_sigma"].copy()
            bn.moving.initialized = bool(d[f"{pre}/initialized"][0])
            bn.estimator_steps = int(d[f"{pre}/steps"][0])

    def clone(self) -> "ActorNet":
        twin = ActorNet(
            self.obs_dim, self.action_dim, self.action_scale,
            hidden=self.hidden, timesteps=self.timesteps,
            neuron_kind=self.neuron_kind, neuron=self.neuron,
            mode=self.bn1.mode, relaxed=self.relaxed,
            rng=np.random.default_rng(0),
        )
        twin.load_state_dict(self.state_dict())
        return twin

    # ------------------------------------------------------------------
    # forward / backward
    # ------------------------------------------------------------------

    def _spike(self, h):
        if self.relaxed:
            return relaxed_spike(h, self.neuron)
        return (h >= self.neuron.v_th).astype(np.float64)

    def _dynamics(self, currents):
        """Membrane recurrence over (T, B, H) currents; caches h_t per step."""
        p = self.neuron
        t_steps, batch, width = currents.shape
        spikes = np.empty_like(currents)
        membranes = np.empty_like(currents)
        v = np.zeros((batch, width), dtype=np.float64)
        c = np.zeros((batch, width), dtype=np.float64)
        for t in range(t_steps):
            if self.neuron_kind == "clif":
                c = p.current_decay * c + currents[t]
                drive = c
            else:
                drive = currents[t]
            h = p.leak * v + drive
            s = self._spike(h)
            v = (1.0 - s) * h + s * p.v_reset
            spikes[t] = s
            membranes[t] = h
        return spikes, membranes

    def _dynamics_backward(self, d_spikes, membranes, spikes):
        """Reverse-time gradient of the recurrence wrt the injected currents."""
        p = self.neuron
        t_steps = d_spikes.shape[0]
        d_currents = np.empty_like(d_spikes)
        dv_next = np.zeros_like(d_spikes[0])
        dc_next = np.zeros_like(d_spikes[0])
        for t in range(t_steps - 1, -1, -1):
            sg = surrogate_grad(membranes[t], p)
            # v_t = (1 - s(h)) h + s(h) v_reset: both branches carry gradient
            dh = d_spikes[t] * sg + dv_next * (
                (1.0 - spikes[t]) + (p.v_reset - membranes[t]) * sg
            )
            if self.neuron_kind == "clif":
                dc = dh + p.current_decay * dc_next
                d_currents[t] = dc
                dc_next = dc
            else:
                d_currents[t] = dh
            dv_next = p.leak * dh
        return d_currents

    def forward(self, obs, stats_source: str = "moving", cache: bool = False):
        """Run the network; ``stats_source`` picks the normalization statistics.

        ``"batch"``  training forward (batch statistics, backward context,
                     BatchStats handed to each norm layer),
        ``"moving"`` inference forward (moving statistics, no mutation),
        ``"collect"`` calibration forward: batch statistics, no caches; the
                     per-layer BatchStats come back as the second value.
        """
        if stats_source not in ("batch", "moving", "collect"):
            raise ValueError(f"unknown stats_source {stats_source!r}")
        obs = np.asarray(obs, dtype=np.float64)
        if obs.ndim != 2 or obs.shape[1] != self.obs_dim:
            raise ValueError(f"expected obs of shape (batch, {self.obs_dim}), got {obs.shape}")
        t_steps, batch = self.timesteps, obs.shape[0]
        collected: list[BatchStats] = []

        def norm(bn, z):
            flat = z.reshape(t_steps * batch, -1)
            if stats_source == "batch":
                out = bn.forward_train(flat)
            elif stats_source == "moving":
                out = bn.forward_infer(flat)
            else:
                out, bs = bn.forward_collect(flat)
                collected.append(bs)
            return out.reshape(t_steps, batch, -1)

        z1 = obs @ self.w1.T + self.b1
        u1 = norm(self.bn1, np.broadcast_to(z1, (t_steps, batch, self.hidden)))
        s1, h1 = self._dynamics(u1)
        u2 = norm(self.bn2, s1 @ self.w2.T + self.b2)
        s2, h2 = self._dynamics(u2)
        u3 = norm(self.bn3, s2 @ self.w3.T + self.b3)
        pooled = u3.sum(axis=0) / t_steps
        action = self.action_scale * np.tanh(pooled)
        if cache:
            if stats_source != "batch":
                raise ValueError("backward context requires stats_source='batch'")
            self._ctx = (obs, s1, h1, s2, h2, pooled)
        if stats_source == "collect":
            return action, collected
        return action

    def backward(self, d_action) -> list[np.ndarray]:
        """Gradients wrt ``trainable_params()`` order from d(loss)/d(action)."""
        if self._ctx is None:
            raise RuntimeError("backward called without a cached training forward")
        obs, s1, h1, s2, h2, pooled = self._ctx
        t_steps, batch = self.timesteps, obs.shape[0]
        d_action = np.asarray(d_action, dtype=np.float64)
        d_pooled = d_action * self.action_scale * (1.0 - np.tanh(pooled) ** 2) / t_steps
        d_u3 = np.broadcast_to(d_pooled, (t_steps, batch, self.action_dim))
        d_z3, d_g3, d_be3 = self.bn3.backward(d_u3.reshape(t_steps * batch, -1))
        d_z3 = d_z3.reshape(t_steps, batch, -1)
        d_w3 = d_z3.reshape(-1, self.action_dim).T @ s2.reshape(-1, self.hidden)
        d_b3 = d_z3.sum(axis=(0, 1))
        d_s2 = d_z3 @ self.w3
        d_u2 = self._dynamics_backward(d_s2, h2, s2)
        d_z2, d_g2, d_be2 = self.bn2.backward(d_u2.reshape(t_steps * batch, -1))
        d_z2 = d_z2.reshape(t_steps, batch, -1)
        d_w2 = d_z2.reshape(-1, self.hidden).T @ s1.reshape(-1, self.hidden)
        d_b2 = d_z2.sum(axis=(0, 1))
        d_s1 = d_z2 @ self.w2
        d_u1 = self._dynamics_backward(d_s1, h1, s1)
        d_z1, d_g1, d_be1 = self.bn1.backward(d_u1.reshape(t_steps * batch, -1))
        d_z1_total = d_z1.reshape(t_steps, batch, -1).sum(axis=0)
        d_w1 = d_z1_total.T @ obs
        d_b1 = d_z1_total.sum(axis=0)
        return [d_w1, d_b1, d_w2, d_b2, d_w3, d_b3, d_g1, d_be1, d_g2, d_be2, d_g3, d_be3]

    def fused_affines(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Affine maps with inference normalization folded in, layer by layer."""
        return [
            fuse_affine(self.bn1, self.w1, self.b1),
            fuse_affine(self.bn2, self.w2, self.b2),
            fuse_affine(self.bn3, self.w3, self.b3),
        ]

    def forward_fused(self, obs):
        """Inference forward through the fused affines: no normalization at all."""
        obs = np.asarray(obs, dtype=np.float64)
        (w1, b1), (w2, b2), (w3, b3) = self.fused_affines()
        t_steps, batch = self.timesteps, obs.shape[0]
        z1 = obs @ w1.T + b1
        u1 = np.broadcast_to(z1, (t_steps, batch, self.hidden)).copy()
        s1, _ = self._dynamics(u1)
        s2, _ = self._dynamics(s1 @ w2.T + b2)
        u3 = s2 @ w3.T + b3
        return self.action_scale * np.tanh(u3.sum(axis=0) / t_steps)


class CriticNet:
    """Q(state, action): two ReLU hidden layers, scalar head, no normalization."""

    def __init__(self, obs_dim, action_dim, hidden=256, rng=None):
        rng = rng if rng is not None else np.random.default_rng()
        self.obs_dim, self.action_dim = obs_dim, action_dim
        in_dim = obs_dim + action_dim
        self.w1, self.b1 = _affine_init(rng, in_dim, hidden)
        self.w2, self.b2 = _affine_init(rng, hidden, hidden)
        # small final layer keeps initial Q estimates near zero
        self.w3, self.b3 = _affine_init(rng, hidden, 1, limit=3e-3)
        self._ctx = None

    def trainable_params(self):
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    def state_dict(self):
        return {
            "w1": self.w1, "b1": self.b1,
            "w2": self.w2, "b2": self.b2,
            "w3": self.w3, "b3": self.b3,
        }

    def load_state_dict(self, d, prefix=""):
        for name in ("w1", "b1", "w2", "b2", "w3", "b3"):
            np.copyto(getattr(self, name), d[prefix + name])

    def clone(self):
        twin = CriticNet(self.obs_dim, self.action_dim, hidden=self.w2.shape[0],
                         rng=np.random.default_rng(0))
        twin.load_state_dict(self.state_dict())
        return twin

    def forward(self, state, action, cache: bool = False):
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        if state.shape[1] != self.obs_dim or action.shape[1] != self.action_dim:
            raise ValueError(
                f"dimension mismatch: state {state.shape}, action {action.shape}"
            )
        x = np.concatenate([state, action], axis=1)
        z1 = x @ self.w1.T + self.b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.w2.T + self.b2
        a2 = np.maximum(z2, 0.0)
        q = (a2 @ self.w3.T + self.b3)[:, 0]
        if cache:
            self._ctx = (x, z1, a1, z2, a2)
        return q

    def backward(self, d_q):
        """Gradients from d(loss)/dQ: returns (param grads, grad wrt inputs).

        The input gradient is split as (grad_state, grad_action).
        """
        if self._ctx is None:
            raise RuntimeError("backward called without a cached forward")
        x, z1, a1, z2, a2 = self._ctx
        d_q = np.asarray(d_q, dtype=np.float64)[:, None]
        d_w3 = d_q.T @ a2
        d_b3 = d_q.sum(axis=0)
        d_a2 = d_q @ self.w3
        d_z2 = d_a2 * (z2 > 0)
        d_w2 = d_z2.T @ a1
        d_b2 = d_z2.sum(axis=0)
        d_a1 = d_z2 @ self.w2
        d_z1 = d_a1 * (z1 > 0)
        d_w1 = d_z1.T @ x
        d_b1 = d_z1.sum(axis=0)
        d_x = d_z1 @ self.w1
        grads = [d_w1, d_b1, d_w2, d_b2, d_w3, d_b3]
        return grads, (d_x[:, : self.obs_dim], d_x[:, self.obs_dim:])
