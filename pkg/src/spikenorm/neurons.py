"""Leaky integrate-and-fire neuron dynamics and the surrogate spike gradient.

The discrete-time membrane recurrence is

    h_t = leak * v_{t-1} + c_t          (charge)
    s_t = 1 if h_t >= v_th else 0       (fire, threshold-inclusive)
    v_t = (1 - s_t) * h_t + s_t * v_reset   (reset)

with ``c_t`` the input current.  The current-based variant (CLIF) first
filters the raw input through a decaying synaptic current,
``c_t = current_decay * c_{t-1} + x_t``, then applies the same recurrence.

Spiking is non-differentiable, so backward passes use a rectangular
surrogate for ds/dh: constant ``1/(2w)`` inside a window of half-width
``w`` around the threshold and zero outside.  ``relaxed_spike`` is the
matching piecewise-linear primitive (its derivative is exactly that
window), which lets finite-difference checks validate the backward pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NeuronParams",
    "NeuronState",
    "lif_step",
    "clif_step",
    "surrogate_grad",
    "relaxed_spike",
    "simulate_layer",
]


@dataclass(frozen=True)
class NeuronParams:
    v_th: float = 1.0
    v_reset: float = 0.0
    leak: float = 0.75
    current_decay: float = 0.5
    surrogate_width: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.leak <= 1.0):
            raise ValueError(f"leak must lie in (0, 1], got {self.leak}")
        if not (0.0 <= self.current_decay < 1.0):
            raise ValueError(f"current_decay must lie in [0, 1), got {self.current_decay}")
        if self.v_th <= self.v_reset:
            raise ValueError(
                f"v_th must exceed v_reset, got v_th={self.v_th} v_reset={self.v_reset}"
            )
        if self.surrogate_width <= 0:
            raise ValueError(f"surrogate_width must be positive, got {self.surrogate_width}")


@dataclass
class NeuronState:
    """Membrane potential, synaptic current (CLIF), last spike vector."""

    v: np.ndarray
    c: np.ndarray
    s: np.ndarray

    @classmethod
    def zeros(cls, width: int) -> "NeuronState":
        return cls(
            v=np.zeros(width, dtype=np.float64),
            c=np.zeros(width, dtype=np.float64),
            s=np.zeros(width, dtype=np.float64),
        )


def _check_finite(x, name):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def lif_step(state: NeuronState, c_t, p: NeuronParams) -> tuple[np.ndarray, NeuronState]:
    """One membrane update driven by input current ``c_t``."""
    c_t = _check_finite(c_t, "input current")
    h = p.leak * state.v + c_t
    s = (h >= p.v_th).astype(np.float64)
    v = (1.0 - s) * h + s * p.v_reset
    return s, NeuronState(v=v, c=state.c, s=s)


def clif_step(state: NeuronState, x_t, p: NeuronParams) -> tuple[np.ndarray, NeuronState]:
    """Current-based variant: decaying synaptic current feeds the membrane."""
    x_t = _check_finite(x_t, "input")
    c = p.current_decay * state.c + x_t
    s, new = lif_step(NeuronState(v=state.v, c=c, s=state.s), c, p)
    new.c = c
    return s, new


def surrogate_grad(h, p: NeuronParams) -> np.ndarray:
    """Rectangular stand-in for ds/dh: 1/(2w) within w of threshold, else 0."""
    h = np.asarray(h, dtype=np.float64)
    w = p.surrogate_width
    return (np.abs(h - p.v_th) <= w) / (2.0 * w)


def relaxed_spike(h, p: NeuronParams) -> np.ndarray:
    """Piecewise-linear spike whose derivative is ``surrogate_grad``."""
    h = np.asarray(h, dtype=np.float64)
    w = p.surrogate_width
    return np.clip((h - p.v_th + w) / (2.0 * w), 0.0, 1.0)


def simulate_layer(
    currents: np.ndarray,
    p: NeuronParams,
    kind: str = "lif",
    relaxed: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Run a whole layer over time: ``currents`` is (timesteps, batch, width).

    Returns ``(spikes, membranes)`` of the same shape, where ``membranes``
    holds the pre-reset potential h_t needed by the surrogate backward.
    With ``relaxed=True`` the hard threshold is replaced by
    ``relaxed_spike`` (graded outputs in [0, 1]); the reset stays
    ``(1 - s) h + s v_reset`` so the relaxed network is the one the
    surrogate backward differentiates exactly.
    """
    if kind not in ("lif", "clif"):
        raise ValueError(f"kind must be 'lif' or 'clif', got {kind!r}")
    currents = np.asarray(currents, dtype=np.float64)
    t_steps, batch, width = currents.shape
    spikes = np.empty_like(currents)
    membranes = np.empty_like(currents)
    v = np.zeros((batch, width), dtype=np.float64)
    c = np.zeros((batch, width), dtype=np.float64)
    for t in range(t_steps):
        if kind == "clif":
            c = p.current_decay * c + currents[t]
            drive = c
        else:
            drive = currents[t]
        h = p.leak * v + drive
        if relaxed:
            s = relaxed_spike(h, p)
        else:
            s = (h >= p.v_th).astype(np.float64)
        v = (1.0 - s) * h + s * p.v_reset
        spikes[t] = s
        membranes[t] = h
    return spikes, membranes
