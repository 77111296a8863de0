"""Batch-normalization layer with a split between training and inference statistics.

Training forwards normalize with the mini-batch mean/variance and hand the
resulting ``BatchStats`` to the moving-statistics estimator; inference
forwards normalize with the moving estimate and never mutate state.  A
third, side-effect-free "collect" forward supports recalibration passes.
The layer also knows how to fold its inference transform into a preceding
affine map so deployment needs no normalization at all.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from spikenorm.stats import (
    BatchStats,
    EstimatorMode,
    MovingStats,
    step_estimator,
)

__all__ = ["NormParams", "BatchNorm", "fuse_affine"]


class NormParams:
    """Learnable scale/shift plus the numerical-stability constant."""

    def __init__(self, channels: int, eps: float = 1e-5):
        # eps = 0 is tolerated for exact algebraic checks; any normalization
        # of a zero-variance batch then divides by zero, so keep it positive
        # in real use.
        if eps < 0:
            raise ValueError(f"eps must be nonnegative, got {eps}")
        self.gamma = np.ones(channels, dtype=np.float64)
        self.beta = np.zeros(channels, dtype=np.float64)
        self.eps = float(eps)

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


class BatchNorm:
    """Per-channel batch normalization over rows of a (batch, channels) matrix.

    Spiking layers flatten their (timesteps, batch) axes into the row axis
    before calling this layer, so one statistics set is shared across time.

    Forward counters (``train_forwards`` etc.) exist so callers can assert
    statistic-routing and recalibration-overhead properties.
    """

    def __init__(
        self,
        channels: int,
        mode: EstimatorMode | None = None,
        eps: float = 1e-5,
    ):
        self.params = NormParams(channels, eps=eps)
        self.mode = mode if mode is not None else EstimatorMode(kind="ema")
        self.moving = MovingStats.zeros(channels)
        self.last_batch_stats: BatchStats | None = None
        self.estimator_steps = 0
        self.train_forwards = 0
        self.infer_forwards = 0
        self.collect_forwards = 0
        self._ctx = None

    @property
    def channels(self) -> int:
        return self.params.channels

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.channels:
            raise ValueError(
                f"expected input of shape (batch, {self.channels}), got {x.shape}"
            )
        return x

    def forward_train(self, x) -> np.ndarray:
        """Normalize with this batch's own statistics; caches the backward context."""
        x = self._check_input(x)
        if x.shape[0] < 2:
            raise ValueError(f"training forward needs a batch of >= 2 rows, got {x.shape[0]}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.params.eps)
        x_hat = (x - mean) * inv_std
        self._ctx = (x_hat, inv_std, x.shape[0])
        self.last_batch_stats = BatchStats(mean=mean, var=var, n=x.shape[0])
        self.train_forwards += 1
        return self.params.gamma * x_hat + self.params.beta

    def forward_infer(self, x) -> np.ndarray:
        """Normalize with the moving statistics; mutates nothing."""
        x = self._check_input(x)
        if not self.moving.initialized:
            raise RuntimeError("moving statistics are uninitialized; train first")
        self.infer_forwards += 1
        inv_std = 1.0 / np.sqrt(self.moving.var_hat + self.params.eps)
        return self.params.gamma * (x - self.moving.mu_hat) * inv_std + self.params.beta

    def forward_collect(self, x) -> tuple[np.ndarray, BatchStats]:
        """Batch-statistics forward for calibration: no caches, no estimator hand-off."""
        x = self._check_input(x)
        if x.shape[0] < 2:
            raise ValueError(f"collection forward needs a batch of >= 2 rows, got {x.shape[0]}")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        self.collect_forwards += 1
        y = self.params.gamma * (x - mean) / np.sqrt(var + self.params.eps) + self.params.beta
        return y, BatchStats(mean=mean, var=var, n=x.shape[0])

    def backward(self, grad_out) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Exact gradients of the training transform.

        The batch mean and variance are differentiated as functions of the
        input; the moving statistics never enter the gradient.
        Returns ``(grad_in, grad_gamma, grad_beta)``.
        """
        if self._ctx is None:
            raise RuntimeError("backward called without a cached training forward")
        x_hat, inv_std, n = self._ctx
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != x_hat.shape:
            raise ValueError(f"grad shape {grad_out.shape} != forward shape {x_hat.shape}")
        grad_gamma = (grad_out * x_hat).sum(axis=0)
        grad_beta = grad_out.sum(axis=0)
        g = grad_out * self.params.gamma
        grad_in = (inv_std / n) * (
            n * g - g.sum(axis=0) - x_hat * (g * x_hat).sum(axis=0)
        )
        return grad_in, grad_gamma, grad_beta

    def step_estimator(self, calib_sampler: Callable[[], Sequence[BatchStats]] | None = None):
        """Feed the last training batch's statistics to the moving estimator.

        The layer keeps its own step counter, so the recalibration schedule
        counts estimator updates applied to this layer.
        """
        if self.last_batch_stats is None:
            raise RuntimeError("no batch statistics pending; run forward_train first")
        step_estimator(
            self.moving, self.last_batch_stats, self.mode, self.estimator_steps, calib_sampler
        )
        self.estimator_steps += 1
        self.last_batch_stats = None

    def recalibration_due(self) -> bool:
        """True when the next ``step_estimator`` call will recalibrate."""
        return (
            self.mode.recalibrated
            and self.estimator_steps > 0
            and self.estimator_steps % self.mode.t_cal == 0
        )


def fuse_affine(layer: BatchNorm, w, b) -> tuple[np.ndarray, np.ndarray]:
    """Fold inference-time normalization into a preceding affine map.

    For ``y = BN_infer(W x + b)`` returns ``(w', b')`` with
    ``w' = diag(gamma / sqrt(var_hat + eps)) W`` and
    ``b' = gamma * (b - mu_hat) / sqrt(var_hat + eps) + beta`` so that
    ``w' x + b' == y`` for every ``x``.  Deployment then runs plain affine
    layers with no normalization cost.
    """
    if not layer.moving.initialized:
        raise RuntimeError("cannot fuse: moving statistics are uninitialized")
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = layer.channels
    if w.ndim != 2 or w.shape[0] != c or b.shape != (c,):
        raise ValueError(
            f"affine map must have shape ({c}, in) / ({c},), got {w.shape} / {b.shape}"
        )
    scale = layer.params.gamma / np.sqrt(layer.moving.var_hat + layer.params.eps)
    w_fused = scale[:, None] * w
    b_fused = scale * (b - layer.moving.mu_hat) + layer.params.beta
    return w_fused, b_fused
