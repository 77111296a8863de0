"""Streaming estimators of per-channel population mean and variance.

Batch-normalization layers need two kinds of statistics: the mini-batch
mean/variance used while training, and a moving estimate of the population
mean/variance used at inference time.  This module provides three ways to
maintain the moving estimate from a stream of mini-batch statistics:

* ``ema_update`` -- the conventional fixed-momentum exponential moving
  average.  A single momentum cannot both track drifting statistics and
  suppress mini-batch noise.
* ``ca_update`` -- a confidence-adaptive update.  Each step blends the
  previous estimate with the fresh batch statistic using a Kalman-style
  gain ``K = D / (D + B)`` where ``D`` is the tracked error variance of
  the previous estimate (smoothed squared innovations) and ``B`` is the
  sampling variance of the batch statistic (``var/N`` for the mean,
  ``2 var^2/(N-1)`` for the variance, from Gaussian sampling theory).
  Under rapid drift the innovations grow, pushing ``K`` toward 1; under
  stable statistics ``K`` falls back and noise is averaged out.
* ``recalibrate`` -- exact pooling of M equal-size calibration batches
  into population-form statistics, used periodically to wipe accumulated
  estimation error.

All state is held per channel; channels never interact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BatchStats",
    "MovingStats",
    "EstimatorMode",
    "adaptive_gains",
    "ema_update",
    "ca_update",
    "pool_batch_stats",
    "recalibrate",
    "step_estimator",
]

# Added to gain denominators so a degenerate all-equal batch (var == 0)
# cannot divide by zero.
GAIN_FLOOR = 1e-12

_MODES = ("ema", "ca", "ca_re", "ema_re")


def _as_channel_vector(x, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a per-channel vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass
class BatchStats:
    """Per-channel mean/variance of one mini-batch of ``n`` samples.

    ``var`` is the population form (normalized by ``n``, not ``n - 1``).
    ``n >= 2`` because the variance-confidence term ``2 var^2/(n-1)``
    needs at least two samples.
    """

    mean: np.ndarray
    var: np.ndarray
    n: int

    def __post_init__(self):
        self.mean = _as_channel_vector(self.mean, "mean")
        self.var = _as_channel_vector(self.var, "var")
        if self.mean.shape != self.var.shape:
            raise ValueError(
                f"mean/var channel mismatch: {self.mean.shape} vs {self.var.shape}"
            )
        if np.any(self.var < 0):
            raise ValueError("var must be nonnegative")
        self.n = int(self.n)
        if self.n < 2:
            raise ValueError(f"batch size must be >= 2, got {self.n}")

    @classmethod
    def from_samples(cls, x) -> "BatchStats":
        """Compute population statistics of a (samples, channels) array."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise ValueError(f"expected a 2-D samples array, got shape {x.shape}")
        return cls(mean=x.mean(axis=0), var=x.var(axis=0), n=x.shape[0])

    @property
    def channels(self) -> int:
        return self.mean.shape[0]


@dataclass
class MovingStats:
    """Moving estimate of population statistics plus its confidence state.

    ``d_mu`` and ``d_sigma`` track the error variance of ``mu_hat`` and
    ``var_hat`` (reciprocal confidence) via exponentially smoothed squared
    innovations.  Until ``initialized`` is set by the first update, no
    field should be read.
    """

    mu_hat: np.ndarray
    var_hat: np.ndarray
    d_mu: np.ndarray
    d_sigma: np.ndarray
    initialized: bool = False

    def __post_init__(self):
        self.mu_hat = np.asarray(self.mu_hat, dtype=np.float64)
        self.var_hat = np.asarray(self.var_hat, dtype=np.float64)
        self.d_mu = np.asarray(self.d_mu, dtype=np.float64)
        self.d_sigma = np.asarray(self.d_sigma, dtype=np.float64)
        shapes = {a.shape for a in (self.mu_hat, self.var_hat, self.d_mu, self.d_sigma)}
        if len(shapes) != 1:
            raise ValueError(f"all MovingStats vectors must share one shape, got {shapes}")
        if np.any(self.var_hat < 0) or np.any(self.d_mu < 0) or np.any(self.d_sigma < 0):
            raise ValueError("var_hat, d_mu and d_sigma must be nonnegative")

    @classmethod
    def zeros(cls, channels: int) -> "MovingStats":
        z = np.zeros(int(channels), dtype=np.float64)
        return cls(mu_hat=z.copy(), var_hat=z.copy(), d_mu=z.copy(), d_sigma=z.copy())

    @property
    def channels(self) -> int:
        return self.mu_hat.shape[0]

    def copy(self) -> "MovingStats":
        return MovingStats(
            mu_hat=self.mu_hat.copy(),
            var_hat=self.var_hat.copy(),
            d_mu=self.d_mu.copy(),
            d_sigma=self.d_sigma.copy(),
            initialized=self.initialized,
        )


@dataclass(frozen=True)
class EstimatorMode:
    """Which moving-statistics estimator to run, with its parameters.

    ``kind``:
        ``"ema"``    fixed-momentum EMA baseline
        ``"ca"``     confidence-adaptive update only
        ``"ca_re"``  confidence-adaptive update + periodic recalibration
        ``"ema_re"`` EMA + periodic recalibration (ablation arm)

    ``alpha`` is the smoothing momentum, ``t_cal`` the recalibration
    interval in update steps, ``m_cal`` the number of calibration batches
    pooled per recalibration (keep ``m_cal`` well below ``t_cal`` so the
    extra forward passes stay a small fraction of training cost).
    """

    kind: str = "ca_re"
    alpha: float = 0.1
    t_cal: int = 1000
    m_cal: int = 20

    def __post_init__(self):
        if self.kind not in _MODES:
            raise ValueError(f"kind must be one of {_MODES}, got {self.kind!r}")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.t_cal < 1:
            raise ValueError(f"t_cal must be >= 1, got {self.t_cal}")
        if not (1 <= self.m_cal <= self.t_cal):
            raise ValueError(
                f"m_cal must lie in [1, t_cal], got m_cal={self.m_cal} t_cal={self.t_cal}"
            )

    @property
    def adaptive(self) -> bool:
        return self.kind in ("ca", "ca_re")

    @property
    def recalibrated(self) -> bool:
        return self.kind in ("ca_re", "ema_re")

    def without_recalibration(self) -> "EstimatorMode":
        base = "ca" if self.adaptive else "ema"
        return EstimatorMode(kind=base, alpha=self.alpha, t_cal=self.t_cal, m_cal=self.m_cal)


def _check_channels(ms: MovingStats, bs: BatchStats) -> None:
    if ms.channels != bs.channels:
        raise ValueError(
            f"channel mismatch: moving stats have {ms.channels}, batch has {bs.channels}"
        )


def ema_update(ms: MovingStats, bs: BatchStats, alpha: float) -> MovingStats:
    """Fixed-momentum update: ``est <- (1 - alpha) * est + alpha * batch``.

    An uninitialized ``ms`` bootstraps directly from the first batch.
    Mutates ``ms`` in place and returns it.
    """
    _check_channels(ms, bs)
    if not ms.initialized:
        ms.mu_hat = bs.mean.copy()
        ms.var_hat = bs.var.copy()
        ms.initialized = True
        return ms
    ms.mu_hat = (1.0 - alpha) * ms.mu_hat + alpha * bs.mean
    ms.var_hat = (1.0 - alpha) * ms.var_hat + alpha * bs.var
    return ms


def adaptive_gains(ms: MovingStats, bs: BatchStats) -> tuple[np.ndarray, np.ndarray]:
    """Gains ``(k_mu, k_sigma)`` for the current confidence state.

    Pure readout of ``K = D / (D + B)`` with the batch confidences from
    ``bs``; note that ``ca_update`` smooths the squared innovations into
    ``d_mu``/``d_sigma`` before forming its gains.
    """
    _check_channels(ms, bs)
    k_mu = ms.d_mu / (ms.d_mu + bs.var / bs.n + GAIN_FLOOR)
    k_sigma = ms.d_sigma / (ms.d_sigma + 2.0 * bs.var * bs.var / (bs.n - 1) + GAIN_FLOOR)
    return k_mu, k_sigma


def ca_update(ms: MovingStats, bs: BatchStats, alpha: float) -> MovingStats:
    """Confidence-adaptive update of the moving statistics.

    Per channel, in order:

    1. smooth the squared innovations into the prior-confidence state::

           d_mu    <- (1 - alpha) * d_mu    + alpha * (mean - mu_hat)^2
           d_sigma <- (1 - alpha) * d_sigma + alpha * (var - var_hat)^2

    2. form the adaptive gains from prior confidence vs batch confidence::

           k_mu    = d_mu    / (d_mu    + var / n)
           k_sigma = d_sigma / (d_sigma + 2 var^2 / (n - 1))

    3. blend: ``mu_hat <- (1 - k_mu) mu_hat + k_mu mean`` and likewise for
       ``var_hat``.

    An uninitialized ``ms`` bootstraps from the first batch: the estimate
    is the batch statistic and ``d_mu``/``d_sigma`` are seeded with the
    batch sampling variances, so the second update starts at gain 1/2.
    Mutates ``ms`` in place and returns it.
    """
    _check_channels(ms, bs)
    mean_conf = bs.var / bs.n
    var_conf = 2.0 * bs.var * bs.var / (bs.n - 1)
    if not ms.initialized:
        ms.mu_hat = bs.mean.copy()
        ms.var_hat = bs.var.copy()
        ms.d_mu = mean_conf.copy()
        ms.d_sigma = var_conf.copy()
        ms.initialized = True
        return ms
    ms.d_mu = (1.0 - alpha) * ms.d_mu + alpha * (bs.mean - ms.mu_hat) ** 2
    ms.d_sigma = (1.0 - alpha) * ms.d_sigma + alpha * (bs.var - ms.var_hat) ** 2
    k_mu = ms.d_mu / (ms.d_mu + mean_conf + GAIN_FLOOR)
    k_sigma = ms.d_sigma / (ms.d_sigma + var_conf + GAIN_FLOOR)
    ms.mu_hat = (1.0 - k_mu) * ms.mu_hat + k_mu * bs.mean
    ms.var_hat = np.maximum((1.0 - k_sigma) * ms.var_hat + k_sigma * bs.var, 0.0)
    return ms


def pool_batch_stats(batches: Sequence[BatchStats]) -> tuple[np.ndarray, np.ndarray]:
    """Pool M equal-size batches into exact population statistics.

    ``mu = mean_j(mu_j)`` and ``var = mean_j(var_j + mu_j^2) - mu^2``,
    which for equal batch sizes equals the population mean/variance of
    the concatenation of all M batches (law of total variance).
    """
    if len(batches) == 0:
        raise ValueError("need at least one calibration batch")
    channels = batches[0].channels
    n = batches[0].n
    for j, b in enumerate(batches):
        if b.channels != channels:
            raise ValueError(f"batch {j} has {b.channels} channels, expected {channels}")
        if b.n != n:
            raise ValueError(
                f"calibration batches must share one size; batch {j} has n={b.n}, expected {n}"
            )
    means = np.stack([b.mean for b in batches])
    variances = np.stack([b.var for b in batches])
    mu = means.mean(axis=0)
    var = (variances + means**2).mean(axis=0) - mu**2
    if np.any(var < -1e-12):
        raise ValueError(f"pooled variance is negative beyond tolerance: min {var.min()}")
    return mu, np.maximum(var, 0.0)


def recalibrate(ms: MovingStats, batches: Sequence[BatchStats]) -> tuple[np.ndarray, np.ndarray]:
    """Overwrite ``mu_hat``/``var_hat`` with pooled calibration statistics.

    The confidence state ``d_mu``/``d_sigma`` is deliberately left
    untouched: it carries the drift-tracking memory across the reset.
    Returns the pooled ``(mu_hat, var_hat)``.
    """
    mu, var = pool_batch_stats(batches)
    if ms.channels != mu.shape[0]:
        raise ValueError(
            f"channel mismatch: moving stats have {ms.channels}, batches have {mu.shape[0]}"
        )
    ms.mu_hat = mu
    ms.var_hat = var
    ms.initialized = True
    return mu, var


def step_estimator(
    ms: MovingStats,
    bs: BatchStats,
    mode: EstimatorMode,
    step_index: int,
    calib_sampler: Callable[[], Sequence[BatchStats]] | None = None,
) -> MovingStats:
    """One estimator step: dispatch on ``mode``, recalibrating on schedule.

    ``calib_sampler`` is required for the ``*_re`` modes; it is invoked
    only when ``step_index`` is a positive multiple of ``mode.t_cal`` and
    must yield ``mode.m_cal`` batches.  The recalibration runs after the
    regular update and overwrites its result.
    """
    if mode.recalibrated and calib_sampler is None:
        raise ValueError(f"mode {mode.kind!r} requires a calibration batch sampler")
    if mode.adaptive:
        ca_update(ms, bs, mode.alpha)
    else:
        ema_update(ms, bs, mode.alpha)
    if mode.recalibrated and step_index > 0 and step_index % mode.t_cal == 0:
        batches = list(calib_sampler())
        if len(batches) != mode.m_cal:
            raise ValueError(
                f"calibration sampler yielded {len(batches)} batches, expected {mode.m_cal}"
            )
        recalibrate(ms, batches)
    return ms
