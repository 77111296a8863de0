"""Adaptive batch-norm statistics for spiking actor networks in online RL."""

from spikenorm.stats import (
    BatchStats,
    EstimatorMode,
    MovingStats,
    adaptive_gains,
    ca_update,
    ema_update,
    pool_batch_stats,
    recalibrate,
    step_estimator,
)

__version__ = "0.1.0"
