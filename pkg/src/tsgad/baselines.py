"""Reference detectors: tabular CUSUM and PCA/SPE thresholding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pca import PcaModel, spe


@dataclass
class CusumConfig:
    """Tabular CUSUM settings: target mean, slack per step and decision limit."""

    target_mean: float
    slack: float
    threshold: float
    two_sided: bool = True

    def __post_init__(self):
        if self.slack < 0:
            raise ValueError("slack must be >= 0")
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")


def fit_cusum_config(
    training_values: np.ndarray,
    k_sigmas: float = 0.5,
    h_sigmas: float = 5.0,
    two_sided: bool = True,
) -> CusumConfig:
    """Classic tabular settings: slack 0.5 sigma, limit 5 sigma, estimated on
    the normal training slice."""
    x = np.asarray(training_values, dtype=np.float64)
    sigma = float(x.std())
    if sigma == 0.0:
        sigma = 1.0  # degenerate constant channel; keeps the chart well-defined
    return CusumConfig(
        target_mean=float(x.mean()),
        slack=k_sigmas * sigma,
        threshold=h_sigmas * sigma,
        two_sided=two_sided,
    )


def cusum_statistic(series: np.ndarray, config: CusumConfig) -> np.ndarray:
    """Accumulator trajectory max(S+, S-) without alarm resets.

    Used for threshold calibration: the alarm rule ``stat > h`` applied to
    this trajectory matches the first alarm of :func:`cusum_detect`.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be univariate")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    stat = np.empty_like(x)
    s_hi = 0.0
    s_lo = 0.0
    for t in range(x.shape[0]):
        s_hi = max(0.0, s_hi + (x[t] - config.target_mean - config.slack))
        if config.two_sided:
            s_lo = max(0.0, s_lo + (config.target_mean - x[t] - config.slack))
        stat[t] = max(s_hi, s_lo)
    return stat


def cusum_detect(series: np.ndarray, config: CusumConfig) -> np.ndarray:
    """Flag timesteps where an accumulator strictly exceeds the threshold.

    Both accumulators reset to zero after an alarm, so alarms mark events
    rather than latching for the rest of the series.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("series must be univariate")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    flags = np.zeros(x.shape[0], dtype=np.int64)
    s_hi = 0.0
    s_lo = 0.0
    for t in range(x.shape[0]):
        s_hi = max(0.0, s_hi + (x[t] - config.target_mean - config.slack))
        if config.two_sided:
            s_lo = max(0.0, s_lo + (config.target_mean - x[t] - config.slack))
        if s_hi > config.threshold or (config.two_sided and s_lo > config.threshold):
            flags[t] = 1
            s_hi = 0.0
            s_lo = 0.0
    return flags


def spe_detect(model: PcaModel, data: np.ndarray, threshold: float) -> np.ndarray:
    """Flag rows whose squared prediction error strictly exceeds the threshold."""
    return (spe(model, data) > threshold).astype(np.int64)
