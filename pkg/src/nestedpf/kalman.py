"""Exact Kalman recursion for the scalar linear-Gaussian model.

This is the reference the bootstrap filter is validated against; it is
kept deliberately independent of the particle code paths.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KalmanRun:
    means: np.ndarray
    variances: np.ndarray
    gains: np.ndarray
    log_increments: np.ndarray

    @property
    def total_log_marginal(self) -> float:
        return float(self.log_increments.sum())


def filter_linear_gaussian(
    a: float,
    q: float,
    r: float,
    prior_mean: float,
    prior_var: float,
    observations: np.ndarray,
) -> KalmanRun:
    """Filter means/variances and per-step log marginal likelihoods."""
    if q <= 0 or r <= 0 or prior_var <= 0:
        raise ValueError("q, r and prior_var must be positive")
    y = np.asarray(observations, dtype=float).reshape(-1)
    n = y.size
    means = np.empty(n)
    variances = np.empty(n)
    gains = np.empty(n)
    log_increments = np.empty(n)
    m, p = prior_mean, prior_var
    for t in range(n):
        m_pred = a * m
        p_pred = a * a * p + q
        s = p_pred + r
        gain = p_pred / s
        resid = y[t] - m_pred
        log_increments[t] = -0.5 * (np.log(2.0 * np.pi * s) + resid * resid / s)
        m = m_pred + gain * resid
        p = (1.0 - gain) * p_pred
        means[t] = m
        variances[t] = p
        gains[t] = gain
    return KalmanRun(means, variances, gains, log_increments)
