"""Log-domain weight arithmetic shared by the filter layers."""
from __future__ import annotations

import numpy as np


def logsumexp(values: np.ndarray) -> float:
    """log(sum(exp(values))) with max-subtraction; all -inf yields -inf."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("logsumexp of an empty array")
    top = np.max(values)
    if top == -np.inf:
        return -np.inf
    return float(top + np.log(np.sum(np.exp(values - top))))


def logmeanexp(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    return logsumexp(values) - np.log(values.size)


def normalized_from_log(values: np.ndarray) -> np.ndarray:
    """Weights proportional to exp(values), summing to one.

    Raises ValueError when every entry is -inf; entries must never be NaN.
    """
    values = np.asarray(values, dtype=float)
    if np.isnan(values).any():
        raise ValueError("log-weights contain NaN")
    top = np.max(values) if values.size else -np.inf
    if top == -np.inf:
        raise ValueError("all log-weights are -inf")
    raw = np.exp(values - top)
    return raw / raw.sum()
