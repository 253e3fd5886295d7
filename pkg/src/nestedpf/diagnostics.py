"""Health metrics for the parameter layer of the nested filter.

The central quantity is the normalized effective sample size (NESS) of
the jittered parameter cloud, computed from the per-particle marginal
likelihood estimates. Replicated parameter values (which appear whenever
the jitter kernel keeps anchors bit-identical) are grouped so the NESS
reflects distinct support points, not raw array rows.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class NessRecord:
    ness: float
    n_distinct: int
    max_replicas: int
    n_total: int


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of error = c / sqrt(n)."""

    c_hat: float
    residual: float


@dataclass(frozen=True)
class NessBoundReport:
    """How a NESS trajectory compares against likelihood-ratio floors.

    bound_full (1 / g_bound**4) applies when every parameter particle is
    distinct; bound_half (half of it) applies when the distinct count
    never drops below n - sqrt(n) + 1. Flags are non-strict comparisons
    because a constant likelihood attains the floor exactly.
    """

    min_ness: float
    min_n_distinct: int
    bound_full: float
    bound_half: float
    always_distinct: bool
    nearly_distinct: bool
    meets_full_bound: bool
    meets_half_bound: bool


def count_distinct(thetas: np.ndarray) -> tuple[int, np.ndarray]:
    """Distinct rows (bit-exact comparison) and their replica counts."""
    thetas = np.asarray(thetas)
    if thetas.ndim != 2:
        raise ValueError("thetas must have shape (n, d_theta)")
    _, counts = np.unique(thetas, axis=0, return_counts=True)
    return int(counts.size), counts


def compute_ness(thetas: np.ndarray, log_marginals: np.ndarray) -> NessRecord:
    """NESS of a weighted parameter cloud, grouping bit-identical rows.

    With group sums s_g of the (rescaled) marginal likelihood estimates,
    NESS = (sum_g s_g)^2 / (n * sum_g s_g^2); it equals 1 when all n rows
    are distinct and equally weighted, and 1/n when one row absorbs all
    the weight.
    """
    thetas = np.asarray(thetas, dtype=float)
    log_marginals = np.asarray(log_marginals, dtype=float)
    if thetas.ndim != 2 or log_marginals.shape != (thetas.shape[0],):
        raise ValueError("need thetas (n, d_theta) and one log-marginal per row")
    if np.isnan(log_marginals).any():
        raise ValueError("log-marginals contain NaN")
    top = np.max(log_marginals)
    if top == -np.inf:
        raise ValueError("all log-marginals are -inf; the system is degenerate")
    scaled = np.exp(log_marginals - top)
    _, inverse, counts = np.unique(
        thetas, axis=0, return_inverse=True, return_counts=True
    )
    group_sums = np.zeros(counts.size)
    np.add.at(group_sums, inverse.reshape(-1), scaled)
    n = thetas.shape[0]
    ness = float(scaled.sum() ** 2 / (n * np.sum(group_sums**2)))
    return NessRecord(
        ness=ness,
        n_distinct=int(counts.size),
        max_replicas=int(counts.max()),
        n_total=n,
    )


def check_ness_bound(history: Sequence[NessRecord], g_bound: float) -> NessBoundReport:
    """Compare a NESS trajectory against the floors implied by g_bound.

    g_bound is a likelihood-ratio bound: sup g / inf g <= g_bound**2 for
    the model generating the history.
    """
    if not history:
        raise ValueError("history must be non-empty")
    if g_bound < 1.0:
        raise ValueError("g_bound must be at least 1")
    min_ness = min(rec.ness for rec in history)
    min_distinct = min(rec.n_distinct for rec in history)
    always_distinct = all(rec.n_distinct == rec.n_total for rec in history)
    nearly_distinct = all(
        rec.n_distinct >= rec.n_total - np.sqrt(rec.n_total) + 1.0 for rec in history
    )
    bound_full = 1.0 / g_bound**4
    bound_half = 0.5 * bound_full
    return NessBoundReport(
        min_ness=float(min_ness),
        min_n_distinct=int(min_distinct),
        bound_full=bound_full,
        bound_half=bound_half,
        always_distinct=always_distinct,
        nearly_distinct=nearly_distinct,
        meets_full_bound=min_ness >= bound_full,
        meets_half_bound=min_ness >= bound_half,
    )


def normalized_abs_error(estimate: float, truth: float) -> float:
    """|estimate - truth| / |truth|; truth must be nonzero."""
    if truth == 0:
        raise ValueError("truth must be nonzero for a normalized error")
    return abs(estimate - truth) / abs(truth)


def fit_inverse_sqrt_rate(points: Iterable[tuple[float, float]]) -> RateFit:
    """Fit error ~ c / sqrt(n) to (n, error) pairs by least squares.

    Minimizing sum_k (e_k - c / sqrt(n_k))^2 gives
    c = sum_k e_k / sqrt(n_k) / sum_k (1 / n_k) in closed form.
    """
    pts = [(float(n), float(e)) for n, e in points]
    if not pts:
        raise ValueError("need at least one (n, error) point")
    if any(n < 1 or e < 0 for n, e in pts):
        raise ValueError("sizes must be >= 1 and errors nonnegative")
    ns = np.array([n for n, _ in pts])
    errs = np.array([e for _, e in pts])
    c_hat = float(np.sum(errs / np.sqrt(ns)) / np.sum(1.0 / ns))
    residual = float(np.sum((errs - c_hat / np.sqrt(ns)) ** 2))
    return RateFit(c_hat=c_hat, residual=residual)
