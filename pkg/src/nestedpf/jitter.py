"""Parameter jittering kernels with vanishing moments.

Both kernels keep their output inside the parameter support box and
shrink as the outer particle count n grows, so jittering refreshes
particle diversity without injecting persistent bias:

- TruncatedGaussianKernel: per-dimension truncated normal around the
  anchor with variance variance_scales * n**(-(moment_order + 2) / 2).
  Every output differs from the anchor almost surely.
- MixtureDiracKernel: with probability jitter_prob (default
  n**(-moment_order / 2)) draw from a fixed base distribution, else
  return the anchor bit-identically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .model import SupportBox, contains

# ndtr underflows to exactly 0/1 around |z| ~ 39; past that the inverse
# CDF is unusable and the conditional law is effectively an exponential
# hugging the boundary nearest the mode.
_MIN_REJECTION_ACCEPT = 0.01
_MAX_REJECTION_ROUNDS = 2000


def _truncated_normal_core(
    mean: np.ndarray,
    sd: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Vectorized truncated-normal draws, one per element.

    Rejection sampling where the untruncated acceptance rate is decent,
    inverse-CDF (with reflection for right-tail precision) otherwise.
    """
    mean, sd, lower, upper = np.broadcast_arrays(
        np.asarray(mean, float),
        np.asarray(sd, float),
        np.asarray(lower, float),
        np.asarray(upper, float),
    )
    shape = mean.shape
    mean, sd = mean.ravel(), sd.ravel()
    lower, upper = lower.ravel(), upper.ravel()
    out = np.empty(mean.size)

    alpha = (lower - mean) / sd
    beta = (upper - mean) / sd
    accept = ndtr(beta) - ndtr(alpha)

    pending = np.flatnonzero(accept >= _MIN_REJECTION_ACCEPT)
    rounds = 0
    while pending.size and rounds < _MAX_REJECTION_ROUNDS:
        x = mean[pending] + sd[pending] * rng.standard_normal(pending.size)
        ok = (lower[pending] <= x) & (x <= upper[pending])
        out[pending[ok]] = x[ok]
        pending = pending[~ok]
        rounds += 1

    inv = np.concatenate([pending, np.flatnonzero(accept < _MIN_REJECTION_ACCEPT)])
    if inv.size:
        a, b = alpha[inv], beta[inv]
        flip = a > 0.0
        lo_z = np.where(flip, -b, a)
        hi_z = np.where(flip, -a, b)
        ua, ub = ndtr(lo_z), ndtr(hi_z)
        u = rng.uniform(ua, ub)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = ndtri(u)
        z = np.where(flip, -z, z)
        dead = ~np.isfinite(z)
        if dead.any():
            # CDF fully underflowed: exponential tail draw at the near boundary.
            idx = np.flatnonzero(dead)
            rate = np.where(a[idx] > 0.0, a[idx], -b[idx])
            tail = rng.exponential(1.0, size=idx.size) / rate
            z_tail = np.where(a[idx] > 0.0, a[idx] + tail, b[idx] - tail)
            z[idx] = z_tail
        x = mean[inv] + sd[inv] * z
        out[inv] = np.clip(x, lower[inv], upper[inv])
    return out.reshape(shape)


def sample_truncated_normal(
    mean: float, var: float, lower: float, upper: float, rng: np.random.Generator
) -> float:
    """One draw from a normal restricted to (lower, upper)."""
    if var <= 0:
        raise ValueError("var must be positive")
    if not lower < upper:
        raise ValueError("lower must be strictly below upper")
    if not np.isfinite(mean):
        raise ValueError("mean must be finite")
    value = _truncated_normal_core(
        np.array([mean]), np.array([np.sqrt(var)]), lower, upper, rng
    )
    return float(value[0])


@dataclass(frozen=True)
class TruncatedGaussianKernel:
    """Per-dimension truncated normal jitter shrinking as n grows."""

    box: SupportBox
    variance_scales: np.ndarray
    moment_order: float = 1.0

    def __post_init__(self):
        scales = np.atleast_1d(np.asarray(self.variance_scales, dtype=float))
        if scales.shape != (self.box.dim,):
            raise ValueError("need one variance scale per box dimension")
        if not np.all(scales > 0):
            raise ValueError("variance scales must be positive")
        if self.moment_order <= 0:
            raise ValueError("moment_order must be positive")
        object.__setattr__(self, "variance_scales", scales)

    def variances(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be a positive particle count")
        return self.variance_scales * float(n) ** (-(self.moment_order + 2.0) / 2.0)

    def sample(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(theta, 1, n, rng)[0]

    def sample_batch(
        self, theta: np.ndarray, size: int, n: int, rng: np.random.Generator
    ) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not contains(self.box, theta):
            raise ValueError("jitter anchor lies outside the support box")
        sd = np.sqrt(self.variances(n))
        return _truncated_normal_core(
            np.broadcast_to(theta, (size, self.box.dim)),
            np.broadcast_to(sd, (size, self.box.dim)),
            np.broadcast_to(self.box.lower, (size, self.box.dim)),
            np.broadcast_to(self.box.upper, (size, self.box.dim)),
            rng,
        )


@dataclass(frozen=True)
class MixtureDiracKernel:
    """Keep the anchor untouched except with vanishing probability.

    The base distribution is uniform over the box unless a per-dimension
    spread is given, in which case it is a truncated normal around the
    anchor. jitter_prob overrides the n-dependent default; zero gives the
    pure no-jitter kernel.
    """

    box: SupportBox
    moment_order: float = 1.0
    jitter_prob: float | None = None
    spread: np.ndarray | None = None

    def __post_init__(self):
        if self.moment_order <= 0:
            raise ValueError("moment_order must be positive")
        if self.jitter_prob is not None and not 0.0 <= self.jitter_prob <= 1.0:
            raise ValueError("jitter_prob must lie in [0, 1]")
        if self.spread is not None:
            spread = np.atleast_1d(np.asarray(self.spread, dtype=float))
            if spread.shape != (self.box.dim,) or not np.all(spread > 0):
                raise ValueError("spread must be positive, one entry per dimension")
            object.__setattr__(self, "spread", spread)

    def jitter_prob_for(self, n: int) -> float:
        if self.jitter_prob is not None:
            return self.jitter_prob
        if n < 1:
            raise ValueError("n must be a positive particle count")
        return min(1.0, float(n) ** (-self.moment_order / 2.0))

    def sample(self, theta: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.sample_batch(theta, 1, n, rng)[0]

    def sample_batch(
        self, theta: np.ndarray, size: int, n: int, rng: np.random.Generator
    ) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if not contains(self.box, theta):
            raise ValueError("jitter anchor lies outside the support box")
        prob = self.jitter_prob_for(n)
        moved = rng.random(size) < prob
        out = np.tile(theta, (size, 1))
        k = int(moved.sum())
        if k:
            if self.spread is None:
                draws = rng.uniform(self.box.lower, self.box.upper, size=(k, self.box.dim))
            else:
                draws = _truncated_normal_core(
                    np.broadcast_to(theta, (k, self.box.dim)),
                    np.broadcast_to(self.spread, (k, self.box.dim)),
                    np.broadcast_to(self.box.lower, (k, self.box.dim)),
                    np.broadcast_to(self.box.upper, (k, self.box.dim)),
                    rng,
                )
            out[moved] = draws
        return out


JitterKernel = TruncatedGaussianKernel | MixtureDiracKernel


def variance_schedule(kernel: TruncatedGaussianKernel, n: int) -> np.ndarray:
    """Per-dimension jitter variances at outer particle count n."""
    if not isinstance(kernel, TruncatedGaussianKernel):
        raise TypeError("only the truncated-Gaussian kernel has a variance schedule")
    return kernel.variances(n)


def sample_jitter(
    kernel: JitterKernel, theta: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """One jittered parameter; always inside the kernel's support box."""
    return kernel.sample(theta, n, rng)


@dataclass(frozen=True)
class MomentBoundReport:
    """Empirical worst-case jitter moments across anchors and sizes.

    implied_constants[k] is the smallest c with
    moment(n_k) <= c**order / n_k**(order / 2); c_kappa is their maximum,
    i.e. the constant making the bound hold for every tested n. slope is
    the log-log decay rate of the moment in n. The bound constant is
    called stable when the implied constants stay within a factor 1.5.
    """

    order: float
    n_values: tuple[int, ...]
    moments: np.ndarray
    implied_constants: np.ndarray
    c_kappa: float
    slope: float
    stability_ratio: float
    stable: bool


def _anchor_grid(box: SupportBox, rng: np.random.Generator, interior: int = 8) -> np.ndarray:
    dim = box.dim
    if dim <= 6:
        corners = np.stack(
            [
                np.where(np.array(bits), box.upper, box.lower)
                for bits in np.ndindex(*(2,) * dim)
            ]
        )
    else:
        picks = rng.integers(0, 2, size=(64, dim)).astype(bool)
        corners = np.where(picks, box.upper, box.lower)
    center = (box.lower + box.upper) / 2.0
    inside = rng.uniform(box.lower, box.upper, size=(interior, dim))
    return np.vstack([corners, center[None, :], inside])


def check_moment_bound(
    kernel: JitterKernel,
    n_values,
    order: float,
    trials: int,
    rng: np.random.Generator,
) -> MomentBoundReport:
    """Measure sup over anchors of E[||jitter - anchor||^order] per n."""
    n_values = tuple(int(n) for n in n_values)
    if len(n_values) == 0 or any(n < 1 for n in n_values):
        raise ValueError("n_values must be positive particle counts")
    if order <= 0:
        raise ValueError("order must be positive")
    if trials < 1000:
        raise ValueError("trials must be at least 1000 for stable moment estimates")
    anchors = _anchor_grid(kernel.box, rng)
    moments = np.empty(len(n_values))
    for k, n in enumerate(n_values):
        worst = 0.0
        for anchor in anchors:
            draws = kernel.sample_batch(anchor, trials, n, rng)
            dist = np.linalg.norm(draws - anchor, axis=1)
            worst = max(worst, float(np.mean(dist**order)))
        moments[k] = worst
    nv = np.array(n_values, dtype=float)
    implied = (moments * nv ** (order / 2.0)) ** (1.0 / order)
    if np.all(moments > 0) and len(n_values) > 1:
        slope = float(np.polyfit(np.log(nv), np.log(moments), 1)[0])
    else:
        slope = 0.0
    positive = implied[implied > 0]
    ratio = float(positive.max() / positive.min()) if positive.size else 1.0
    return MomentBoundReport(
        order=float(order),
        n_values=n_values,
        moments=moments,
        implied_constants=implied,
        c_kappa=float(implied.max(initial=0.0)),
        slope=slope,
        stability_ratio=ratio,
        stable=ratio <= 1.5,
    )
