"""State-space model contract shared by both filter layers.

A model bundles five pieces: the state prior, the parameter-indexed
transition kernel, the observation log-likelihood, the parameter prior,
and the box support of the parameter space. State-level methods are
vectorized over particles: states have shape (n, d_x) and log-likelihoods
return one value per row. Likelihoods live in log space; -inf means zero
likelihood and is legal, NaN is not.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SupportBox:
    """Axis-aligned box containing every admissible parameter vector."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be 1-D arrays of equal length")
        if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
            raise ValueError("box bounds must be finite")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower


def contains(box: SupportBox, theta: np.ndarray) -> bool:
    """Whether theta lies in the closed box. Dimension mismatch is an error."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != box.lower.shape:
        raise ValueError(
            f"parameter has dimension {theta.size}, box has dimension {box.dim}"
        )
    return bool(np.all((box.lower <= theta) & (theta <= box.upper)))


class ModelDefinition(abc.ABC):
    """Interface the inner and nested filters drive.

    Subclasses set d_x, d_y and d_theta. All sampling takes an injected
    numpy Generator so callers control determinism.
    """

    d_x: int
    d_y: int
    d_theta: int

    @abc.abstractmethod
    def sample_state_prior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws from the state prior, shape (n, d_x)."""

    @abc.abstractmethod
    def sample_transition(
        self, theta: np.ndarray, x_prev: np.ndarray, t: int, rng: np.random.Generator
    ) -> np.ndarray:
        """One transition per row of x_prev under parameter theta, shape-preserving."""

    @abc.abstractmethod
    def log_likelihood(
        self, theta: np.ndarray, x: np.ndarray, y: np.ndarray, t: int
    ) -> np.ndarray:
        """log g(y | x, theta) per particle row, shape (n,). Finite or -inf, never NaN."""

    @abc.abstractmethod
    def sample_param_prior(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n draws from the parameter prior, shape (n, d_theta), inside support()."""

    @abc.abstractmethod
    def support(self) -> SupportBox:
        """Box support of the parameter prior."""


@dataclass(frozen=True)
class LinearGaussianModel(ModelDefinition):
    """Scalar AR(1) state with additive Gaussian observation noise.

    x_t = a x_{t-1} + N(0, q),  y_t = x_t + N(0, r), unknown parameter a.
    The state prior is the stationary law N(0, q / (1 - a_true^2)) so an
    exact Kalman recursion with the same prior is available as an oracle.
    """

    a: float
    q: float
    r: float
    support_bounds: tuple[float, float] = (-1.0, 1.0)

    d_x = 1
    d_y = 1
    d_theta = 1

    def __post_init__(self):
        if self.q <= 0 or self.r <= 0:
            raise ValueError("q and r must be positive")
        lo, hi = self.support_bounds
        if not lo < hi:
            raise ValueError("support bounds must be ordered")
        if not (lo <= self.a <= hi):
            raise ValueError("a must lie inside the support bounds")

    @property
    def prior_mean(self) -> float:
        return 0.0

    @property
    def prior_var(self) -> float:
        if abs(self.a) < 1.0:
            return self.q / (1.0 - self.a * self.a)
        return self.q

    def sample_state_prior(self, rng, n):
        return self.prior_mean + np.sqrt(self.prior_var) * rng.standard_normal((n, 1))

    def sample_transition(self, theta, x_prev, t, rng):
        x_prev = np.asarray(x_prev, dtype=float)
        return theta[0] * x_prev + np.sqrt(self.q) * rng.standard_normal(x_prev.shape)

    def log_likelihood(self, theta, x, y, t):
        x = np.asarray(x, dtype=float)
        resid = y[0] - x[:, 0]
        return -0.5 * np.log(2.0 * np.pi * self.r) - resid * resid / (2.0 * self.r)

    def sample_param_prior(self, rng, n):
        lo, hi = self.support_bounds
        return rng.uniform(lo, hi, size=(n, 1))

    def support(self) -> SupportBox:
        lo, hi = self.support_bounds
        return SupportBox(np.array([lo]), np.array([hi]))


def build_linear_gaussian_model(
    a: float, q: float, r: float, support_bounds: tuple[float, float] = (-1.0, 1.0)
) -> LinearGaussianModel:
    return LinearGaussianModel(a=a, q=q, r=r, support_bounds=support_bounds)


def simulate_linear_gaussian(
    model: LinearGaussianModel, n_steps: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw a state trajectory and observations, shapes (n_steps,) each."""
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    states = np.empty(n_steps)
    x = model.prior_mean + np.sqrt(model.prior_var) * rng.standard_normal()
    sq, sr = np.sqrt(model.q), np.sqrt(model.r)
    for t in range(n_steps):
        x = model.a * x + sq * rng.standard_normal()
        states[t] = x
    observations = states + sr * rng.standard_normal(n_steps)
    return states, observations
