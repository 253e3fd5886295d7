"""Shared test models.

BoundedModel has a likelihood bounded in (0.5, 2], so ||g|| = 2 is a known
constant for the effective-sample-size bounds. FixedLikelihoodModel pins the
per-particle log likelihood to a supplied function for weight-level checks.
"""
from __future__ import annotations

import numpy as np
import pytest

from nestedpf.model import ModelDefinition, SupportBox


class BoundedModel(ModelDefinition):

    d_x = 1
    d_y = 1
    d_theta = 1

    def sample_state_prior(self, rng, n):
        return rng.standard_normal((n, 1))

    def sample_transition(self, theta, x_prev, t, rng):
        return 0.95 * x_prev + 0.5 * rng.standard_normal(x_prev.shape)

    def log_likelihood(self, theta, x, y, t):
        resid = y[0] - float(theta[0]) * np.tanh(x[:, 0])
        return np.log(0.5 + 1.5 * np.exp(-0.5 * resid**2))

    def sample_param_prior(self, rng, n):
        return rng.uniform(-2.0, 2.0, size=(n, 1))

    def support(self):
        return SupportBox(np.array([-2.0]), np.array([2.0]))


class FixedLikelihoodModel(BoundedModel):
    """Likelihood ignores the state; log_fn(theta, y, t) sets every particle."""

    def __init__(self, log_fn):
        self.log_fn = log_fn

    def log_likelihood(self, theta, x, y, t):
        return np.full(x.shape[0], self.log_fn(theta, y, t), dtype=float)


def simulate_bounded(model, theta, n_steps, rng):
    x = model.sample_state_prior(rng, 1)
    ys = np.empty((n_steps, 1))
    for t in range(n_steps):
        x = model.sample_transition(theta, x, t, rng)
        ys[t, 0] = theta[0] * np.tanh(x[0, 0]) + rng.standard_normal()
    return ys


@pytest.fixture
def bounded_model():
    return BoundedModel()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
