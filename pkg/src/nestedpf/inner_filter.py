"""Bootstrap particle filter for a fixed parameter value.

Propagation, likelihood estimation and multinomial resampling are exposed
as separate operations because the nested filter interleaves them with
its own parameter-level steps. The marginal likelihood of an observation
is estimated by the particle average of the likelihood, kept in log space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .logweights import logmeanexp, normalized_from_log
from .model import ModelDefinition

# Placed outside every model's plausible range but safely inside float
# range, so diverged particles stay representable and get zero weight.
DIVERGED_SENTINEL = 1e9


class DegenerateWeightsError(RuntimeError):
    """Every particle carries zero likelihood, so resampling is undefined."""

    def __init__(self, step: int | None = None):
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(f"all particle weights are zero{where}")


@dataclass
class InnerParticleSet:
    """State particles for one parameter value, shape (m, d_x)."""

    particles: np.ndarray

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        if self.particles.ndim != 2:
            raise ValueError("particles must have shape (m, d_x)")

    @property
    def m(self) -> int:
        return self.particles.shape[0]


@dataclass(frozen=True)
class LikelihoodEstimate:
    """Particle-average likelihood of one observation, in log space."""

    log_marginal: float
    per_particle_log_lik: np.ndarray


def propagate(
    pset: InnerParticleSet,
    model: ModelDefinition,
    theta: np.ndarray,
    t: int,
    rng: np.random.Generator,
) -> InnerParticleSet:
    """Advance every particle one observation interval; never loses particles.

    Non-finite coordinates coming out of the transition are mapped to a
    large finite sentinel so downstream arithmetic stays warning-free.
    """
    out = model.sample_transition(theta, pset.particles, t, rng)
    out = np.asarray(out, dtype=float)
    if out.shape != pset.particles.shape:
        raise ValueError("transition changed the particle array shape")
    bad = ~np.isfinite(out)
    if bad.any():
        out = np.where(bad, DIVERGED_SENTINEL, out)
    return InnerParticleSet(out)


def estimate_likelihood(
    pset: InnerParticleSet,
    model: ModelDefinition,
    theta: np.ndarray,
    y: np.ndarray,
    t: int,
) -> LikelihoodEstimate:
    log_lik = np.asarray(model.log_likelihood(theta, pset.particles, y, t), dtype=float)
    if log_lik.shape != (pset.m,):
        raise ValueError("log_likelihood must return one value per particle")
    if np.isnan(log_lik).any():
        raise ValueError("log_likelihood returned NaN")
    return LikelihoodEstimate(
        log_marginal=logmeanexp(log_lik), per_particle_log_lik=log_lik
    )


def multinomial_indices(
    log_weights: np.ndarray, size: int, rng: np.random.Generator
) -> np.ndarray:
    """size i.i.d. index draws with probabilities softmax(log_weights)."""
    weights = normalized_from_log(log_weights)
    return rng.choice(weights.size, size=size, p=weights)


def resample_multinomial(
    pset: InnerParticleSet,
    per_particle_log_lik: np.ndarray,
    rng: np.random.Generator,
    step: int | None = None,
) -> InnerParticleSet:
    """Multinomial resampling with weights proportional to the likelihoods."""
    log_lik = np.asarray(per_particle_log_lik, dtype=float)
    if log_lik.shape != (pset.m,):
        raise ValueError("need one log-likelihood per particle")
    try:
        idx = multinomial_indices(log_lik, pset.m, rng)
    except ValueError as err:
        raise DegenerateWeightsError(step=step) from err
    return InnerParticleSet(pset.particles[idx].copy())


def run_bootstrap(
    model: ModelDefinition,
    theta: np.ndarray,
    observations: np.ndarray,
    m: int,
    rng: np.random.Generator,
) -> tuple[InnerParticleSet, list[tuple[InnerParticleSet, LikelihoodEstimate]]]:
    """Full filter pass: prior sample, then propagate/weigh/resample per row.

    Returns the initial prior sample and, per observation, the filtered
    (post-resampling) particle set with its likelihood estimate. With zero
    observations the history is empty and only the prior sample remains.
    """
    if m < 1:
        raise ValueError("m must be positive")
    theta = np.asarray(theta, dtype=float)
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    initial = InnerParticleSet(model.sample_state_prior(rng, m))
    history: list[tuple[InnerParticleSet, LikelihoodEstimate]] = []
    current = initial
    for t, y in enumerate(observations, start=1):
        predicted = propagate(current, model, theta, t, rng)
        estimate = estimate_likelihood(predicted, model, theta, y, t)
        current = resample_multinomial(
            predicted, estimate.per_particle_log_lik, rng, step=t
        )
        history.append((current, estimate))
    return initial, history
