"""Nested particle filter: joint online parameter and state estimation.

An outer particle population explores the parameter space; each outer
particle carries its own inner bootstrap filter over the state space.
Every observation triggers one recursive update: jitter the parameters,
advance each inner filter one interval, weigh parameters by their inner
marginal-likelihood estimates, and resample parameter/state-cloud pairs
atomically. Cost per step is O(n * m) and does not grow with time.

Determinism: each step draws one root integer from the caller's
generator and derives an independent child generator per outer particle
from it by key, so results are byte-identical for any thread count.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .diagnostics import NessRecord, compute_ness
from .inner_filter import (
    InnerParticleSet,
    estimate_likelihood,
    multinomial_indices,
    propagate,
    resample_multinomial,
)
from .jitter import JitterKernel
from .logweights import normalized_from_log
from .model import ModelDefinition


class DegenerateSystemError(RuntimeError):
    """Every parameter particle has zero estimated likelihood."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(
            f"all outer weights vanished at epoch {epoch}; "
            "the observation is incompatible with every particle"
        )


@dataclass
class NestedSystem:
    """Parameter particles paired with their state clouds.

    thetas has shape (n, d_theta), inner has shape (n, m, d_x); row i of
    thetas owns slab i of inner. log_weights are kept normalized and are
    uniform right after initialization and after each resampled step.
    """

    thetas: np.ndarray
    inner: np.ndarray
    log_weights: np.ndarray
    t: int

    def __post_init__(self):
        if self.thetas.ndim != 2 or self.inner.ndim != 3:
            raise ValueError("thetas must be (n, d_theta) and inner (n, m, d_x)")
        if self.thetas.shape[0] != self.inner.shape[0]:
            raise ValueError("thetas and inner must agree on the particle count")
        if self.log_weights.shape != (self.thetas.shape[0],):
            raise ValueError("need one log-weight per outer particle")

    @property
    def n(self) -> int:
        return self.thetas.shape[0]

    @property
    def m(self) -> int:
        return self.inner.shape[1]

    def inner_set(self, i: int) -> InnerParticleSet:
        return InnerParticleSet(self.inner[i])


@dataclass(frozen=True)
class StepOutput:
    """Summaries of one update.

    param_samples is the equally weighted post-resampling cloud; the other
    fields are taken just before the outer resampling.
    """

    param_samples: np.ndarray
    ness: NessRecord
    param_mean: np.ndarray
    state_mean: np.ndarray
    log_marginals: np.ndarray

    @property
    def max_log_marginal(self) -> float:
        return float(np.max(self.log_marginals))


def initialize(
    model: ModelDefinition, n: int, m: int, rng: np.random.Generator
) -> NestedSystem:
    """Draw n parameters from the prior, each with m prior state particles."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    thetas = np.asarray(model.sample_param_prior(rng, n), dtype=float)
    states = np.asarray(model.sample_state_prior(rng, n * m), dtype=float)
    inner = states.reshape(n, m, model.d_x)
    return NestedSystem(
        thetas=thetas,
        inner=inner,
        log_weights=np.full(n, -np.log(n)),
        t=0,
    )


def _child_rng(root: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=root, spawn_key=(key,)))


def step(
    system: NestedSystem,
    model: ModelDefinition,
    kernel: JitterKernel,
    y: np.ndarray,
    rng: np.random.Generator,
    n_threads: int = 1,
) -> tuple[NestedSystem, StepOutput]:
    """Advance the system by one observation.

    Returns the resampled system at time t+1 and the pre-resampling
    summaries. Raises DegenerateSystemError when every parameter particle
    estimates zero likelihood for y.
    """
    t = system.t + 1
    n, m = system.n, system.m
    y = np.asarray(y, dtype=float)
    root = int(rng.integers(0, 2**63 - 1))

    thetas_new = np.empty_like(system.thetas)
    inner_new = np.empty_like(system.inner)
    log_marginals = np.empty(n)

    def advance(i: int) -> None:
        child = _child_rng(root, i)
        theta_i = kernel.sample(system.thetas[i], n, child)
        predicted = propagate(system.inner_set(i), model, theta_i, t, child)
        estimate = estimate_likelihood(predicted, model, theta_i, y, t)
        if estimate.log_marginal == -np.inf:
            # Dead branch: keep the predicted cloud, the outer resampling
            # below removes it as long as any sibling survives.
            filtered = predicted
        else:
            filtered = resample_multinomial(
                predicted, estimate.per_particle_log_lik, child, step=t
            )
        thetas_new[i] = theta_i
        inner_new[i] = filtered.particles
        log_marginals[i] = estimate.log_marginal

    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(advance, range(n)))
    else:
        for i in range(n):
            advance(i)

    if np.max(log_marginals) == -np.inf:
        raise DegenerateSystemError(epoch=t)
    weights = normalized_from_log(log_marginals)
    ness = compute_ness(thetas_new, log_marginals)
    param_mean = weights @ thetas_new
    state_mean = weights @ inner_new.mean(axis=1)

    outer_rng = _child_rng(root, n)
    idx = multinomial_indices(log_marginals, n, outer_rng)
    resampled = NestedSystem(
        thetas=thetas_new[idx].copy(),
        inner=inner_new[idx].copy(),
        log_weights=np.full(n, -np.log(n)),
        t=t,
    )
    output = StepOutput(
        param_samples=resampled.thetas.copy(),
        ness=ness,
        param_mean=param_mean,
        state_mean=state_mean,
        log_marginals=log_marginals,
    )
    return resampled, output


@dataclass(frozen=True)
class FilterRun:
    outputs: list[StepOutput]
    final_system: NestedSystem
    step_seconds: np.ndarray

    @property
    def ness_history(self) -> list[NessRecord]:
        return [out.ness for out in self.outputs]


def run_filter(
    model: ModelDefinition,
    kernel: JitterKernel,
    observations: np.ndarray,
    n: int,
    m: int,
    rng: np.random.Generator,
    n_threads: int = 1,
) -> FilterRun:
    """Initialize and run one full pass over the observation rows."""
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    if observations.shape[1] != model.d_y:
        raise ValueError(
            f"observations have {observations.shape[1]} columns, model emits {model.d_y}"
        )
    system = initialize(model, n, m, rng)
    outputs: list[StepOutput] = []
    seconds = np.empty(observations.shape[0])
    for k, y in enumerate(observations):
        started = time.perf_counter()
        system, output = step(system, model, kernel, y, rng, n_threads=n_threads)
        seconds[k] = time.perf_counter() - started
        outputs.append(output)
    return FilterRun(outputs=outputs, final_system=system, step_seconds=seconds)


def estimate_param(
    target: NestedSystem | StepOutput, h: Callable[[np.ndarray], float]
) -> float:
    """Posterior mean of h(theta) under the equally-weighted parameter cloud."""
    if isinstance(target, StepOutput):
        thetas = target.param_samples
    else:
        thetas = target.thetas
    return float(np.mean([float(h(theta)) for theta in thetas]))


def estimate_joint(
    system: NestedSystem, f: Callable[[np.ndarray, np.ndarray], float]
) -> float:
    """Posterior mean of f(theta, x) over all parameter/state particle pairs."""
    total = 0.0
    for i in range(system.n):
        theta = system.thetas[i]
        total += sum(float(f(theta, x)) for x in system.inner[i])
    return total / (system.n * system.m)
