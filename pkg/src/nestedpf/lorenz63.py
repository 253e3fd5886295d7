"""Stochastic Lorenz 63 system discretized by Euler-Maruyama.

The continuous dynamics are perturbed by additive noise and integrated
with step dt; observations are noisy scalings of the first and third
coordinates taken every obs_gap integration steps. Parameters are
theta = (s, r, b, k_obs): the three drift coefficients and the
observation scale.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .csvio import read_csv, write_csv
from .model import ModelDefinition, SupportBox

DIVERGENCE_LIMIT = 1e6

PARAM_NAMES = ("s", "r", "b", "k_obs")
DEFAULT_TRUE_PARAMS = (10.0, 28.0, 8.0 / 3.0, 0.8)

PARAM_SUPPORT = SupportBox(
    lower=np.array([5.0, 18.0, 1.0, 0.5]),
    upper=np.array([20.0, 50.0, 8.0, 3.0]),
)


class DivergenceError(RuntimeError):
    """A ground-truth trajectory left the numerically trusted region."""

    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(
            f"trajectory diverged at step {step}: max |coordinate| = {value:.3g}"
        )


@dataclass(frozen=True)
class LorenzConfig:
    """Integration and observation settings."""

    dt: float = 1e-3
    obs_gap: int = 40
    obs_var: float = 0.1
    prior_mean: tuple[float, float, float] = (-5.91652, -5.52332, 24.5723)
    prior_var: float = 10.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.obs_gap < 1:
            raise ValueError("obs_gap must be a positive integer")
        if self.obs_var <= 0:
            raise ValueError("obs_var must be positive")
        if self.prior_var <= 0:
            raise ValueError("prior_var must be positive")
        if len(self.prior_mean) != 3:
            raise ValueError("prior_mean must have three coordinates")

    @property
    def obs_std(self) -> float:
        return float(np.sqrt(self.obs_var))


@dataclass(frozen=True)
class GroundTruth:
    initial_state: np.ndarray
    states: np.ndarray
    observations: np.ndarray
    true_params: np.ndarray


def euler_step(theta: np.ndarray, x: np.ndarray, noise: np.ndarray, dt: float) -> np.ndarray:
    """One Euler-Maruyama step; x and noise share shape (..., 3).

    noise holds standard normals, scaled here by sqrt(dt).
    """
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    s, r, b = theta[0], theta[1], theta[2]
    root = np.sqrt(dt)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    out = np.empty_like(x)
    out[..., 0] = x1 - dt * s * (x1 - x2) + root * noise[..., 0]
    out[..., 1] = x2 + dt * (r * x1 - x2 - x1 * x3) + root * noise[..., 1]
    out[..., 2] = x3 + dt * (x1 * x2 - b * x3) + root * noise[..., 2]
    return out


def observe(theta: np.ndarray, x: np.ndarray, noise: np.ndarray, obs_std: float) -> np.ndarray:
    """Noisy observation (k_obs * x1, k_obs * x3) of a single state."""
    x = np.asarray(x, dtype=float)
    noise = np.asarray(noise, dtype=float)
    k_obs = theta[3]
    return np.array(
        [k_obs * x[0] + obs_std * noise[0], k_obs * x[2] + obs_std * noise[1]]
    )


def simulate_truth(
    cfg: LorenzConfig,
    theta_true: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
    obs_noise: bool = True,
) -> GroundTruth:
    """Ground-truth trajectory plus observations every obs_gap steps.

    states[k] is the state after step k+1; observation epoch n reads the
    state after step n * obs_gap. Divergence beyond |coordinate| = 1e6 is
    a hard error here, unlike in the filters where diverged particles are
    merely discarded.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    theta_true = np.asarray(theta_true, dtype=float)
    x = np.asarray(cfg.prior_mean) + np.sqrt(cfg.prior_var) * rng.standard_normal(3)
    initial_state = x.copy()
    states = np.empty((n_steps, 3))
    observations = []
    for step in range(1, n_steps + 1):
        x = euler_step(theta_true, x, rng.standard_normal(3), cfg.dt)
        peak = float(np.max(np.abs(x)))
        if not np.isfinite(peak) or peak > DIVERGENCE_LIMIT:
            raise DivergenceError(step=step, value=peak)
        states[step - 1] = x
        if step % cfg.obs_gap == 0:
            noise = rng.standard_normal(2)
            if not obs_noise:
                noise = np.zeros(2)
            observations.append(observe(theta_true, x, noise, cfg.obs_std))
    obs = np.array(observations).reshape(len(observations), 2)
    return GroundTruth(
        initial_state=initial_state,
        states=states,
        observations=obs,
        true_params=theta_true,
    )


class LorenzModel(ModelDefinition):
    """Model adapter: one transition = obs_gap chained Euler steps."""

    d_x = 3
    d_y = 2
    d_theta = 4

    def __init__(self, cfg: LorenzConfig):
        self.cfg = cfg

    def sample_state_prior(self, rng, n):
        prior_mean = np.asarray(self.cfg.prior_mean)
        return prior_mean + np.sqrt(self.cfg.prior_var) * rng.standard_normal((n, 3))

    def sample_transition(self, theta, x_prev, t, rng):
        cfg = self.cfg
        x = np.asarray(x_prev, dtype=float)
        noise = rng.standard_normal((cfg.obs_gap, x.shape[0], 3))
        s, r, b = theta[0], theta[1], theta[2]
        dt = cfg.dt
        scaled = np.sqrt(dt) * noise
        x1 = x[:, 0].copy()
        x2 = x[:, 1].copy()
        x3 = x[:, 2].copy()
        # Inline chain of euler_step bodies, kept bit-identical to the
        # single-step form. Overflow past the divergence limit is survivable
        # for particles; the likelihood guard below turns it into zero weight.
        with np.errstate(all="ignore"):
            for k in range(cfg.obs_gap):
                n = scaled[k]
                new1 = x1 - dt * s * (x1 - x2) + n[:, 0]
                new2 = x2 + dt * (r * x1 - x2 - x1 * x3) + n[:, 1]
                new3 = x3 + dt * (x1 * x2 - b * x3) + n[:, 2]
                x1, x2, x3 = new1, new2, new3
        out = np.empty_like(x)
        out[:, 0] = x1
        out[:, 1] = x2
        out[:, 2] = x3
        return out

    def log_likelihood(self, theta, x, y, t):
        x = np.asarray(x, dtype=float)
        k_obs = theta[3]
        with np.errstate(invalid="ignore"):
            bad = ~np.isfinite(x).all(axis=1) | (np.abs(x) > DIVERGENCE_LIMIT).any(axis=1)
        out = np.full(x.shape[0], -np.inf)
        ok = ~bad
        if np.any(ok):
            r1 = y[0] - k_obs * x[ok, 0]
            r3 = y[1] - k_obs * x[ok, 2]
            out[ok] = -np.log(2.0 * np.pi * self.cfg.obs_var) - (r1 * r1 + r3 * r3) / (
                2.0 * self.cfg.obs_var
            )
        return out

    def sample_param_prior(self, rng, n):
        box = PARAM_SUPPORT
        return rng.uniform(box.lower, box.upper, size=(n, box.dim))

    def support(self) -> SupportBox:
        return PARAM_SUPPORT


def build_lorenz_model(cfg: LorenzConfig | None = None) -> LorenzModel:
    return LorenzModel(cfg if cfg is not None else LorenzConfig())


def write_truth_csv(truth: GroundTruth, cfg: LorenzConfig, path: str | Path) -> Path:
    """One row per observation epoch: state at the epoch plus its observation."""
    rows = []
    for n in range(1, truth.observations.shape[0] + 1):
        state = truth.states[n * cfg.obs_gap - 1]
        y = truth.observations[n - 1]
        rows.append((n, n * cfg.obs_gap * cfg.dt, state[0], state[1], state[2], y[0], y[1]))
    return write_csv(path, ("epoch", "t_continuous", "x1", "x2", "x3", "y1", "y3"), rows)


def write_observations_csv(truth: GroundTruth, cfg: LorenzConfig, path: str | Path) -> Path:
    rows = [
        (n, n * cfg.obs_gap * cfg.dt, y[0], y[1])
        for n, y in enumerate(truth.observations, start=1)
    ]
    return write_csv(path, ("epoch", "t_continuous", "y1", "y3"), rows)


def read_observations_csv(path: str | Path) -> np.ndarray:
    header, rows = read_csv(path)
    if header[:2] != ["epoch", "t_continuous"]:
        raise ValueError(f"unexpected observation header: {header}")
    return np.array([[float(v) for v in row[2:]] for row in rows])
