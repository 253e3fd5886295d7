"""Batch experiment runners behind the command-line verbs.

Every runner takes an ExperimentConfig plus an output directory, writes
CSV files with a fixed schema and float format, and drops a manifest.json
holding the config echo, seeds, thread count and per-step wall-clock so
any run can be reproduced from its manifest alone. All randomness flows
from the config seed through named SeedSequence keys; thread count never
affects output bytes.
"""
from __future__ import annotations

import dataclasses
import json
import os
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import lorenz63
from .csvio import write_csv
from .diagnostics import RateFit, fit_inverse_sqrt_rate, normalized_abs_error
from .jitter import JitterKernel, MixtureDiracKernel, TruncatedGaussianKernel
from .kalman import filter_linear_gaussian
from .lorenz63 import LorenzConfig
from .model import (
    LinearGaussianModel,
    ModelDefinition,
    build_linear_gaussian_model,
    simulate_linear_gaussian,
)
from .nested import FilterRun, run_filter
from .inner_filter import run_bootstrap

THREADS_ENV_VAR = "NPF_THREADS"

# Reference decay constants from a large-budget run of the same Lorenz
# experiment, recorded in sweep manifests for orientation, never asserted.
LORENZ_REFERENCE_RATE_CONSTANTS = {"s": 0.807, "r": 0.290, "b": 0.496, "k_obs": 0.397}

KALMAN_MEAN_DEVIATION_TOL = 0.15
KALMAN_LOG_MARGINAL_TOL = 0.5

_TRUTH_STREAM = 0
_FILTER_STREAM = 1

_DEFAULT_VARIANCE_SCALES = {
    "lorenz63": (60.0, 60.0, 10.0, 1.0),
    "linear_gaussian": (1.0,),
}


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a named stream under one experiment seed."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def resolve_threads() -> int:
    """Worker count for the outer-particle loop, NPF_THREADS if set."""
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw is not None:
        count = int(raw)
        if count < 1:
            raise ValueError(f"{THREADS_ENV_VAR} must be a positive integer")
        return count
    return os.cpu_count() or 1


@dataclass(frozen=True)
class KernelSettings:
    kind: str = "truncated_gaussian"
    moment_order: float = 1.0
    variance_scales: tuple[float, ...] | None = None
    jitter_prob: float | None = None
    spread: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("truncated_gaussian", "mixture_dirac"):
            raise ValueError(f"unknown kernel kind: {self.kind!r}")


@dataclass(frozen=True)
class LinearGaussianSettings:
    a: float = 0.9
    q: float = 1.0
    r: float = 1.0
    support: tuple[float, float] = (-1.0, 1.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Desk-scale defaults; everything overridable from a JSON config."""

    model: str = "lorenz63"
    seed: int = 0
    n: int = 100
    m: int = 100
    n_obs: int = 300
    repeats: int = 10
    window_frac: float = 0.1
    budget_cap: int = 4_000_000
    sweep_sizes: tuple[int, ...] = (50, 100, 200)
    output_dir: str = "out"
    true_params: tuple[float, ...] | None = None
    kernel: KernelSettings = field(default_factory=KernelSettings)
    lorenz: LorenzConfig = field(default_factory=LorenzConfig)
    linear_gaussian: LinearGaussianSettings = field(default_factory=LinearGaussianSettings)

    def __post_init__(self):
        if self.model not in ("lorenz63", "linear_gaussian"):
            raise ValueError(f"unknown model: {self.model!r}")
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be positive")
        if self.n * self.m > self.budget_cap:
            raise ValueError(
                f"n * m = {self.n * self.m} exceeds the budget cap {self.budget_cap}"
            )
        if self.n_obs < 1:
            raise ValueError("n_obs must be positive")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")
        if not 0.0 < self.window_frac <= 0.5:
            raise ValueError("window_frac must lie in (0, 0.5]")
        if self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        if len(self.sweep_sizes) < 2 or any(s < 1 for s in self.sweep_sizes):
            raise ValueError("sweep_sizes needs at least two positive sizes")
        if not self.output_dir:
            raise ValueError("output_dir must be a nonempty path")


def _from_mapping(cls, data: dict):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    converted = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if isinstance(value, list):
            value = tuple(value)
        converted[f.name] = value
    return cls(**converted)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    nested = {}
    for key, cls in (
        ("kernel", KernelSettings),
        ("lorenz", LorenzConfig),
        ("linear_gaussian", LinearGaussianSettings),
    ):
        if key in data:
            sub = data.pop(key)
            if not isinstance(sub, dict):
                raise ValueError(f"{key} must be a mapping")
            if key == "lorenz" and "prior_mean" in sub:
                sub = dict(sub, prior_mean=tuple(sub["prior_mean"]))
            nested[key] = _from_mapping(cls, sub)
    cfg = _from_mapping(ExperimentConfig, data)
    return dataclasses.replace(cfg, **nested) if nested else cfg


def load_config(path: str | Path | None, seed: int | None = None) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
    else:
        cfg = config_from_dict(json.loads(Path(path).read_text()))
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return dataclasses.asdict(cfg)


def build_model(cfg: ExperimentConfig) -> tuple[ModelDefinition, np.ndarray]:
    """Model instance plus the true parameter vector used for simulation."""
    if cfg.model == "lorenz63":
        model = lorenz63.build_lorenz_model(cfg.lorenz)
        true = cfg.true_params or lorenz63.DEFAULT_TRUE_PARAMS
    else:
        lg = cfg.linear_gaussian
        model = build_linear_gaussian_model(lg.a, lg.q, lg.r, lg.support)
        true = cfg.true_params or (lg.a,)
    true = np.asarray(true, dtype=float)
    if true.size != model.d_theta:
        raise ValueError("true_params has the wrong dimension for the model")
    return model, true


def param_names(cfg: ExperimentConfig) -> tuple[str, ...]:
    return lorenz63.PARAM_NAMES if cfg.model == "lorenz63" else ("a",)


def build_kernel(cfg: ExperimentConfig, model: ModelDefinition) -> JitterKernel:
    box = model.support()
    ks = cfg.kernel
    if ks.kind == "truncated_gaussian":
        scales = ks.variance_scales or _DEFAULT_VARIANCE_SCALES[cfg.model]
        return TruncatedGaussianKernel(
            box=box, variance_scales=np.asarray(scales), moment_order=ks.moment_order
        )
    spread = None if ks.spread is None else np.asarray(ks.spread)
    return MixtureDiracKernel(
        box=box, moment_order=ks.moment_order, jitter_prob=ks.jitter_prob, spread=spread
    )


def no_jitter_kernel(model: ModelDefinition) -> MixtureDiracKernel:
    return MixtureDiracKernel(box=model.support(), jitter_prob=0.0)


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=10,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_manifest(
    out_dir: Path,
    cfg: ExperimentConfig,
    command: str,
    outputs: list[str],
    wall_clock_per_step: list[float] | None = None,
    extra: dict | None = None,
) -> Path:
    for name in outputs:
        target = out_dir / name
        if not target.is_file() or target.stat().st_size == 0:
            raise RuntimeError(f"declared output {name} is missing or empty")
    manifest = {
        "command": command,
        "config": config_to_dict(cfg),
        "git_describe": _git_describe(),
        "outputs": sorted(outputs),
        "threads": resolve_threads(),
    }
    if wall_clock_per_step is not None:
        manifest["wall_clock_per_step"] = wall_clock_per_step
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _simulate_observations(
    cfg: ExperimentConfig, model: ModelDefinition, true: np.ndarray, rng
) -> tuple[np.ndarray, object]:
    """Observation matrix (n_obs, d_y) plus the raw truth object."""
    if cfg.model == "lorenz63":
        truth = lorenz63.simulate_truth(
            cfg.lorenz, true, cfg.n_obs * cfg.lorenz.obs_gap, rng
        )
        return truth.observations, truth
    states, obs = simulate_linear_gaussian(model, cfg.n_obs, rng)
    return obs.reshape(-1, 1), (states, obs)


def run_simulate(cfg: ExperimentConfig, out_dir: str | Path) -> dict:
    """Draw ground truth plus observations and write truth/observation CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, true = build_model(cfg)
    rng = derive_rng(cfg.seed, _TRUTH_STREAM)
    observations, truth = _simulate_observations(cfg, model, true, rng)
    if cfg.model == "lorenz63":
        lorenz63.write_truth_csv(truth, cfg.lorenz, out / "truth.csv")
        lorenz63.write_observations_csv(truth, cfg.lorenz, out / "observations.csv")
    else:
        states, obs = truth
        write_csv(
            out / "truth.csv",
            ("epoch", "t_continuous", "x1", "y1"),
            [(t + 1, float(t + 1), states[t], obs[t]) for t in range(cfg.n_obs)],
        )
        write_csv(
            out / "observations.csv",
            ("epoch", "t_continuous", "y1"),
            [(t + 1, float(t + 1), obs[t]) for t in range(cfg.n_obs)],
        )
    write_manifest(
        out,
        cfg,
        "simulate",
        ["truth.csv", "observations.csv"],
        extra={"true_params": [float(v) for v in true]},
    )
    return {
        "out_dir": out,
        "observations": observations,
        "n_epochs": int(observations.shape[0]),
    }


def _write_run_outputs(
    out: Path,
    cfg: ExperimentConfig,
    run: FilterRun,
    true: np.ndarray,
    names: tuple[str, ...],
    d_x: int,
) -> None:
    theta_dim = len(names)
    header = (
        ["t", "ness"]
        + [f"param_mean_{k + 1}" for k in range(theta_dim)]
        + [f"state_mean_{k + 1}" for k in range(d_x)]
        + ["max_log_u"]
    )
    rows = []
    for t, out_t in enumerate(run.outputs, start=1):
        rows.append(
            [t, out_t.ness.ness]
            + [v for v in out_t.param_mean]
            + [v for v in out_t.state_mean]
            + [out_t.max_log_marginal]
        )
    write_csv(out / "steps.csv", header, rows)
    write_csv(
        out / "ness.csv",
        ("t", "ness", "n_distinct", "max_replicas"),
        [
            (t, o.ness.ness, o.ness.n_distinct, o.ness.max_replicas)
            for t, o in enumerate(run.outputs, start=1)
        ],
    )
    final = run.outputs[-1].param_mean
    write_csv(
        out / "final.csv",
        ("param", "estimate", "truth", "normalized_error"),
        [
            (names[k], final[k], true[k], normalized_abs_error(final[k], true[k]))
            for k in range(theta_dim)
        ],
    )


def run_npf(
    cfg: ExperimentConfig,
    out_dir: str | Path,
    observations_path: str | Path | None = None,
    jitter: bool = True,
) -> dict:
    """One nested-filter pass; writes steps.csv, ness.csv, final.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, true = build_model(cfg)
    if observations_path is None:
        observations, _ = _simulate_observations(
            cfg, model, true, derive_rng(cfg.seed, _TRUTH_STREAM)
        )
        truth_source = "simulated"
    else:
        observations = lorenz63.read_observations_csv(observations_path)
        if observations.shape[1] != model.d_y:
            raise ValueError("observation file dimension does not match the model")
        truth_source = str(observations_path)
    kernel = build_kernel(cfg, model) if jitter else no_jitter_kernel(model)
    threads = resolve_threads()
    run = run_filter(
        model,
        kernel,
        observations,
        cfg.n,
        cfg.m,
        derive_rng(cfg.seed, _FILTER_STREAM),
        n_threads=threads,
    )
    names = param_names(cfg)
    _write_run_outputs(out, cfg, run, true, names, model.d_x)
    write_manifest(
        out,
        cfg,
        "run" if jitter else "run --no-jitter",
        ["steps.csv", "ness.csv", "final.csv"],
        wall_clock_per_step=[float(s) for s in run.step_seconds],
        extra={
            "jitter": jitter,
            "truth_source": truth_source,
            "true_params": [float(v) for v in true],
        },
    )
    final = run.outputs[-1].param_mean
    return {
        "out_dir": out,
        "run": run,
        "final_estimate": final,
        "normalized_errors": {
            names[k]: normalized_abs_error(final[k], true[k]) for k in range(len(names))
        },
    }


def window_error(run: FilterRun, true: np.ndarray, frac: float, where: str) -> np.ndarray:
    """Mean normalized error per parameter over the first or last frac of steps."""
    outputs = run.outputs
    span = max(1, int(round(frac * len(outputs))))
    chunk = outputs[:span] if where == "first" else outputs[-span:]
    means = np.stack([o.param_mean for o in chunk])
    return np.array(
        [
            np.mean([normalized_abs_error(v, true[k]) for v in means[:, k]])
            for k in range(true.size)
        ]
    )


def run_sweep(
    cfg: ExperimentConfig, out_dir: str | Path, sizes: tuple[int, ...] | None = None
) -> dict:
    """Error-vs-size sweep with n = m, plus inverse-sqrt rate fits.

    Truth is re-simulated once per repeat and shared across sizes so the
    size comparison is paired.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = tuple(int(s) for s in (sizes or cfg.sweep_sizes))
    if len(sizes) < 2:
        raise ValueError("a sweep needs at least two sizes to compare")
    if any(s < 1 for s in sizes):
        raise ValueError("sweep sizes must be positive")
    if any(s * s > cfg.budget_cap for s in sizes):
        raise ValueError("a sweep size exceeds the budget cap with n = m")
    model, true = build_model(cfg)
    kernel = build_kernel(cfg, model)
    names = param_names(cfg)
    threads = resolve_threads()

    rows = []
    errors = {(size, name): [] for size in sizes for name in names}
    for rep in range(cfg.repeats):
        observations, _ = _simulate_observations(
            cfg, model, true, derive_rng(cfg.seed, _TRUTH_STREAM, rep)
        )
        for size in sizes:
            run = run_filter(
                model,
                kernel,
                observations,
                size,
                size,
                derive_rng(cfg.seed, _FILTER_STREAM, rep, size),
                n_threads=threads,
            )
            final_err = window_error(run, true, cfg.window_frac, "last")
            for k, name in enumerate(names):
                rows.append((size, rep, name, final_err[k]))
                errors[(size, name)].append(final_err[k])
    write_csv(out / "sweep.csv", ("n", "repeat", "param", "error"), rows)

    fits: dict[str, RateFit] = {}
    fit_rows = []
    for name in names:
        points = [(size, float(np.mean(errors[(size, name)]))) for size in sizes]
        fit = fit_inverse_sqrt_rate(points)
        fits[name] = fit
        fit_rows.append((name, fit.c_hat, fit.residual))
    write_csv(out / "ratefit.csv", ("param", "c_hat", "residual"), fit_rows)

    extra = {"sizes": list(sizes), "truth_per_repeat": True}
    if cfg.model == "lorenz63":
        extra["reference_rate_constants"] = LORENZ_REFERENCE_RATE_CONSTANTS
    write_manifest(out, cfg, "sweep", ["sweep.csv", "ratefit.csv"], extra=extra)
    return {"out_dir": out, "fits": fits, "errors": errors, "sizes": sizes}


@dataclass(frozen=True)
class KalmanCheckReport:
    mean_abs_deviation: float
    max_abs_deviation: float
    mean_log_marginal_gap: float
    max_log_marginal_gap: float
    passed: bool


def run_kalman_check(cfg: ExperimentConfig, out_dir: str | Path) -> KalmanCheckReport:
    """Bootstrap filter vs exact Kalman recursion on simulated data.

    Two independent routes to the same posterior: the particle answer must
    track the closed-form answer in filter mean and total log marginal.
    """
    if cfg.model != "linear_gaussian":
        raise ValueError("kalman-check requires model = linear_gaussian")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, _ = build_model(cfg)
    assert isinstance(model, LinearGaussianModel)
    theta = np.array([model.a])

    rows = []
    deviations = np.empty(cfg.repeats)
    gaps = np.empty(cfg.repeats)
    for rep in range(cfg.repeats):
        _, obs = simulate_linear_gaussian(
            model, cfg.n_obs, derive_rng(cfg.seed, _TRUTH_STREAM, rep)
        )
        exact = filter_linear_gaussian(
            model.a, model.q, model.r, model.prior_mean, model.prior_var, obs
        )
        _, history = run_bootstrap(
            model,
            theta,
            obs.reshape(-1, 1),
            cfg.m,
            derive_rng(cfg.seed, _FILTER_STREAM, rep),
        )
        pf_means = np.array([pset.particles.mean() for pset, _ in history])
        pf_log_marginal = float(sum(est.log_marginal for _, est in history))
        deviations[rep] = float(np.mean(np.abs(pf_means - exact.means)))
        gaps[rep] = abs(pf_log_marginal - exact.total_log_marginal)
        rows.append(
            (rep, deviations[rep], pf_log_marginal, exact.total_log_marginal, gaps[rep])
        )
    write_csv(
        out / "kalman.csv",
        ("repeat", "mean_abs_deviation", "pf_log_marginal", "kalman_log_marginal", "gap"),
        rows,
    )
    report = KalmanCheckReport(
        mean_abs_deviation=float(deviations.mean()),
        max_abs_deviation=float(deviations.max()),
        mean_log_marginal_gap=float(gaps.mean()),
        max_log_marginal_gap=float(gaps.max()),
        passed=bool(
            deviations.mean() < KALMAN_MEAN_DEVIATION_TOL
            and gaps.mean() < KALMAN_LOG_MARGINAL_TOL
        ),
    )
    write_manifest(
        out,
        cfg,
        "kalman-check",
        ["kalman.csv"],
        extra={
            "report": dataclasses.asdict(report),
            "tolerances": {
                "mean_abs_deviation": KALMAN_MEAN_DEVIATION_TOL,
                "log_marginal_gap": KALMAN_LOG_MARGINAL_TOL,
            },
        },
    )
    return report
