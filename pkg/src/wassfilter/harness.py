"""Experiment runner for the Duffing benchmark.

One step of the pipeline: integrate the truth, propagate each filter's
posterior-sampled cloud, fit a mixture prior, draw a shared measurement, run
every enabled filter's update, moment-match a point estimate, and resample
each filter's posterior into its next prior cloud.

Every random draw comes from a generator keyed on
``(master_seed, stream, step, filter)``, so reruns are bit-identical and all
filters in a run see the same initial cloud and the same measurements. At the
first step the filters' posteriors have not diverged yet, so the propagated
cloud is fitted once and the identical mixture object is handed to every
filter (paired fairness).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import HarnessError, ValidationError
from .gaussian import (Gaussian, GaussianMixture, _readonly, mixture_mean_cov,
                       sample_mixture)
from .kalman import LinearMeasurementModel, _psd_factor, kalman_update
from .gsf import gsf_update
from .ngsf import NgsfOptions, NgsfProblem, apply_ngsf_solution, ngsf_solve
from .propagation import DuffingModel, EmFitConfig, fit_gmm_em, integrate_rk4, propagate_cloud

KNOWN_FILTERS = ("gsf", "ngsf", "kf_momentmatch")

# Stream tags for seed derivation. Values are part of the output contract:
# changing them changes every emitted file. Streams are keyed by step only,
# never by filter: every filter draws from its own fresh generator seeded
# identically (common random numbers), so filters whose posteriors coincide
# produce bit-identical clouds and fits, and diverged filters still share a
# paired noise realization.
_STREAM_INIT = 0
_STREAM_MEAS = 1
_STREAM_EMFIT = 2
_STREAM_RESAMPLE = 3
_STREAM_RUN = 4


def _derived_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, key)]))


def _default_measurement() -> LinearMeasurementModel:
    # Scalar position sensor with noise variance 0.1.
    return LinearMeasurementModel(C=[[1.0, 0.0]], R=[[0.1]])


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Resolved experiment settings; every field has a usable default."""

    duffing: DuffingModel = field(default_factory=DuffingModel)
    em: EmFitConfig = field(default_factory=EmFitConfig)
    measurement: LinearMeasurementModel = field(default_factory=_default_measurement)
    ensemble_size: int = 5000
    horizon_steps: int = 10
    true_x0: np.ndarray = (1.0, 1.0)
    master_seed: int = 0
    filters: tuple = ("gsf", "ngsf")
    ngsf: NgsfOptions = field(default_factory=NgsfOptions)
    output_dir: str | None = None
    save_clouds: bool = True

    def __post_init__(self):
        x0 = np.asarray(self.true_x0, dtype=float)
        if x0.shape != (2,) or not np.all(np.isfinite(x0)):
            raise ValidationError(f"true_x0 must be a finite 2-vector, got {self.true_x0!r}")
        if self.ensemble_size < 1:
            raise ValidationError(f"ensemble_size must be >= 1, got {self.ensemble_size}")
        if self.horizon_steps < 0:
            raise ValidationError(f"horizon_steps must be >= 0, got {self.horizon_steps}")
        if self.master_seed < 0:
            raise ValidationError(f"master_seed must be >= 0, got {self.master_seed}")
        filters = tuple(self.filters)
        if not filters:
            raise ValidationError("at least one filter must be enabled")
        unknown = [f for f in filters if f not in KNOWN_FILTERS]
        if unknown:
            raise ValidationError(f"unknown filters {unknown}; known: {list(KNOWN_FILTERS)}")
        if len(set(filters)) != len(filters):
            raise ValidationError(f"duplicate filter names in {filters}")
        object.__setattr__(self, "true_x0", _readonly(x0))
        object.__setattr__(self, "filters", filters)

    def to_json_dict(self) -> dict:
        return {
            "duffing": {
                "damping": self.duffing.damping,
                "cubic": self.duffing.cubic,
                "dt": self.duffing.dt,
                "sample_time": self.duffing.sample_time,
            },
            "em": {
                "n_components": self.em.n_components,
                "max_iters": self.em.max_iters,
                "tol": self.em.tol,
                "covariance_floor": self.em.covariance_floor,
                "init_seed": self.em.init_seed,
                "restarts": self.em.restarts,
            },
            "measurement": {
                "C": self.measurement.C.tolist(),
                "R": self.measurement.R.tolist(),
            },
            "ensemble_size": self.ensemble_size,
            "horizon_steps": self.horizon_steps,
            "true_x0": self.true_x0.tolist(),
            "master_seed": self.master_seed,
            "filters": list(self.filters),
            "ngsf": {
                "max_iters": self.ngsf.max_iters,
                "tol": self.ngsf.tol,
                "step_policy": self.ngsf.step_policy,
            },
            "output_dir": self.output_dir,
            "save_clouds": self.save_clouds,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ExperimentConfig":
        """Build a config from a possibly partial JSON dict; missing keys keep defaults."""
        if not isinstance(data, dict):
            raise ValidationError("config JSON must be an object")
        known = {"duffing", "em", "measurement", "ensemble_size", "horizon_steps",
                 "true_x0", "master_seed", "filters", "ngsf", "output_dir", "save_clouds"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        if "duffing" in data:
            kwargs["duffing"] = DuffingModel(**data["duffing"])
        if "em" in data:
            kwargs["em"] = EmFitConfig(**data["em"])
        if "measurement" in data:
            kwargs["measurement"] = LinearMeasurementModel(**data["measurement"])
        if "ngsf" in data:
            kwargs["ngsf"] = NgsfOptions(**data["ngsf"])
        for key in ("ensemble_size", "horizon_steps", "true_x0", "master_seed",
                    "filters", "output_dir", "save_clouds"):
            if key in data:
                kwargs[key] = tuple(data[key]) if key == "filters" else data[key]
        return cls(**kwargs)


@dataclass(eq=False)
class FilterStepRecord:
    """One filter's work at one step."""

    name: str
    prior: GaussianMixture
    posterior: GaussianMixture
    estimate: np.ndarray
    estimate_cov: np.ndarray
    error: np.ndarray
    prior_cloud: np.ndarray
    wall_time: float
    warm_cost: float | None = None
    final_cost: float | None = None
    ngsf_iterations: int | None = None
    ngsf_converged: bool | None = None


@dataclass(eq=False)
class StepRecord:
    step: int
    time: float
    true_state: np.ndarray
    measurement: np.ndarray
    filters: dict


@dataclass(eq=False)
class ExperimentResult:
    config: ExperimentConfig
    initial_state: np.ndarray
    initial_cloud: np.ndarray
    records: list
    summary: dict


def _moment_match_update(prior: GaussianMixture, model: LinearMeasurementModel, y):
    """Single-Gaussian Kalman baseline on the moment-matched prior."""
    mean, cov = mixture_mean_cov(prior)
    posterior = kalman_update(Gaussian(mean, cov, eig_floor=0.0), cov, model, y)
    return GaussianMixture(((1.0, posterior),))


def _summarize(records: list, filters: tuple) -> dict:
    summary: dict = {"steps": len(records), "filters": list(filters), "per_filter": {}}
    if not records:
        return summary
    for name in filters:
        errors = np.stack([rec.filters[name].error for rec in records])
        mean_err = errors.mean(axis=0)
        summary["per_filter"][name] = {
            "rmse": np.sqrt((errors ** 2).mean(axis=0)).tolist(),
            "error_variance": ((errors - mean_err) ** 2).mean(axis=0).tolist(),
            "mean_error": mean_err.tolist(),
        }
    if "ngsf" in filters:
        warm = np.array([rec.filters["ngsf"].warm_cost for rec in records])
        final = np.array([rec.filters["ngsf"].final_cost for rec in records])
        summary["ngsf_objective"] = {
            "mean_warm_cost": float(warm.mean()),
            "mean_final_cost": float(final.mean()),
            "mean_cost_gap": float((final - warm).mean()),
            "dominance_fraction": float(np.mean(final <= warm + 1e-12)),
        }
    return summary


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run one seeded experiment; emits output files when ``config.output_dir`` is set.

    Any module failure aborts the run with the step index and module named;
    records accumulated so far are flushed to the output directory first.
    """
    seed = config.master_seed
    model = config.measurement
    duffing = config.duffing
    x_true = np.array(config.true_x0)

    init_rng = _derived_rng(seed, _STREAM_INIT)
    initial_cloud = x_true + init_rng.standard_normal((config.ensemble_size, 2))
    clouds = {name: initial_cloud for name in config.filters}

    r_factor = _psd_factor(model.R)
    records: list[StepRecord] = []

    def _abort(step: int, module: str, exc: Exception):
        result = ExperimentResult(config=config, initial_state=np.array(config.true_x0),
                                  initial_cloud=initial_cloud, records=records,
                                  summary=_summarize(records, config.filters))
        if config.output_dir is not None:
            try:
                emit_outputs(result, config.output_dir)
            except OSError:
                pass
        raise HarnessError(f"step {step}, module {module}: {exc}") from exc

    for step in range(1, config.horizon_steps + 1):
        try:
            x_true = integrate_rk4(x_true, duffing.rhs, duffing.dt, duffing.steps_per_sample)
        except Exception as exc:
            _abort(step, "propagation", exc)

        meas_rng = _derived_rng(seed, _STREAM_MEAS, step)
        noise = meas_rng.standard_normal(model.meas_dim) @ r_factor.T
        y = model.C @ x_true + noise

        # Prepare per-filter priors. Filters share one cloud and one fit at
        # step 1; afterwards each filter owns its lineage.
        priors: dict[str, GaussianMixture] = {}
        prior_clouds: dict[str, np.ndarray] = {}
        if step == 1:
            try:
                propagated = propagate_cloud(initial_cloud, duffing, duffing.sample_time)
            except Exception as exc:
                _abort(step, "propagation", exc)
            try:
                shared = fit_gmm_em(propagated, config.em,
                                    _derived_rng(seed, _STREAM_EMFIT, step))
            except Exception as exc:
                _abort(step, "em_fit", exc)
            for name in config.filters:
                priors[name] = shared
                prior_clouds[name] = propagated
        else:
            for name in config.filters:
                try:
                    propagated = propagate_cloud(clouds[name], duffing, duffing.sample_time)
                except Exception as exc:
                    _abort(step, "propagation", exc)
                try:
                    priors[name] = fit_gmm_em(propagated, config.em,
                                              _derived_rng(seed, _STREAM_EMFIT, step))
                except Exception as exc:
                    _abort(step, "em_fit", exc)
                prior_clouds[name] = propagated

        step_filters: dict[str, FilterStepRecord] = {}
        for name in config.filters:
            prior = priors[name]
            tic = time.perf_counter()
            extras: dict = {}
            try:
                if name == "gsf":
                    posterior = gsf_update(prior, model, y).posterior
                elif name == "ngsf":
                    warm = gsf_update(prior, model, y)
                    problem = NgsfProblem.from_gsf(prior, model, y, gsf_result=warm)
                    solution = ngsf_solve(problem, config.ngsf)
                    posterior = apply_ngsf_solution(problem, solution).posterior
                    extras = {
                        "warm_cost": float(solution.cost_trajectory[0]),
                        "final_cost": float(solution.cost_trajectory[-1]),
                        "ngsf_iterations": solution.iterations,
                        "ngsf_converged": solution.converged,
                    }
                else:
                    posterior = _moment_match_update(prior, model, y)
            except Exception as exc:
                _abort(step, name, exc)
            try:
                resample_rng = _derived_rng(seed, _STREAM_RESAMPLE, step)
                clouds[name] = sample_mixture(posterior, config.ensemble_size, resample_rng)
            except Exception as exc:
                _abort(step, "resample", exc)
            wall = time.perf_counter() - tic

            estimate, est_cov = mixture_mean_cov(posterior)
            step_filters[name] = FilterStepRecord(
                name=name, prior=prior, posterior=posterior,
                estimate=estimate, estimate_cov=est_cov,
                error=estimate - x_true, prior_cloud=prior_clouds[name],
                wall_time=wall, **extras)

        records.append(StepRecord(step=step, time=step * duffing.sample_time,
                                  true_state=x_true.copy(), measurement=np.array(y),
                                  filters=step_filters))

    result = ExperimentResult(config=config, initial_state=np.array(config.true_x0),
                              initial_cloud=initial_cloud, records=records,
                              summary=_summarize(records, config.filters))
    if config.output_dir is not None:
        emit_outputs(result, config.output_dir)
    return result


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_outputs(result: ExperimentResult, directory) -> list[Path]:
    """Write config.json, timeseries.csv, cloud snapshots, mixtures and summary.json.

    All files are plain JSON/CSV with deterministic formatting, so identical
    runs produce byte-identical trees. Per-step wall times stay in memory;
    they are the one record field excluded from files.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    config = result.config

    config_path = directory / "config.json"
    config_path.write_text(json.dumps(config.to_json_dict(), indent=2, sort_keys=True) + "\n")
    written.append(config_path)

    m = config.measurement.meas_dim
    header = ["step", "time", "true_x1", "true_x2"]
    header += [f"meas_y{j + 1}" for j in range(m)]
    for name in config.filters:
        header += [f"{name}_est_x1", f"{name}_est_x2", f"{name}_sd_x1", f"{name}_sd_x2"]
    lines = [",".join(header)]
    for rec in result.records:
        row = [str(rec.step), _fmt(rec.time), _fmt(rec.true_state[0]), _fmt(rec.true_state[1])]
        row += [_fmt(v) for v in rec.measurement]
        for name in config.filters:
            fr = rec.filters[name]
            sd = np.sqrt(np.diag(fr.estimate_cov))
            row += [_fmt(fr.estimate[0]), _fmt(fr.estimate[1]), _fmt(sd[0]), _fmt(sd[1])]
        lines.append(",".join(row))
    ts_path = directory / "timeseries.csv"
    ts_path.write_text("\n".join(lines) + "\n")
    written.append(ts_path)

    mix_dir = directory / "mixtures"
    mix_dir.mkdir(exist_ok=True)
    for rec in result.records:
        for name in config.filters:
            fr = rec.filters[name]
            for tag, mix in (("prior", fr.prior), ("posterior", fr.posterior)):
                path = mix_dir / f"step{rec.step:03d}_{name}_{tag}.json"
                path.write_text(json.dumps(mix.to_json_dict(), sort_keys=True) + "\n")
                written.append(path)

    if config.save_clouds:
        cloud_dir = directory / "clouds"
        cloud_dir.mkdir(exist_ok=True)

        def _write_cloud(path: Path, cloud: np.ndarray):
            rows = ["x1,x2"] + [f"{_fmt(p[0])},{_fmt(p[1])}" for p in cloud]
            path.write_text("\n".join(rows) + "\n")
            written.append(path)

        _write_cloud(cloud_dir / "step000_init.csv", result.initial_cloud)
        for rec in result.records:
            for name in config.filters:
                _write_cloud(cloud_dir / f"step{rec.step:03d}_{name}_prior.csv",
                             rec.filters[name].prior_cloud)

    summary_path = directory / "summary.json"
    summary_payload = dict(result.summary)
    summary_payload["initial_state"] = result.initial_state.tolist()
    summary_path.write_text(json.dumps(summary_payload, indent=2, sort_keys=True) + "\n")
    written.append(summary_path)
    return written


@dataclass(eq=False)
class ComparisonResult:
    """Aggregated paired Monte Carlo comparison."""

    n_runs: int
    filters: tuple
    per_filter: dict
    paired: dict | None
    run_summaries: list

    def to_json_dict(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "filters": list(self.filters),
            "per_filter": self.per_filter,
            "paired": self.paired,
        }

    def to_text(self) -> str:
        lines = [f"paired Monte Carlo over {self.n_runs} runs"]
        header = f"{'filter':<16}{'rmse_x1':>12}{'rmse_x2':>12}{'var_x1':>12}{'var_x2':>12}"
        lines.append(header)
        for name in self.filters:
            row = self.per_filter[name]
            lines.append(f"{name:<16}{row['rmse'][0]:>12.6f}{row['rmse'][1]:>12.6f}"
                         f"{row['error_variance'][0]:>12.6f}{row['error_variance'][1]:>12.6f}")
        if self.paired is not None:
            gap = self.paired["mean_cost_gap"]
            lines.append(f"mean nGSF-GSF exact-objective gap: {gap:.6e} "
                         f"(dominance {self.paired['cost_dominance_fraction']:.0%})")
            for state, counts in self.paired["error_variance_signs"].items():
                lines.append(
                    f"error variance {state}: nGSF better in {counts['ngsf_better']}"
                    f"/{self.n_runs} runs (mean paired diff {counts['mean_diff']:+.6e})")
        return "\n".join(lines)


def monte_carlo_compare(config: ExperimentConfig, n_runs: int) -> ComparisonResult:
    """Run paired experiments with per-run seeds shared across filters.

    Each run derives its own master seed from the config seed, so all filters
    inside a run see identical clouds and measurements while runs stay
    independent.
    """
    if n_runs < 2:
        raise ValidationError(f"n_runs must be >= 2, got {n_runs}")
    if config.horizon_steps < 1:
        raise ValidationError("monte_carlo_compare needs horizon_steps >= 1")

    run_summaries = []
    all_errors: dict[str, list] = {name: [] for name in config.filters}
    cost_gaps = []
    for run in range(n_runs):
        run_seed = int(np.random.SeedSequence(
            [config.master_seed, _STREAM_RUN, run]).generate_state(1)[0])
        run_config = replace(config, master_seed=run_seed, output_dir=None)
        result = run_experiment(run_config)
        run_summaries.append(result.summary)
        for name in config.filters:
            all_errors[name].append(np.stack(
                [rec.filters[name].error for rec in result.records]))
        if "ngsf" in config.filters:
            cost_gaps.append([
                rec.filters["ngsf"].final_cost - rec.filters["ngsf"].warm_cost
                for rec in result.records
            ])

    per_filter = {}
    for name in config.filters:
        errors = np.concatenate(all_errors[name])
        mean_err = errors.mean(axis=0)
        per_filter[name] = {
            "rmse": np.sqrt((errors ** 2).mean(axis=0)).tolist(),
            "error_variance": ((errors - mean_err) ** 2).mean(axis=0).tolist(),
        }

    paired = None
    if "ngsf" in config.filters and "gsf" in config.filters:
        gaps = np.array(cost_gaps)
        signs = {}
        for j, state in enumerate(("x1", "x2")):
            diffs = []
            for summary in run_summaries:
                var_n = summary["per_filter"]["ngsf"]["error_variance"][j]
                var_g = summary["per_filter"]["gsf"]["error_variance"][j]
                diffs.append(var_n - var_g)
            diffs = np.array(diffs)
            signs[state] = {
                "ngsf_better": int(np.sum(diffs < 0)),
                "gsf_better": int(np.sum(diffs > 0)),
                "ties": int(np.sum(diffs == 0)),
                "mean_diff": float(diffs.mean()),
            }
        paired = {
            "mean_cost_gap": float(gaps.mean()),
            "cost_dominance_fraction": float(np.mean(gaps <= 1e-12)),
            "error_variance_signs": signs,
        }

    return ComparisonResult(n_runs=n_runs, filters=config.filters,
                            per_filter=per_filter, paired=paired,
                            run_summaries=run_summaries)
