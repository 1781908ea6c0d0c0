"""Fast self-check battery behind the ``validate`` CLI subcommand.

Each suite re-exercises one library invariant on seeded random inputs and
returns a pass/fail verdict with a one-line detail. The full battery runs in
seconds; it is a smoke test, not a replacement for the pytest suite.
"""

from __future__ import annotations

import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .gaussian import Gaussian, GaussianMixture, spd_sqrt
from .harness import ExperimentConfig, run_experiment
from .kalman import LinearMeasurementModel, kalman_update
from .gsf import gsf_update
from .ngsf import NgsfOptions, NgsfProblem, ngsf_solve
from .propagation import DuffingModel, EmFitConfig
from .wasserstein import w2_gaussian_gaussian, w2_mixture_dirac
from .gaussian import DiracPoint


def _random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return a @ a.T + (0.3 + rng.uniform()) * np.eye(n)


def _suite_spd_sqrt(rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.choice([1, 2, 4, 8]))
        m = _random_spd(rng, n)
        s = spd_sqrt(m)
        worst = max(worst, np.linalg.norm(s @ s - m) / np.linalg.norm(m))
    return worst < 1e-10, f"worst reconstruction error {worst:.2e}"


def _suite_w2(rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.choice([1, 2, 3]))
        a = Gaussian(rng.standard_normal(n), _random_spd(rng, n))
        b = Gaussian(rng.standard_normal(n), _random_spd(rng, n))
        worst = max(worst, abs(w2_gaussian_gaussian(a, b) - w2_gaussian_gaussian(b, a)))
        worst = max(worst, abs(w2_gaussian_gaussian(a, a)))
    mix = GaussianMixture.from_unnormalized(
        [1.0, 2.0], [Gaussian([0.0], [[1.0]]), Gaussian([3.0], [[2.0]])])
    d = DiracPoint([0.5])
    by_hand = (1.0 / 3.0) * (0.25 + 1.0) + (2.0 / 3.0) * (6.25 + 2.0)
    worst = max(worst, abs(w2_mixture_dirac(mix, d) - by_hand))
    return worst < 1e-10, f"worst identity residual {worst:.2e}"


def _suite_kalman(rng):
    worst = 0.0
    for _ in range(20):
        n = int(rng.choice([1, 2, 4]))
        m = int(rng.choice([1, 2]))
        sigma = _random_spd(rng, n)
        model = LinearMeasurementModel(rng.standard_normal((m, n)), _random_spd(rng, m))
        x = rng.standard_normal(n)
        y = rng.standard_normal(m)
        post = kalman_update(Gaussian(x, sigma), sigma, model, y)
        info_post = np.linalg.inv(np.linalg.inv(sigma) + model.C.T @ np.linalg.inv(model.R) @ model.C)
        info_mean = info_post @ (np.linalg.inv(sigma) @ x + model.C.T @ np.linalg.inv(model.R) @ y)
        worst = max(worst, np.linalg.norm(post.cov - info_post) / np.linalg.norm(info_post))
        worst = max(worst, np.linalg.norm(post.mean - info_mean) / max(1.0, np.linalg.norm(info_mean)))
    return worst < 1e-12, f"worst information-form deviation {worst:.2e}"


def _suite_gsf(rng):
    ok = True
    detail = "simplex and contraction hold"
    for _ in range(20):
        order = int(rng.choice([2, 5]))
        nodes = [Gaussian(rng.standard_normal(2), _random_spd(rng, 2)) for _ in range(order)]
        prior = GaussianMixture.from_unnormalized(rng.uniform(0.2, 1.0, order), nodes)
        model = LinearMeasurementModel([[1.0, 0.0]], [[0.4]])
        res = gsf_update(prior, model, rng.standard_normal(1))
        w = res.posterior.weights
        if abs(w.sum() - 1.0) > 1e-12 or w.min() < 0.0:
            return False, f"posterior weights off simplex: sum={w.sum()!r}"
        for node, post in zip(prior.nodes, res.posterior.nodes):
            if np.trace(post.cov) > np.trace(node.cov) + 1e-12:
                return False, "posterior trace exceeded prior trace"
    return ok, detail


def _suite_ngsf(rng):
    worst_gap = -np.inf
    for _ in range(10):
        order = int(rng.choice([2, 5]))
        nodes = [Gaussian(rng.standard_normal(2), _random_spd(rng, 2)) for _ in range(order)]
        prior = GaussianMixture.from_unnormalized(rng.uniform(0.2, 1.0, order), nodes)
        model = LinearMeasurementModel([[1.0, 0.0]], [[0.4]])
        problem = NgsfProblem.from_gsf(prior, model, rng.standard_normal(1))
        sol = ngsf_solve(problem, NgsfOptions())
        diffs = np.diff(sol.cost_trajectory)
        if diffs.size and diffs.max() > 1e-12:
            return False, f"cost trajectory increased by {diffs.max():.2e}"
        worst_gap = max(worst_gap, sol.cost_trajectory[-1] - sol.cost_trajectory[0])
    return worst_gap <= 1e-12, f"worst final-minus-warm gap {worst_gap:.2e}"


def _suite_determinism(rng):
    config = ExperimentConfig(
        duffing=DuffingModel(dt=0.05),
        em=EmFitConfig(n_components=3, max_iters=50, restarts=2),
        ensemble_size=400,
        horizon_steps=2,
        master_seed=int(rng.integers(1 << 16)),
        filters=("gsf", "ngsf"),
    )

    def _snapshot(root: Path) -> dict:
        return {p.relative_to(root): p.read_bytes()
                for p in sorted(root.rglob("*")) if p.is_file()}

    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "run"
        run_experiment(replace(config, output_dir=str(out)))
        first = _snapshot(out)
        run_experiment(replace(config, output_dir=str(out)))
        second = _snapshot(out)
    if first != second:
        changed = [str(k) for k in first if first[k] != second.get(k)]
        return False, f"second run changed bytes in {changed[:3]}"
    return True, f"{len(first)} files byte-identical across reruns"


SUITES = (
    ("spd_sqrt_reconstruction", _suite_spd_sqrt),
    ("wasserstein_identities", _suite_w2),
    ("kalman_information_form", _suite_kalman),
    ("gsf_simplex_contraction", _suite_gsf),
    ("ngsf_descent_dominance", _suite_ngsf),
    ("experiment_determinism", _suite_determinism),
)


def run_validation(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run every suite with a deterministic seed; returns (name, ok, detail) rows."""
    results = []
    for index, (name, suite) in enumerate(SUITES):
        rng = np.random.default_rng([seed, index])
        try:
            ok, detail = suite(rng)
        except Exception as exc:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, ok, detail))
    return results
