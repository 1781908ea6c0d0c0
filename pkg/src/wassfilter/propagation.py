"""Uncertainty propagation for the Duffing benchmark.

Holds the oscillator dynamics, a fixed-step RK4 integrator, vectorized
ensemble propagation, and an EM fitter that turns a propagated point cloud
back into a Gaussian mixture. The filters never see dynamics directly; they
consume the fitted mixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DivergenceError, FitError, ValidationError
from .gaussian import Gaussian, GaussianMixture

# Fraction of total responsibility mass below which a component counts as
# collapsed and gets reseeded.
_COLLAPSE_MASS = 1e-10
_MAX_RESEEDS = 3


def duffing_rhs(x, damping: float = 0.25, cubic: float = 1.0) -> np.ndarray:
    """Duffing oscillator vector field: ``(x2, -x1 - damping*x2 - cubic*x1^3)``.

    Works on a single state (shape ``(2,)``) or a stack of states
    (shape ``(..., 2)``).
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValidationError(f"state must have dimension 2, got shape {x.shape}")
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2, -x1 - damping * x2 - cubic * x1**3], axis=-1)


@dataclass(frozen=True)
class DuffingModel:
    """Benchmark dynamics plus integration cadence.

    ``dt`` is the integrator substep; ``sample_time`` the filter period and
    must be an integer multiple of ``dt``.
    """

    damping: float = 0.25
    cubic: float = 1.0
    dt: float = 0.01
    sample_time: float = 0.5

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        ratio = self.sample_time / self.dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValidationError(
                f"sample_time {self.sample_time} is not an integer multiple of dt {self.dt}"
            )

    @property
    def steps_per_sample(self) -> int:
        return int(round(self.sample_time / self.dt))

    def rhs(self, x) -> np.ndarray:
        return duffing_rhs(x, damping=self.damping, cubic=self.cubic)


def integrate_rk4(x0, rhs, dt: float, steps: int) -> np.ndarray:
    """Classical 4th-order Runge-Kutta for autonomous dynamics.

    ``rhs`` maps an array to a same-shaped array, so a whole ensemble can be
    advanced in one call. Raises :class:`DivergenceError` if the state leaves
    the finite range.
    """
    if dt <= 0.0:
        raise ValidationError(f"dt must be positive, got {dt}")
    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}")
    x = np.asarray(x0, dtype=float)
    for _ in range(steps):
        k1 = rhs(x)
        k2 = rhs(x + 0.5 * dt * k1)
        k3 = rhs(x + 0.5 * dt * k2)
        k4 = rhs(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError("integration produced a non-finite state")
    return x


def propagate_cloud(cloud, model: DuffingModel, duration: float) -> np.ndarray:
    """Advance every particle of an ``(N, 2)`` cloud by ``duration`` seconds.

    Deterministic; a divergent particle is reported by row index.
    """
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim != 2 or cloud.shape[1] != 2:
        raise ValidationError(f"cloud must be (N, 2), got shape {cloud.shape}")
    ratio = duration / model.dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValidationError(f"duration {duration} is not a multiple of dt {model.dt}")
    steps = int(round(ratio))
    x = cloud.copy()
    for _ in range(steps):
        k1 = model.rhs(x)
        k2 = model.rhs(x + 0.5 * model.dt * k1)
        k3 = model.rhs(x + 0.5 * model.dt * k2)
        k4 = model.rhs(x + model.dt * k3)
        x = x + (model.dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        finite = np.isfinite(x).all(axis=1)
        if not finite.all():
            bad = int(np.nonzero(~finite)[0][0])
            raise DivergenceError(f"particle {bad} diverged during propagation")
    return x


@dataclass(frozen=True)
class EmFitConfig:
    """EM settings for mixture fitting over a point cloud."""

    n_components: int = 10
    max_iters: int = 200
    tol: float = 1e-8
    covariance_floor: float = 1e-6
    init_seed: int | None = None
    restarts: int = 3

    def __post_init__(self):
        if self.n_components < 1:
            raise ValidationError(f"n_components must be >= 1, got {self.n_components}")
        if self.max_iters < 1 or self.restarts < 1:
            raise ValidationError("max_iters and restarts must be >= 1")
        if self.tol <= 0.0 or self.covariance_floor <= 0.0:
            raise ValidationError("tol and covariance_floor must be positive")


@dataclass(frozen=True, eq=False)
class EmDiagnostics:
    """Bookkeeping from the winning EM restart."""

    log_likelihoods: np.ndarray
    reseeds: int
    restart_index: int
    final_log_likelihood: float


def _floor_cov(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if float(w.min()) >= floor:
        return cov
    lifted = (v * np.clip(w, floor, None)) @ v.T
    return 0.5 * (lifted + lifted.T)


def _kmeanspp_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [points[int(rng.integers(n))]]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            centers.append(points[int(rng.integers(n))])
            continue
        idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, np.sum((points - centers[-1]) ** 2, axis=1))
    return np.stack(centers)


def _component_logpdfs(points: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(N, K) log densities of each point under each component."""
    n_points, dim = points.shape
    out = np.empty((n_points, means.shape[0]))
    for k in range(means.shape[0]):
        chol = np.linalg.cholesky(covs[k])
        diff = points - means[k]
        z = solve_triangular(chol, diff.T, lower=True)
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        out[:, k] = -0.5 * (dim * np.log(2.0 * np.pi) + logdet + np.sum(z * z, axis=0))
    return out


def _em_run(points: np.ndarray, config: EmFitConfig, rng: np.random.Generator):
    n, dim = points.shape
    k = config.n_components
    overall_cov = _floor_cov(np.cov(points, rowvar=False).reshape(dim, dim),
                             config.covariance_floor)

    centers = _kmeanspp_centers(points, k, rng)
    assign = np.argmin(((points[:, None, :] - centers[None, :, :]) ** 2).sum(-1), axis=1)
    weights = np.empty(k)
    means = np.empty((k, dim))
    covs = np.empty((k, dim, dim))
    for j in range(k):
        members = points[assign == j]
        weights[j] = max(len(members), 1) / n
        if len(members) == 0:
            means[j] = centers[j]
            covs[j] = overall_cov
            continue
        means[j] = members.mean(axis=0)
        diff = members - means[j]
        covs[j] = _floor_cov(diff.T @ diff / len(members), config.covariance_floor)
    weights /= weights.sum()

    lls = []
    reseeds = 0
    for _ in range(config.max_iters):
        with np.errstate(divide="ignore"):
            joint = _component_logpdfs(points, means, covs) + np.log(weights)
        m = joint.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(joint - m).sum(axis=1))
        ll = float(log_norm.sum())
        resp = np.exp(joint - log_norm[:, None])

        mass = resp.sum(axis=0)
        collapsed = np.nonzero(mass < _COLLAPSE_MASS * n)[0]
        if collapsed.size:
            reseeds += len(collapsed)
            if reseeds > _MAX_RESEEDS:
                raise FitError(f"EM failed after {reseeds} component reseeds")
            # Reseed each dead component at the point the mixture explains worst.
            worst = np.argsort(log_norm)
            for r, j in enumerate(collapsed):
                means[j] = points[worst[r]]
                covs[j] = overall_cov
                weights[j] = 1.0 / n
            weights /= weights.sum()
            continue

        weights = mass / n
        means = (resp.T @ points) / mass[:, None]
        for j in range(k):
            diff = points - means[j]
            covs[j] = _floor_cov((diff * resp[:, j:j + 1]).T @ diff / mass[j],
                                 config.covariance_floor)

        if lls and ll - lls[-1] <= config.tol * (1.0 + abs(lls[-1])):
            lls.append(ll)
            break
        lls.append(ll)

    if not lls:
        # Every iteration reseeded a component; score the final parameters.
        with np.errstate(divide="ignore"):
            joint = _component_logpdfs(points, means, covs) + np.log(weights)
        m = joint.max(axis=1, keepdims=True)
        lls.append(float((m[:, 0] + np.log(np.exp(joint - m).sum(axis=1))).sum()))

    mixture = GaussianMixture.from_unnormalized(
        weights, [Gaussian(means[j], covs[j], eig_floor=0.0) for j in range(k)]
    )
    return mixture, np.array(lls), reseeds


def fit_gmm_em(cloud, config: EmFitConfig, rng: np.random.Generator | None = None,
               details: bool = False):
    """Fit a Gaussian mixture to a point cloud by EM with k-means++ starts.

    Runs ``config.restarts`` independent initializations and keeps the run
    with the best final log-likelihood. Covariance eigenvalues are floored at
    ``config.covariance_floor`` after every M-step. With ``details=True``
    returns ``(mixture, EmDiagnostics)``.
    """
    points = np.asarray(cloud, dtype=float)
    if points.ndim != 2:
        raise ValidationError(f"cloud must be (N, n), got shape {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValidationError("cloud contains non-finite entries")
    if points.shape[0] < 10 * config.n_components:
        raise ValidationError(
            f"{points.shape[0]} points cannot support {config.n_components} components "
            "(need at least 10 per component)"
        )
    if rng is None:
        rng = np.random.default_rng(config.init_seed)

    best = None
    for restart in range(config.restarts):
        mixture, lls, reseeds = _em_run(points, config, rng)
        if best is None or lls[-1] > best[1][-1]:
            best = (mixture, lls, reseeds, restart)

    mixture, lls, reseeds, restart = best
    if details:
        return mixture, EmDiagnostics(log_likelihoods=lls, reseeds=reseeds,
                                      restart_index=restart,
                                      final_log_likelihood=float(lls[-1]))
    return mixture
