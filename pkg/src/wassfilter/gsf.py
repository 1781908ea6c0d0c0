"""Gaussian Sum Filter measurement update.

For a Gaussian-mixture prior under a linear Gaussian sensor, minimizing the
convex upper bound ``sum_i tr E[e_i+ e_i+^T]`` of the mixture posterior-error
transport cost decouples into one Kalman-gain problem per component:

    H_i* = S_i- C^T (C S_i- C^T + R)^-1,   G_i* = I - H_i* C.

Posterior weights follow the Bayesian reweighting

    w_i+ = w_i- N(y; C mu_i-, C S_i- C^T + R) / normalizer,

computed in log space with max-subtraction so distant components underflow
gracefully. Component order is preserved: posterior node i descends from
prior node i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ValidationError, WeightUnderflowError
from .gaussian import GaussianMixture, _as_vector, _chol_logpdf, _readonly
from .kalman import (LinearMeasurementModel, _apply_linear_update,
                     _innovation_chol, kalman_gains, update_error_cost)


@dataclass(frozen=True, eq=False)
class GsfUpdateResult:
    """Posterior mixture plus the per-component gains and posterior-error traces."""

    posterior: GaussianMixture
    gains: tuple
    component_costs: np.ndarray

    def __post_init__(self):
        if len(self.gains) != self.posterior.order:
            raise ValidationError(
                f"{len(self.gains)} gain pairs for a {self.posterior.order}-component posterior"
            )
        costs = np.asarray(self.component_costs, dtype=float)
        if costs.shape != (self.posterior.order,):
            raise ValidationError(f"component_costs has shape {costs.shape}")
        object.__setattr__(self, "gains", tuple(self.gains))
        object.__setattr__(self, "component_costs", _readonly(costs))


def posterior_log_weights(prior_weights, means, innovation_chols, y) -> np.ndarray:
    """Unnormalized posterior log weights: ``log w_i- + log N(y; C mu_i-, S_i)``.

    ``means`` are the predicted measurements ``C mu_i-`` and
    ``innovation_chols`` the lower Cholesky factors of the innovation
    covariances. Scale-invariant in the prior weights up to a common shift.
    """
    prior_weights = np.asarray(prior_weights, dtype=float)
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior_weights)
    log_like = np.array([
        _chol_logpdf(mean, chol, y[None, :])[0]
        for mean, chol in zip(means, innovation_chols)
    ])
    return log_prior + log_like


def _normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise WeightUnderflowError("all posterior weight likelihoods underflowed to zero")
    shifted = np.exp(log_w - log_w[finite].max())
    return shifted / shifted.sum()


def gsf_update(prior: GaussianMixture, model: LinearMeasurementModel, y) -> GsfUpdateResult:
    """One GSF measurement update: per-component Kalman updates plus reweighting."""
    y = _as_vector(y, "y")
    if y.shape[0] != model.meas_dim:
        raise ValidationError(f"measurement has dimension {y.shape[0]}, model expects {model.meas_dim}")
    if prior.dim != model.state_dim:
        raise ValidationError(f"prior has dimension {prior.dim}, model expects {model.state_dim}")

    gains = []
    nodes = []
    costs = []
    pred_means = []
    innovation_chols = []
    for i, (_, node) in enumerate(prior.components):
        try:
            _, innovation = _innovation_chol(node.cov, model)
            pair = kalman_gains(node.cov, model)
        except ConditioningError as exc:
            raise ConditioningError(f"component {i}: {exc}") from exc
        gains.append(pair)
        nodes.append(_apply_linear_update(node.mean, node.cov, pair, model, y))
        costs.append(update_error_cost(pair.H, node.cov, model))
        pred_means.append(model.C @ node.mean)
        innovation_chols.append(np.linalg.cholesky(innovation))

    log_w = posterior_log_weights(prior.weights, pred_means, innovation_chols, y)
    weights = _normalize_log_weights(log_w)
    posterior = GaussianMixture(tuple(zip(weights, nodes)))
    return GsfUpdateResult(posterior=posterior, gains=tuple(gains),
                           component_costs=np.array(costs))


def gsf_bound_cost(result: GsfUpdateResult) -> float:
    """Value of the convex upper bound the GSF minimizes: the unweighted sum
    of per-component posterior-error traces."""
    return float(result.component_costs.sum())
