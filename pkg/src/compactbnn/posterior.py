"""Log-priors, log-likelihoods and log-posteriors for the network models.

All densities are unnormalized where the constant does not depend on the
parameters, and every quantity is kept in log space.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .nnet import Task, check_inputs, check_params

__all__ = [
    "PriorConfig",
    "log_prior_regression",
    "log_prior_classification",
    "log_prior",
    "log_likelihood_regression",
    "log_likelihood_classification",
    "log_likelihood",
    "log_posterior",
]


@dataclass(frozen=True)
class PriorConfig:
    """Gaussian prior variance on the weights and inverse-Gamma terms for tau^2."""

    sigma_sq: float = 25.0
    nu1: float = 0.0
    nu2: float = 0.0

    def __post_init__(self):
        if not self.sigma_sq > 0:
            raise ValueError("sigma_sq must be positive")
        if self.nu1 < 0 or self.nu2 < 0:
            raise ValueError("nu1 and nu2 must be nonnegative")


def _gaussian_term(theta, sigma_sq):
    theta = np.asarray(theta, dtype=float)
    t = theta.shape[0]
    return -0.5 * t * math.log(sigma_sq) - float(np.dot(theta, theta)) / (2.0 * sigma_sq)


def log_prior_regression(theta, tau_sq, cfg=PriorConfig()):
    """Gaussian prior on ``theta`` plus the inverse-Gamma terms for ``tau_sq``."""
    if not tau_sq > 0:
        raise ValueError(f"tau_sq must be positive, got {tau_sq}")
    return (_gaussian_term(theta, cfg.sigma_sq)
            - (1.0 + cfg.nu1) * math.log(tau_sq) - cfg.nu2 / tau_sq)


def log_prior_classification(theta, cfg=PriorConfig()):
    return _gaussian_term(theta, cfg.sigma_sq)


def log_prior(spec, params, cfg=PriorConfig()):
    """Task-appropriate log-prior of a full state vector."""
    params = check_params(spec, params)
    theta = params[:spec.n_weights]
    if spec.task is Task.REGRESSION:
        return log_prior_regression(theta, math.exp(params[-1]), cfg)
    return log_prior_classification(theta, cfg)


def _regression_targets(spec, y, n):
    y = np.asarray(y, dtype=float).reshape(n, -1)
    if y.shape[1] != spec.output_size:
        raise ValueError(f"regression targets need {spec.output_size} columns, got {y.shape[1]}")
    return np.ascontiguousarray(y)


def log_likelihood_regression(spec, params, x, y):
    """Gaussian log-likelihood with noise variance ``exp(params[-1])``."""
    if spec.task is not Task.REGRESSION:
        raise ValueError("log_likelihood_regression needs a regression model")
    params = check_params(spec, params)
    x = check_inputs(spec, x)
    if x.shape[0] < 1:
        raise ValueError("need at least one observation")
    tau_sq = math.exp(params[-1])
    if not tau_sq > 0:
        raise ValueError("tau^2 underflowed to zero")
    y = _regression_targets(spec, y, x.shape[0])
    return float(_kernels.NUMPY.log_likelihood(params, x, y, spec.hidden_size, spec.output_size,
                                               _kernels.REGRESSION))


def log_likelihood_classification(spec, params, x, labels):
    """Multinomial log-likelihood of integer ``labels`` in ``{0..K-1}``."""
    from .data import one_hot

    if spec.task is not Task.CLASSIFICATION:
        raise ValueError("log_likelihood_classification needs a classification model")
    params = check_params(spec, params)
    x = check_inputs(spec, x)
    z = one_hot(labels, spec.output_size)
    if z.shape[0] != x.shape[0]:
        raise ValueError("labels and inputs disagree in length")
    return float(_kernels.NUMPY.log_likelihood(params, x, z, spec.hidden_size, spec.output_size,
                                               _kernels.CLASSIFICATION))


def log_likelihood(spec, params, x, y):
    if spec.task is Task.REGRESSION:
        return log_likelihood_regression(spec, params, x, y)
    return log_likelihood_classification(spec, params, x, y)


def log_posterior(spec, params, x, y, cfg=PriorConfig()):
    """Unnormalized log-posterior: log-likelihood + log-prior."""
    return log_likelihood(spec, params, x, y) + log_prior(spec, params, cfg)
