import math

import numpy as np
import pytest

from compactbnn.nnet import ModelSpec, Task, forward
from compactbnn.posterior import (
    PriorConfig,
    log_likelihood,
    log_likelihood_classification,
    log_likelihood_regression,
    log_posterior,
    log_prior,
    log_prior_classification,
    log_prior_regression,
)


def test_regression_prior_values():
    assert log_prior_regression(np.zeros(2), 1.0, PriorConfig(1.0)) == pytest.approx(0.0)
    assert log_prior_regression(np.ones(2), 1.0, PriorConfig(1.0)) == pytest.approx(-1.0)
    got = log_prior_regression(np.zeros(2), math.e, PriorConfig(1.0, nu1=1.0, nu2=2.0))
    assert got == pytest.approx(-2 - 2 / math.e)
    assert got == pytest.approx(-2.7358, abs=1e-4)


def test_regression_prior_rejects_bad_tau():
    with pytest.raises(ValueError):
        log_prior_regression(np.zeros(2), 0.0)


def test_classification_prior_values():
    assert log_prior_classification(np.zeros(3), PriorConfig(1.0)) == 0.0
    assert log_prior_classification(np.array([3.0, 4.0]), PriorConfig(1.0)) == pytest.approx(-12.5)
    assert log_prior_classification(np.ones(10), PriorConfig(25.0)) == pytest.approx(-16.2944, abs=1e-4)


def test_prior_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(sigma_sq=0.0)
    with pytest.raises(ValueError):
        PriorConfig(nu1=-1.0)


def _zero_residual_regression(n, tau_sq):
    spec = ModelSpec(2, 3, 1)
    params = np.zeros(spec.n_params)
    params[-1] = math.log(tau_sq)
    x = np.random.default_rng(0).normal(size=(n, 2))
    return spec, params, x, np.zeros((n, 1))


def test_gaussian_likelihood_values():
    spec, params, x, y = _zero_residual_regression(9, 1 / (2 * math.pi))
    assert log_likelihood_regression(spec, params, x, y) == pytest.approx(0.0, abs=1e-12)
    spec, params, x, y = _zero_residual_regression(1, 0.5)
    got = log_likelihood_regression(spec, params, x, y + 1.0)
    assert got == pytest.approx(-0.5 * math.log(math.pi) - 1)
    assert got == pytest.approx(-1.5724, abs=1e-4)


def test_likelihood_additive_over_points():
    rng = np.random.default_rng(1)
    spec = ModelSpec(3, 4, 1)
    params = rng.normal(size=spec.n_params)
    x, y = rng.normal(size=(6, 3)), rng.normal(size=(6, 1))
    one = log_likelihood(spec, params, x, y)
    two = log_likelihood(spec, params, np.vstack([x, x]), np.vstack([y, y]))
    assert two == pytest.approx(2 * one)


def test_multinomial_likelihood_values():
    spec = ModelSpec(2, 2, 3, Task.CLASSIFICATION)
    x = np.zeros((2, 2))
    assert log_likelihood_classification(spec, np.zeros(spec.n_params), x, [0, 2]) == pytest.approx(
        2 * math.log(1 / 3))
    spec2 = ModelSpec(1, 1, 2, Task.CLASSIFICATION)
    assert log_likelihood(spec2, np.zeros(spec2.n_params), [[0.3]], [1]) == pytest.approx(math.log(0.5))


def test_multinomial_confident_correct_is_zero():
    spec = ModelSpec(1, 1, 2, Task.CLASSIFICATION)
    params = np.array([0.0, 0.0, 0.0, 0.0, -800.0, 800.0])
    assert log_likelihood(spec, params, [[1.0], [2.0]], [1, 1]) == pytest.approx(0.0, abs=1e-300)


def test_multinomial_floor_keeps_finite():
    spec = ModelSpec(1, 1, 2, Task.CLASSIFICATION)
    params = np.array([0.0, 0.0, 0.0, 0.0, -800.0, 800.0])
    ll = log_likelihood(spec, params, [[1.0]], [0])
    assert np.isfinite(ll)
    assert ll == pytest.approx(math.log(1e-300))


def test_label_out_of_range():
    spec = ModelSpec(1, 1, 2, Task.CLASSIFICATION)
    with pytest.raises(ValueError):
        log_likelihood(spec, np.zeros(spec.n_params), [[0.0]], [2])


def test_posterior_is_sum_over_random_configurations():
    rng = np.random.default_rng(2)
    for i in range(100):
        task = Task.CLASSIFICATION if i % 2 else Task.REGRESSION
        spec = ModelSpec(int(rng.integers(1, 4)), int(rng.integers(1, 4)), 3 if i % 2 else 1, task)
        params = rng.normal(size=spec.n_params)
        x = rng.normal(size=(5, spec.input_size))
        y = rng.integers(0, 3, 5) if i % 2 else rng.normal(size=(5, 1))
        cfg = PriorConfig(float(rng.uniform(0.5, 30)), float(rng.uniform(0, 2)), float(rng.uniform(0, 2)))
        assert log_posterior(spec, params, x, y, cfg) == pytest.approx(
            log_likelihood(spec, params, x, y) + log_prior(spec, params, cfg))


def test_posterior_classification_composition():
    spec = ModelSpec(2, 3, 4, Task.CLASSIFICATION)
    x = np.random.default_rng(3).normal(size=(7, 2))
    got = log_posterior(spec, np.zeros(spec.n_params), x, np.arange(7) % 4, PriorConfig(1.0))
    assert got == pytest.approx(7 * math.log(1 / 4))


def test_regression_posterior_direct_sum_oracle():
    rng = np.random.default_rng(4)
    spec = ModelSpec(3, 2, 1)
    cfg = PriorConfig(4.0, 0.7, 0.2)
    for _ in range(20):
        params = rng.normal(size=spec.n_params)
        x, y = rng.normal(size=(8, 3)), rng.normal(size=(8, 1))
        tau_sq = math.exp(params[-1])
        pred = forward(spec, params, x)[:, 0]
        total = 0.0
        for p_i, y_i in zip(pred, y[:, 0]):
            total += -0.5 * math.log(2 * math.pi * tau_sq) - (y_i - p_i) ** 2 / (2 * tau_sq)
        t = spec.n_weights
        total += -0.5 * t * math.log(cfg.sigma_sq) - sum(w * w for w in params[:t]) / (2 * cfg.sigma_sq)
        total += -(1 + cfg.nu1) * math.log(tau_sq) - cfg.nu2 / tau_sq
        assert log_posterior(spec, params, x, y, cfg) == pytest.approx(total, rel=1e-12)
