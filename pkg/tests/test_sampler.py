import math

import numpy as np
import pytest
from conftest import batch_means_se, gaussian_data, gaussian_target, step_target, toy_regression
from hypothesis import given, settings, strategies as st

from compactbnn import _kernels
from compactbnn.posterior import PriorConfig
from compactbnn.pruning import Method, PruneMask
from compactbnn.sampler import (
    Chain,
    Mode,
    SamplerConfig,
    acceptance_log_probability,
    langevin_q_correction,
    load_chain,
    propose,
    resample_chain,
    resample_config,
    run_mh,
    sample_chain,
    save_chain,
)

BACKENDS = ["numba", "numpy"]


class ZeroRng:
    def standard_normal(self, size=None):
        return np.zeros(size) if size is not None else 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(max_samples=0)
    with pytest.raises(ValueError):
        SamplerConfig(burn_in_fraction=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(langevin_probability=1.5)
    with pytest.raises(ValueError):
        SamplerConfig(proposal_std=0.0)


def test_defaults():
    cfg = SamplerConfig()
    assert (cfg.max_samples, cfg.burn_in_fraction, cfg.step_size_epsilon, cfg.proposal_std) == (50000, 0.5, 0.02,
                                                                                             0.025)
    assert (cfg.tau_proposal_std, cfg.langevin_probability) == (0.2, 0.5)


def test_langevin_zero_gradient_zero_noise_is_identity():
    theta = np.array([0.3, -1.2])
    prop, mean = propose(theta, np.zeros(2), SamplerConfig(), Mode.LANGEVIN, ZeroRng())
    np.testing.assert_array_equal(prop, theta)
    np.testing.assert_array_equal(mean, theta)


def test_langevin_mean_half_step():
    _, mean = propose(np.zeros(2), np.array([1.0, 0.0]), SamplerConfig(step_size_epsilon=0.1), Mode.LANGEVIN,
                      np.random.default_rng(0))
    np.testing.assert_allclose(mean, [0.05, 0.0])


def test_random_walk_mean_ignores_gradient():
    theta = np.array([0.3, -1.2, 0.0])
    _, mean = propose(theta, np.array([50.0, 1.0]), SamplerConfig(), Mode.RANDOM_WALK, np.random.default_rng(0))
    np.testing.assert_array_equal(mean, theta[:2])


def test_eta_moves_by_random_walk():
    cfg = SamplerConfig(proposal_std=0.1, tau_proposal_std=0.3)
    rng_a = np.random.default_rng(5)
    prop, _ = propose(np.array([0.0, 0.0, 1.0]), np.array([2.0, 0.0]), cfg, Mode.LANGEVIN, rng_a)
    z = np.random.default_rng(5).standard_normal(3)
    assert prop[2] == pytest.approx(1.0 + 0.3 * z[2])


def test_propose_respects_mask():
    mask = PruneMask(np.array([True, False, True]), Method.STN, 0.3)
    prop, _ = propose(np.ones(3), np.ones(3), SamplerConfig(proposal_std=1.0), Mode.LANGEVIN,
                      np.random.default_rng(0), mask)
    assert prop[1] == 0.0


def test_acceptance_examples():
    assert acceptance_log_probability(-3.0, -3.0) == 0.0
    assert math.exp(acceptance_log_probability(-3.0, -np.inf)) == 0.0
    assert math.exp(acceptance_log_probability(0.0, math.log(0.5))) == pytest.approx(0.5)
    assert acceptance_log_probability(-5.0, -1.0) == 0.0
    assert acceptance_log_probability(-5.0, np.nan) == -np.inf


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e3, 1e3))
def test_acceptance_probability_is_a_probability(cur, prop, q):
    la = acceptance_log_probability(cur, prop, q)
    assert 0.0 <= math.exp(la) <= 1.0
    if q == 0.0 and prop >= cur:
        assert la == 0.0


def test_q_correction_matches_gaussian_densities():
    rng = np.random.default_rng(1)
    cfg = SamplerConfig(step_size_epsilon=0.3, proposal_std=0.4)
    for _ in range(20):
        th, pr = rng.normal(size=4), rng.normal(size=4)
        g_th, g_pr = rng.normal(size=4), rng.normal(size=4)

        def log_q(to, frm, g):
            m = frm + 0.5 * cfg.step_size_epsilon * g
            return -np.sum((to - m) ** 2) / (2 * cfg.proposal_std ** 2)

        want = log_q(th, pr, g_pr) - log_q(pr, th, g_th)
        assert langevin_q_correction(th, pr, g_th, g_pr, cfg) == pytest.approx(want)


@pytest.mark.parametrize("backend", BACKENDS)
def test_standard_normal_moments(backend):
    cfg = SamplerConfig(max_samples=50000, burn_in_fraction=0.1, step_size_epsilon=0.5, proposal_std=1.0, seed=11)
    chain = run_mh(gaussian_target, gaussian_data([0.0], [[1.0]]), np.array([2.0]), 1, cfg, backend=backend)
    x = chain.retained()[:, 0]
    assert abs(x.mean()) < 0.05
    assert abs(x.var() - 1.0) < 0.1


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("mean,cov", [([1.5], [[0.5]]), ([1.0, -2.0], [[1.0, 0.5], [0.5, 2.0]])])
def test_gaussian_target_recovery(backend, mean, cov):
    cfg = SamplerConfig(max_samples=60000, burn_in_fraction=0.1, step_size_epsilon=0.3, proposal_std=0.8, seed=3)
    d = len(mean)
    chain = run_mh(gaussian_target, gaussian_data(mean, cov), np.zeros(d), d, cfg, backend=backend)
    x = chain.retained()
    se = batch_means_se(x)
    assert np.all(np.abs(x.mean(axis=0) - mean) < 3 * se)
    sq = (x - np.asarray(mean)) ** 2
    assert np.all(np.abs(sq.mean(axis=0) - np.diag(cov)) < 3 * batch_means_se(sq))


@pytest.mark.parametrize("backend", BACKENDS)
def test_detailed_balance_two_level_density(backend):
    cfg = SamplerConfig(max_samples=100000, burn_in_fraction=0.0, proposal_std=0.5, langevin_probability=0.0,
                        seed=2)
    chain = run_mh(step_target, np.array([0.25, 0.75]), np.array([0.5]), 1, cfg, backend=backend)
    x = chain.samples[:, 0]
    assert np.all(np.abs(x) <= 1.0)
    assert abs(np.mean(x >= 0) - 0.75) < 0.02


def test_run_mh_rejects_bad_start():
    with pytest.raises(FloatingPointError):
        run_mh(step_target, np.array([0.5, 0.5]), np.array([3.0]), 1, SamplerConfig(max_samples=10))


@pytest.mark.parametrize("backend", BACKENDS)
def test_seeded_determinism(cls_problem, backend):
    spec, ds = cls_problem
    cfg = SamplerConfig(max_samples=1500, seed=9)
    init = np.random.default_rng(0).normal(0, 0.5, spec.n_params)
    a = sample_chain(spec, ds, cfg, PriorConfig(), init, backend=backend)
    b = sample_chain(spec, ds, cfg, PriorConfig(), init, backend=backend)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(a.accepted, b.accepted)
    assert 0.0 < a.acceptance_rate < 1.0


def test_backends_agree(cls_problem, reg_problem):
    for spec, ds in (cls_problem, reg_problem):
        init = np.random.default_rng(1).normal(0, 0.5, spec.n_params)
        cfg = SamplerConfig(max_samples=300, seed=4)
        a = sample_chain(spec, ds, cfg, PriorConfig(), init, backend="numba")
        b = sample_chain(spec, ds, cfg, PriorConfig(), init, backend="numpy")
        np.testing.assert_array_equal(a.accepted, b.accepted)
        np.testing.assert_allclose(a.samples, b.samples, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(a.log_likelihoods, b.log_likelihoods, rtol=1e-9)


def test_recorded_log_likelihood_matches_state(reg_problem):
    from compactbnn.posterior import log_likelihood

    spec, ds = reg_problem
    init = np.r_[np.random.default_rng(2).normal(0, 0.5, spec.n_weights), math.log(0.1)]
    chain = sample_chain(spec, ds, SamplerConfig(max_samples=200, seed=1), PriorConfig(), init)
    for i in (0, 57, 199):
        assert chain.log_likelihoods[i] == pytest.approx(log_likelihood(spec, chain.samples[i], ds.x, ds.y))


def test_masked_column_is_zero(cls_problem):
    spec, ds = cls_problem
    keep = np.ones(spec.n_weights, dtype=bool)
    keep[2] = False
    mask = PruneMask(keep, Method.STN, 0.1)
    init = np.random.default_rng(3).normal(0, 0.5, spec.n_params)
    chain = sample_chain(spec, ds, SamplerConfig(max_samples=2000, seed=5), PriorConfig(), init, mask=mask)
    assert np.all(chain.samples[:, 2] == 0.0)
    assert np.any(chain.samples[:, 1] != chain.samples[0, 1])


def test_keep_all_mask_equals_unmasked(reg_problem):
    spec, ds = reg_problem
    init = np.r_[np.random.default_rng(4).normal(0, 0.5, spec.n_weights), -2.0]
    cfg = SamplerConfig(max_samples=1000, seed=6)
    a = sample_chain(spec, ds, cfg, PriorConfig(), init)
    b = sample_chain(spec, ds, cfg, PriorConfig(), init, mask=PruneMask.keep_all(spec.n_weights))
    np.testing.assert_array_equal(a.samples, b.samples)


def test_prune_all_gives_constant_likelihood(cls_problem):
    spec, ds = cls_problem
    mask = PruneMask(np.zeros(spec.n_weights, dtype=bool), Method.STN, 0.99)
    init = np.random.default_rng(5).normal(0, 0.5, spec.n_params)
    chain = resample_chain(spec, ds, resample_config(SamplerConfig(seed=1), 500), PriorConfig(), init, mask)
    assert np.all(chain.theta == 0.0)
    assert np.all(chain.log_likelihoods == chain.log_likelihoods[0])


def test_prune_all_regression_only_noise_moves():
    spec, ds = toy_regression()
    mask = PruneMask(np.zeros(spec.n_weights, dtype=bool), Method.SPN, 0.99)
    init = np.r_[np.ones(spec.n_weights), 0.0]
    chain = resample_chain(spec, ds, resample_config(SamplerConfig(seed=2), 500), PriorConfig(), init, mask)
    assert np.all(chain.theta == 0.0)
    assert np.unique(chain.samples[:, -1]).size > 1


def test_resample_config():
    cfg = resample_config(SamplerConfig(seed=3), 1000)
    assert (cfg.max_samples, cfg.burn_in_fraction, cfg.seed) == (1000, 0.0, 3)
    assert resample_config(cfg, 10, seed=8).seed == 8


def test_chain_retained_and_rate():
    cfg = SamplerConfig(max_samples=4, burn_in_fraction=0.5)
    chain = Chain(np.arange(8.0).reshape(4, 2), np.zeros(4), np.array([1, 0, 1, 0], bool), 2, cfg)
    np.testing.assert_array_equal(chain.retained(), [[4, 5], [6, 7]])
    assert chain.acceptance_rate == 0.5


def test_save_load_roundtrip(tmp_path, reg_problem):
    spec, ds = reg_problem
    keep = np.ones(spec.n_weights, dtype=bool)
    keep[[0, 4]] = False
    mask = PruneMask(keep, Method.RND, 0.2, seed=2**64 - 5)
    cfg = SamplerConfig(max_samples=100, seed=2**63 + 12345)
    init = np.r_[np.random.default_rng(6).normal(0, 0.5, spec.n_weights), -1.0]
    chain = sample_chain(spec, ds, cfg, PriorConfig(), init, mask=mask)
    save_chain(chain, tmp_path / "c.csv", {"note": "x"})
    back, meta = load_chain(tmp_path / "c.csv")
    np.testing.assert_array_equal(back.samples, chain.samples)
    np.testing.assert_array_equal(back.log_likelihoods, chain.log_likelihoods)
    np.testing.assert_array_equal(back.accepted, chain.accepted)
    assert back.config == cfg
    np.testing.assert_array_equal(back.mask.keep, keep)
    assert back.mask.seed == 2**64 - 5
    assert meta["note"] == "x"
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header.endswith("log_tau_sq,loglik,accepted")


def test_kernel_module_names():
    assert _kernels.get("numpy").BACKEND == "numpy"
    assert _kernels.get("numba").BACKEND == "numba"
