import math
import warnings

import numpy as np
import pytest

from compactbnn.diagnostics import (
    DegenerateChainWarning,
    acceptance_rate,
    export_trace,
    gelman_rubin,
    psrf,
    psrf_report,
    split_chains,
    write_rhat_csv,
)


def reference_rhat(chains):
    """Textbook between/within variance PSRF for equal-length chains."""
    m, n = len(chains), len(chains[0])
    means = [sum(c) / n for c in chains]
    grand = sum(means) / m
    b = n / (m - 1) * sum((mu - grand) ** 2 for mu in means)
    w = sum(sum((x - mu) ** 2 for x in c) / (n - 1) for c, mu in zip(chains, means)) / m
    v = (n - 1) / n * w + b / n
    return math.sqrt(v / w)


def test_identical_chains():
    assert gelman_rubin([[1, 2, 3, 4], [1, 2, 3, 4]]) == pytest.approx(math.sqrt(3 / 4))
    assert gelman_rubin([[1, 2, 3, 4], [1, 2, 3, 4]]) == pytest.approx(0.8660, abs=1e-4)


@pytest.mark.parametrize("n", [5, 17, 200])
def test_identical_chains_general(n):
    c = np.random.default_rng(n).normal(size=n)
    assert gelman_rubin([c, c, c]) == pytest.approx(math.sqrt((n - 1) / n))


def test_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(20):
        chains = rng.normal(rng.normal(size=(3, 1)), 1.0, size=(3, 30))
        assert gelman_rubin(chains) == pytest.approx(reference_rhat(chains.tolist()), rel=1e-12)


def test_degenerate_flagged():
    with pytest.warns(DegenerateChainWarning):
        r = gelman_rubin([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]])
    assert r == np.inf


def test_same_distribution_near_one():
    chains = np.random.default_rng(1).normal(size=(4, 10_000))
    assert 0.99 <= gelman_rubin(chains) <= 1.05


def test_shifted_chains_large():
    rng = np.random.default_rng(2)
    chains = rng.normal(size=(4, 1000)) + np.arange(4)[:, None] * 3
    assert gelman_rubin(chains) > 2


def test_input_validation():
    with pytest.raises(ValueError):
        gelman_rubin([[1.0, 2.0, 3.0]])
    with pytest.raises(ValueError):
        gelman_rubin([[1.0, 2.0], [1.0, 2.0, 3.0]])


def test_vectorized_psrf_per_parameter():
    rng = np.random.default_rng(3)
    stack = rng.normal(size=(3, 50, 4))
    r = psrf(stack)
    for p in range(4):
        assert r[p] == pytest.approx(reference_rhat(stack[:, :, p].tolist()))


def test_split_single_chain():
    x = np.arange(7.0)[:, None]
    halves = split_chains(x)
    np.testing.assert_array_equal(halves[:, :, 0], [[0, 1, 2], [4, 5, 6]])
    rep = psrf_report([np.random.default_rng(4).normal(size=(400, 2))])
    assert rep.n_chains == 2 and rep.n_samples == 200


def test_report_skip_constant():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=(100, 3)), rng.normal(size=(100, 3))
    a[:, 1] = b[:, 1] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rep = psrf_report([a, b], skip_constant=True)
    assert math.isnan(rep.per_parameter_rhat[1])
    assert np.isfinite(rep.max_rhat)
    with pytest.warns(DegenerateChainWarning):
        rep2 = psrf_report([a, b])
    assert list(rep2.degenerate) == [1]


def test_acceptance_rate():
    assert acceptance_rate(np.ones(5, bool)) == 1.0
    assert acceptance_rate(np.zeros(5, bool)) == 0.0
    assert acceptance_rate([1, 0, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        acceptance_rate([])


def test_export_trace(tmp_path):
    samples = np.array([[0.5], [1.5], [2.5]])
    header, rows = export_trace(samples, [0], tmp_path / "t.csv")
    assert header == ["sample_index", "p0"] and len(rows) == 3
    assert [r[1] for r in rows] == samples[:, 0].tolist()
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "sample_index,p0" and len(lines) == 4
    export_trace(samples, [], tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text().splitlines() == ["sample_index"]
    with pytest.raises(IndexError):
        export_trace(samples, [3])


def test_rhat_csv(tmp_path):
    rep = psrf_report([np.random.default_rng(6).normal(size=(50, 2)) for _ in range(3)])
    write_rhat_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "parameter,rhat" and len(lines) == 3
    assert float(lines[1].split(",")[1]) == rep.per_parameter_rhat[0]
