"""Convergence diagnostics: Gelman-Rubin PSRF, acceptance rate, trace export."""

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DegenerateChainWarning",
    "PsrfReport",
    "gelman_rubin",
    "psrf",
    "split_chains",
    "psrf_report",
    "acceptance_rate",
    "export_trace",
    "write_rhat_csv",
]


class DegenerateChainWarning(RuntimeWarning):
    """Within-chain variance is zero, so R-hat is undefined."""


def psrf(chains):
    """Potential scale reduction factor for an (m, n) array or an (m, n, p) stack.

    ``W`` is the mean within-chain variance, ``B/n`` the variance of the chain
    means, ``V = (n-1)/n W + B/n`` and ``R = sqrt(V / W)``. Parameters with
    ``W = 0`` get ``+inf``.
    """
    x = np.asarray(chains, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[:, :, None]
    m, n = x.shape[:2]
    if m < 2 or n < 2:
        raise ValueError(f"need at least 2 chains of length 2, got {m} x {n}")
    w = x.var(axis=1, ddof=1).mean(axis=0)
    b_over_n = x.mean(axis=1).var(axis=0, ddof=1)
    v = (n - 1) / n * w + b_over_n
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(v / w)
    r = np.where(w > 0, r, np.inf)
    return r[0] if squeeze else r


def gelman_rubin(chains):
    """R-hat for ``m >= 2`` equal-length chains of one scalar parameter.

    Returns ``+inf`` and warns when the within-chain variance is zero.
    """
    chains = [np.asarray(c, dtype=float).ravel() for c in chains]
    if len({c.shape[0] for c in chains}) != 1:
        raise ValueError("chains must have equal length")
    r = float(psrf(np.stack(chains)))
    if np.isinf(r):
        warnings.warn("within-chain variance is zero; R-hat reported as +inf", DegenerateChainWarning,
                      stacklevel=2)
    return r


def split_chains(samples):
    """Split one chain (n, p) into its two halves, dropping a middle row if n is odd."""
    samples = np.asarray(samples)
    half = samples.shape[0] // 2
    return np.stack([samples[:half], samples[samples.shape[0] - half:]])


@dataclass(frozen=True)
class PsrfReport:
    per_parameter_rhat: np.ndarray
    n_chains: int
    n_samples: int

    @property
    def max_rhat(self):
        r = self.per_parameter_rhat
        return float(np.nanmax(r)) if np.any(~np.isnan(r)) else float("nan")

    @property
    def degenerate(self):
        return np.flatnonzero(np.isinf(self.per_parameter_rhat))


def psrf_report(chains, skip_constant=False):
    """Per-parameter R-hat across chains, each an (n, p) sample matrix.

    A single chain is split in half. ``skip_constant`` reports parameters that
    never move in any chain (e.g. pruned weights) as NaN instead of ``+inf``.
    """
    chains = [np.asarray(c, dtype=float) for c in chains]
    if len(chains) == 1:
        stack = split_chains(chains[0])
    else:
        n = min(c.shape[0] for c in chains)
        stack = np.stack([c[:n] for c in chains])
    r = psrf(stack)
    if skip_constant:
        const = np.all(stack == stack[:1, :1, :], axis=(0, 1))
        r = np.where(const, np.nan, r)
    if np.any(np.isinf(r)):
        warnings.warn(f"{int(np.isinf(r).sum())} parameter(s) have zero within-chain variance",
                      DegenerateChainWarning, stacklevel=2)
    return PsrfReport(r, stack.shape[0], stack.shape[1])


def acceptance_rate(chain):
    accepted = np.asarray(getattr(chain, "accepted", chain))
    if accepted.size == 0:
        raise ValueError("empty chain")
    return float(np.mean(accepted))


def export_trace(chain, parameter_indices, path=None):
    """Plot-ready trace rows ``(sample_index, value...)``; written to ``path`` when given."""
    samples = getattr(chain, "samples", chain)
    samples = np.asarray(samples)
    idx = [int(i) for i in parameter_indices]
    for i in idx:
        if not 0 <= i < samples.shape[1]:
            raise IndexError(f"parameter index {i} out of range (0..{samples.shape[1] - 1})")
    header = ["sample_index"] + [f"p{i}" for i in idx]
    rows = [[s] + [samples[s, i] for i in idx] for s in range(samples.shape[0])] if idx else []
    if path is not None:
        with open(Path(path), "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            w.writerows([[r[0]] + [repr(float(v)) for v in r[1:]] for r in rows])
    return header, rows


def write_rhat_csv(report, path, names=None):
    names = names or [f"p{i}" for i in range(report.per_parameter_rhat.shape[0])]
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["parameter", "rhat"])
        for name, r in zip(names, report.per_parameter_rhat):
            w.writerow([name, repr(float(r))])
