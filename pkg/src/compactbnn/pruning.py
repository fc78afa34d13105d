"""Posterior-statistics pruning: signal-to-noise, signal-plus-noise and random masks."""

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Method",
    "PosteriorStats",
    "PruneMask",
    "chain_statistics",
    "pruning_scores",
    "build_mask",
    "apply_mask",
    "save_mask",
    "load_mask",
]


class Method(str, Enum):
    STN = "stn"
    SPN = "spn"
    RND = "rnd"


@dataclass(frozen=True)
class PosteriorStats:
    means: np.ndarray
    stds: np.ndarray

    @property
    def size(self):
        return self.means.shape[0]


@dataclass(frozen=True)
class PruneMask:
    keep: np.ndarray
    method: Method
    level: float
    seed: int = None

    @property
    def size(self):
        return self.keep.shape[0]

    @property
    def n_pruned(self):
        return int(np.count_nonzero(~self.keep))

    def pruned_indices(self):
        return np.flatnonzero(~self.keep)

    @classmethod
    def keep_all(cls, size, method=Method.STN):
        return cls(np.ones(size, dtype=bool), Method(method), 0.0)


def chain_statistics(chain, burn_in_fraction=None):
    """Per-weight posterior mean and sample standard deviation (ddof=1) after burn-in.

    Rejected steps stay in the chain as repeated rows and are counted.
    """
    rows = chain.retained(burn_in_fraction)[:, :chain.n_weights]
    if rows.shape[0] < 2:
        raise ValueError(f"need at least 2 retained samples for a standard deviation, have {rows.shape[0]}")
    return PosteriorStats(rows.mean(axis=0), rows.std(axis=0, ddof=1))


def pruning_scores(stats, method):
    """Importance scores; the lowest scores are pruned first.

    STN is ``|mean| / std`` with a zero-variance nonzero weight scored ``+inf``
    (and a weight that is exactly zero with zero variance scored 0). SPN is
    ``|mean| + std``.
    """
    method = Method(method)
    mu = np.abs(stats.means)
    sd = stats.stds
    if method is Method.SPN:
        return mu + sd
    if method is Method.STN:
        with np.errstate(divide="ignore", invalid="ignore"):
            score = mu / sd
        zero_sd = sd == 0
        score[zero_sd] = np.where(mu[zero_sd] > 0, np.inf, 0.0)
        return score
    raise ValueError("random pruning has no score")


def n_to_prune(size, level):
    if not 0.0 <= level < 1.0:
        raise ValueError(f"pruning level must lie in [0, 1), got {level}")
    return int(math.floor(level * size))


def build_mask(stats_or_size, method, level, seed=None):
    """Prune the ``floor(level * T)`` lowest-scoring weights (or a random subset for RND).

    Ties in the score are broken towards the lower index.
    """
    method = Method(method)
    size = stats_or_size if isinstance(stats_or_size, (int, np.integer)) else stats_or_size.size
    k = n_to_prune(size, level)
    keep = np.ones(size, dtype=bool)
    if method is Method.RND:
        rng = np.random.default_rng(seed)
        keep[rng.choice(size, size=k, replace=False)] = False
        return PruneMask(keep, method, float(level), seed)
    if isinstance(stats_or_size, (int, np.integer)):
        raise ValueError(f"{method.value} pruning needs posterior statistics")
    scores = pruning_scores(stats_or_size, method)
    order = np.argsort(scores, kind="stable")
    keep[order[:k]] = False
    return PruneMask(keep, method, float(level), None)


def apply_mask(params, mask):
    """Zero the pruned weights; a trailing ``log(tau^2)`` entry is left untouched.

    Works on a single state vector or on a matrix of chain rows.
    """
    params = np.array(params, dtype=float)
    n_w = mask.size
    if params.shape[-1] not in (n_w, n_w + 1):
        raise ValueError(f"mask covers {n_w} weights, parameters have {params.shape[-1]} entries")
    params[..., :n_w][..., ~mask.keep] = 0.0
    return params


def save_mask(mask, path):
    lines = [f"# method = {mask.method.value}", f"# level = {mask.level!r}", f"# seed = {mask.seed}",
             "index,keep"]
    lines += [f"{i},{int(k)}" for i, k in enumerate(mask.keep)]
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write mask to {path}: {exc}") from exc


def load_mask(path):
    meta, keep = {}, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
        elif line != "index,keep":
            idx, flag = line.split(",")
            if int(idx) != len(keep):
                raise ValueError(f"{path}: mask indices out of order at {idx}")
            keep.append(flag.strip() == "1")
    seed = meta.get("seed", "None")
    return PruneMask(np.array(keep, dtype=bool), Method(meta["method"]), float(meta["level"]),
                     None if seed == "None" else int(seed))
