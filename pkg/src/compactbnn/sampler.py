"""Langevin-gradient Metropolis-Hastings sampling of network posteriors.

Each step proposes either a Langevin move (mean shifted by half a step along
the log-posterior gradient) or a plain random walk, chosen at random per step,
and accepts it with the Metropolis-Hastings rule including the proposal
asymmetry correction. For regression the noise parameter ``log(tau^2)`` moves
jointly by a Gaussian random walk.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import _kernels
from .nnet import check_params

log = logging.getLogger(__name__)

__all__ = [
    "SamplerConfig",
    "Chain",
    "Mode",
    "propose",
    "acceptance_log_probability",
    "langevin_q_correction",
    "run_mh",
    "sample_chain",
    "resample_chain",
    "save_chain",
    "load_chain",
]

BLOCK = 1000


class Mode(str, Enum):
    LANGEVIN = "langevin"
    RANDOM_WALK = "random_walk"


@dataclass(frozen=True)
class SamplerConfig:
    max_samples: int = 50_000
    burn_in_fraction: float = 0.5
    step_size_epsilon: float = 0.02
    proposal_std: float = 0.025
    tau_proposal_std: float = 0.2
    langevin_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.max_samples < 1:
            raise ValueError("max_samples must be positive")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if not (self.step_size_epsilon > 0 and self.proposal_std > 0 and self.tau_proposal_std > 0):
            raise ValueError("step sizes must be positive")
        if not 0.0 <= self.langevin_probability <= 1.0:
            raise ValueError("langevin_probability must lie in [0, 1]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class Chain:
    """Every state visited by the sampler, one row per step.

    Rejected steps repeat the previous state. ``samples`` has ``n_weights``
    columns plus a trailing ``log(tau^2)`` column for regression.
    """

    samples: np.ndarray
    log_likelihoods: np.ndarray
    accepted: np.ndarray
    n_weights: int
    config: SamplerConfig
    mask: object = None

    def __len__(self):
        return self.samples.shape[0]

    @property
    def theta(self):
        return self.samples[:, :self.n_weights]

    @property
    def has_noise(self):
        return self.samples.shape[1] > self.n_weights

    def burn_in_rows(self, burn_in_fraction=None):
        frac = self.config.burn_in_fraction if burn_in_fraction is None else burn_in_fraction
        return int(math.floor(frac * len(self)))

    def retained(self, burn_in_fraction=None):
        """Rows after discarding the burn-in fraction."""
        return self.samples[self.burn_in_rows(burn_in_fraction):]

    @property
    def acceptance_rate(self):
        return float(np.mean(self.accepted)) if len(self) else 0.0


def _free_vector(mask, n_weights):
    if mask is None:
        return np.ones(n_weights)
    keep = np.asarray(mask.keep, dtype=bool)
    if keep.shape != (n_weights,):
        raise ValueError(f"mask covers {keep.shape[0]} coordinates, model has {n_weights}")
    return keep.astype(float)


def propose(current, gradient, cfg, mode, rng, mask=None):
    """Draw one proposal; returns ``(proposal, proposal_mean)``.

    ``current`` may carry a trailing ``log(tau^2)`` entry (one longer than
    ``gradient``), which moves by a random walk of scale ``tau_proposal_std``.
    """
    current = np.asarray(current, dtype=float)
    gradient = np.asarray(gradient, dtype=float)
    n_w = gradient.shape[0]
    if current.shape[0] not in (n_w, n_w + 1):
        raise ValueError("gradient length must equal the number of weights")
    mode = Mode(mode)
    free = _free_vector(mask, n_w)
    theta = current[:n_w] * free
    if mode is Mode.LANGEVIN:
        if not np.all(np.isfinite(gradient)):
            raise FloatingPointError("non-finite gradient in Langevin proposal")
        mean = _kernels.NUMPY.langevin_mean(theta, gradient, cfg.step_size_epsilon, free)
    else:
        mean = theta.copy()
    proposal = current.copy()
    proposal[:n_w] = mean + cfg.proposal_std * rng.standard_normal(n_w) * free
    if current.shape[0] > n_w:
        proposal[n_w] = current[n_w] + cfg.tau_proposal_std * rng.standard_normal()
    return proposal, mean


def acceptance_log_probability(log_post_current, log_post_proposed, q_correction_log=0.0):
    """``min(0, log P(proposed) - log P(current) + log q-ratio)``; ``-inf`` for impossible proposals."""
    return float(_kernels.NUMPY.acceptance_log_probability(
        float(log_post_current), float(log_post_proposed), float(q_correction_log)))


def langevin_q_correction(current, proposal, grad_current, grad_proposal, cfg, mask=None):
    """``log q(current | proposal) - log q(proposal | current)`` for a Langevin pair."""
    n_w = len(grad_current)
    free = _free_vector(mask, n_w)
    k = _kernels.NUMPY
    theta, prop = np.asarray(current, float)[:n_w], np.asarray(proposal, float)[:n_w]
    mean_fwd = k.langevin_mean(theta, np.asarray(grad_current, float), cfg.step_size_epsilon, free)
    mean_rev = k.langevin_mean(prop, np.asarray(grad_proposal, float), cfg.step_size_epsilon, free)
    return float(k.langevin_q_correction(theta, prop, mean_fwd, mean_rev, cfg.proposal_std))


def run_mh(target, data, init, n_weights, cfg, mask=None, backend=None):
    """Run the MH chain on an arbitrary target.

    ``target(state, data)`` must return ``(log_target, log_likelihood, grad)``
    with ``grad`` the gradient over the first ``n_weights`` coordinates. Under
    the numba backend ``target`` has to be a numba-compiled function (see
    :func:`compactbnn._accel.njit`).
    """
    kernels = _kernels.get(backend)
    state = np.array(init, dtype=float)
    free = _free_vector(mask, n_weights)
    state[:n_weights] *= free
    lt, ll, grad = target(state, data)
    grad = grad * free
    if not (np.isfinite(lt) and np.all(np.isfinite(grad))):
        raise FloatingPointError("log-posterior or gradient is not finite at the initial state")

    n, p = cfg.max_samples, state.shape[0]
    samples = np.empty((n, p))
    lls = np.empty(n)
    accepted = np.zeros(n, dtype=np.bool_)
    rng = np.random.default_rng(cfg.seed)
    has_eta = p > n_weights
    for start in range(0, n, BLOCK):
        stop = min(start + BLOCK, n)
        b = stop - start
        z_theta = rng.standard_normal((b, n_weights))
        z_eta = rng.standard_normal(b) if has_eta else np.zeros(b)
        u_mode = rng.random(b)
        u_accept = rng.random(b)
        args = (state, lt, ll, grad, n_weights, free,
                float(cfg.step_size_epsilon), float(cfg.proposal_std), float(cfg.tau_proposal_std),
                float(cfg.langevin_probability), z_theta, z_eta, u_mode, u_accept,
                samples[start:stop], lls[start:stop], accepted[start:stop])
        with np.errstate(over="ignore", under="ignore"):
            if target is kernels.bnn_target:
                state, lt, ll, grad = kernels.mh_block_bnn(data, *args)
            else:
                state, lt, ll, grad = kernels.mh_block(target, data, *args)
    chain = Chain(samples, lls, accepted, n_weights, cfg, mask)
    log.debug("chain of %d steps, acceptance %.3f", n, chain.acceptance_rate)
    return chain


def bnn_data(spec, dataset, prior):
    """Pack a training set into the tuple consumed by the compiled BNN target."""
    if dataset.n < 1:
        raise ValueError("sampling needs a nonempty training set")
    x = np.ascontiguousarray(dataset.x, dtype=float)
    if x.shape[1] != spec.input_size:
        raise ValueError(f"dataset has {x.shape[1]} features, model expects {spec.input_size}")
    y = np.ascontiguousarray(dataset.targets_matrix() if hasattr(dataset, "targets_matrix") else dataset.y,
                             dtype=float)
    return (x, y, int(spec.hidden_size), int(spec.output_size), int(spec.task.code),
            float(prior.sigma_sq), float(prior.nu1), float(prior.nu2))


def sample_chain(spec, dataset, cfg, prior, init, mask=None, backend=None):
    """Sample the posterior of ``spec`` given the training ``dataset``."""
    init = check_params(spec, init)
    kernels = _kernels.get(backend)
    return run_mh(kernels.bnn_target, bnn_data(spec, dataset, prior), init, spec.n_weights, cfg,
                  mask=mask, backend=backend)


def resample_chain(spec, dataset, cfg, prior, pruned_init, mask, backend=None):
    """Re-run the sampler on a pruned network; masked coordinates stay at zero."""
    return sample_chain(spec, dataset, cfg, prior, pruned_init, mask=mask, backend=backend)


def resample_config(cfg, length=1000, seed=None):
    """Sampler settings for post-pruning resampling: ``length`` steps, no burn-in."""
    return cfg.replace(max_samples=length, burn_in_fraction=0.0, seed=cfg.seed if seed is None else seed)


# -- persistence ---------------------------------------------------------------

def _meta_path(path):
    path = Path(path)
    return path.with_name(path.stem + ".meta")


def format_meta(items):
    return "".join(f"{k} = {v}\n" for k, v in items)


def parse_meta(text):
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def save_chain(chain, path, extra=None):
    """Write ``chain`` as CSV plus a ``.meta`` sidecar with the config, mask and ``extra``."""
    path = Path(path)
    names = [f"p{i}" for i in range(chain.n_weights)]
    if chain.has_noise:
        names.append("log_tau_sq")
    header = ",".join(names + ["loglik", "accepted"])
    body = np.column_stack([chain.samples, chain.log_likelihoods, chain.accepted.astype(float)])
    fmt = ["%.17g"] * (body.shape[1] - 1) + ["%d"]
    try:
        np.savetxt(path, body, fmt=fmt, delimiter=",", header=header, comments="")
        items = [("n_weights", chain.n_weights)]
        items += [(f.name, getattr(chain.config, f.name)) for f in dataclasses.fields(chain.config)]
        if chain.mask is not None:
            m = chain.mask
            items += [("mask_method", m.method.value), ("mask_level", repr(m.level)),
                      ("mask_seed", m.seed), ("mask_pruned", " ".join(map(str, m.pruned_indices())))]
        items += list((extra or {}).items())
        _meta_path(path).write_text(format_meta(items))
    except OSError as exc:
        raise OSError(f"cannot write chain to {path}: {exc}") from exc


def load_chain(path):
    """Read a chain written by :func:`save_chain`; returns ``(chain, meta)``."""
    from .pruning import Method, PruneMask

    path = Path(path)
    meta = parse_meta(_meta_path(path).read_text())
    body = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n_w = int(meta["n_weights"])
    kwargs = {}
    for f in dataclasses.fields(SamplerConfig):
        if f.name in meta:
            kwargs[f.name] = int(meta[f.name]) if isinstance(f.default, int) else float(meta[f.name])
    cfg = SamplerConfig(**kwargs)
    mask = None
    if "mask_method" in meta:
        keep = np.ones(n_w, dtype=bool)
        pruned = meta.get("mask_pruned", "")
        if pruned:
            keep[np.array(pruned.split(), dtype=int)] = False
        seed = meta.get("mask_seed", "None")
        mask = PruneMask(keep, Method(meta["mask_method"]), float(meta["mask_level"]),
                         None if seed == "None" else int(seed))
    chain = Chain(np.ascontiguousarray(body[:, :-2]), body[:, -2].copy(), body[:, -1].astype(bool),
                  n_w, cfg, mask)
    return chain, meta
