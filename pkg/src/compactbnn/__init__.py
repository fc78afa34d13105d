"""Compact Bayesian neural networks by Langevin MCMC sampling and posterior pruning."""

from .nnet import ModelSpec, Task, forward, log_posterior_gradient, pack, param_codec, unpack
from .posterior import PriorConfig, log_likelihood, log_posterior, log_prior
from .pruning import Method, PruneMask, apply_mask, build_mask, chain_statistics, pruning_scores
from .sampler import Chain, SamplerConfig, resample_chain, run_mh, sample_chain

__version__ = "0.1.0"
