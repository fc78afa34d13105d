"""One-hidden-layer feedforward network over a flat parameter vector.

Hidden units are logistic sigmoids. Regression outputs are linear, classification
outputs are softmax probabilities. A state vector holds every weight and bias in
a fixed order, followed by ``log(tau^2)`` for regression models.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels


class Task(str, Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"

    @property
    def code(self):
        return _kernels.REGRESSION if self is Task.REGRESSION else _kernels.CLASSIFICATION


class ShapeError(ValueError):
    """Array dimensions disagree with the model layout."""


@dataclass(frozen=True)
class ModelSpec:
    input_size: int
    hidden_size: int
    output_size: int
    task: Task = Task.REGRESSION

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        for name in ("input_size", "hidden_size", "output_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.task is Task.CLASSIFICATION and self.output_size < 2:
            raise ValueError("classification needs output_size = number of classes >= 2")

    @property
    def n_weights(self):
        """Number of weights and biases (the prunable coordinates)."""
        i, h, o = self.input_size, self.hidden_size, self.output_size
        return i * h + h + h * o + o

    @property
    def n_params(self):
        """Length of a full state vector, including ``log(tau^2)`` for regression."""
        return self.n_weights + (1 if self.task is Task.REGRESSION else 0)

    @property
    def has_noise(self):
        return self.task is Task.REGRESSION

    def parameter_names(self):
        names = [f"p{i}" for i in range(self.n_weights)]
        if self.has_noise:
            names.append("log_tau_sq")
        return names


def check_params(spec, params):
    params = np.asarray(params, dtype=float)
    if params.ndim != 1 or params.shape[0] != spec.n_params:
        raise ShapeError(f"expected a parameter vector of length {spec.n_params}, got shape {params.shape}")
    return params


def check_inputs(spec, inputs):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[1] != spec.input_size:
        raise ShapeError(f"expected inputs with {spec.input_size} columns, got shape {inputs.shape}")
    return np.ascontiguousarray(inputs)


def pack(spec, w1, b1, w2, b2, log_tau_sq=None):
    """Flatten layer arrays into a state vector.

    ``w1`` is (input, hidden), ``w2`` is (hidden, output); both are read row-major.
    """
    parts = [
        (np.asarray(w1, float), (spec.input_size, spec.hidden_size)),
        (np.asarray(b1, float), (spec.hidden_size,)),
        (np.asarray(w2, float), (spec.hidden_size, spec.output_size)),
        (np.asarray(b2, float), (spec.output_size,)),
    ]
    for arr, shape in parts:
        if arr.shape != shape:
            raise ShapeError(f"layer array has shape {arr.shape}, expected {shape}")
    flat = [arr.ravel() for arr, _ in parts]
    if spec.has_noise:
        if log_tau_sq is None:
            raise ValueError("regression parameters need log_tau_sq")
        flat.append(np.array([float(log_tau_sq)]))
    elif log_tau_sq is not None:
        raise ValueError("classification parameters carry no log_tau_sq")
    return np.concatenate(flat)


def unpack(spec, params):
    """Inverse of :func:`pack`; returns ``(w1, b1, w2, b2, log_tau_sq)`` copies."""
    params = check_params(spec, params)
    w1, b1, w2, b2 = _kernels.NUMPY.unpack(params, spec.input_size, spec.hidden_size, spec.output_size)
    log_tau_sq = float(params[-1]) if spec.has_noise else None
    return w1.copy(), b1.copy(), w2.copy(), b2.copy(), log_tau_sq


def param_codec(spec):
    """Return ``(pack, unpack)`` bound to ``spec``."""
    return (lambda *layers, **kw: pack(spec, *layers, **kw)), (lambda params: unpack(spec, params))


def forward(spec, params, inputs):
    """Network output for each row of ``inputs`` (N x output_size)."""
    params = check_params(spec, params)
    inputs = check_inputs(spec, inputs)
    return _kernels.NUMPY.forward(params, inputs, spec.hidden_size, spec.output_size, spec.task.code)


def log_posterior_gradient(spec, params, inputs, targets, prior=None):
    """Gradient of log-likelihood + Gaussian log-prior over the weights and biases.

    ``targets`` is an N x output_size matrix for regression and a one-hot
    N x K matrix for classification. tau^2 is held at its current value.
    Passing ``prior=None`` gives the likelihood gradient alone.
    """
    params = check_params(spec, params)
    inputs = check_inputs(spec, inputs)
    targets = np.ascontiguousarray(np.asarray(targets, dtype=float).reshape(inputs.shape[0], -1))
    if inputs.shape[0] == 0:
        raise ValueError("gradient needs a nonempty batch")
    if targets.shape[1] != spec.output_size:
        raise ShapeError(f"targets must have {spec.output_size} columns, got {targets.shape[1]}")
    with np.errstate(over="raise", invalid="raise"):
        try:
            _, grad = _kernels.NUMPY.log_likelihood_and_grad(
                params, inputs, targets, spec.hidden_size, spec.output_size, spec.task.code)
        except FloatingPointError as exc:
            raise FloatingPointError(f"non-finite value in gradient computation: {exc}") from None
    if prior is not None:
        grad = grad - params[:spec.n_weights] / prior.sigma_sq
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient")
    return grad
