"""Kernel source shared by both backends.

This file is loaded twice by :mod:`compactbnn._kernels`, once per backend,
under the module names ``compactbnn._kernels_numba`` and
``compactbnn._kernels_numpy``. The backend is read from the module name so the
numba build is an ordinary module-level function set that numba can cache.

Parameter layout of a state vector ``w``::

    [W1 (n_in x n_hidden, row-major) | b1 | W2 (n_hidden x n_out, row-major) | b2 | log_tau_sq?]
"""

import math

import numpy as np

from compactbnn._accel import jit_for

REGRESSION = 0
CLASSIFICATION = 1

LOG_PROB_FLOOR = math.log(1e-300)
# sigmoid(+-40) is already 1 - 4e-18 / 4e-18; clipping avoids exp overflow warnings
_SIGMOID_CLIP = 40.0

BACKEND = "numba" if __name__.endswith("_numba") else "numpy"
jit = jit_for(BACKEND)


@jit
def n_weights(n_in, n_hidden, n_out):
    return n_in * n_hidden + n_hidden + n_hidden * n_out + n_out


@jit
def unpack(w, n_in, n_hidden, n_out):
    a = n_in * n_hidden
    b = a + n_hidden
    c = b + n_hidden * n_out
    w1 = np.ascontiguousarray(w[:a]).reshape((n_in, n_hidden))
    b1 = w[a:b]
    w2 = np.ascontiguousarray(w[b:c]).reshape((n_hidden, n_out))
    b2 = w[c:c + n_out]
    return w1, b1, w2, b2


@jit
def hidden(x, w1, b1):
    z = np.dot(x, w1) + b1
    z = np.minimum(np.maximum(z, -_SIGMOID_CLIP), _SIGMOID_CLIP)
    return 1.0 / (1.0 + np.exp(-z))


@jit
def log_softmax(z):
    k = z.shape[1]
    m = z[:, 0].copy()
    for j in range(1, k):
        m = np.maximum(m, z[:, j])
    s = np.zeros_like(m)
    for j in range(k):
        s += np.exp(z[:, j] - m)
    lse = m + np.log(s)
    out = np.empty_like(z)
    for j in range(k):
        out[:, j] = z[:, j] - lse
    return out


@jit
def forward(w, x, n_hidden, n_out, task):
    n_in = x.shape[1]
    w1, b1, w2, b2 = unpack(w, n_in, n_hidden, n_out)
    h = hidden(x, w1, b1)
    z = np.dot(h, w2) + b2
    if task == CLASSIFICATION:
        return np.exp(log_softmax(z))
    return z


@jit
def log_likelihood(w, x, y, n_hidden, n_out, task):
    """Gaussian (regression, y is N x n_out) or multinomial (y one-hot) log-likelihood."""
    n_in = x.shape[1]
    w1, b1, w2, b2 = unpack(w, n_in, n_hidden, n_out)
    h = hidden(x, w1, b1)
    z = np.dot(h, w2) + b2
    if task == CLASSIFICATION:
        logp = np.maximum(log_softmax(z), LOG_PROB_FLOOR)
        return np.sum(y * logp)
    tau_sq = math.exp(w[w.shape[0] - 1])
    r = y - z
    n_obs = r.shape[0] * r.shape[1]
    return -0.5 * n_obs * math.log(2.0 * math.pi * tau_sq) - np.sum(r * r) / (2.0 * tau_sq)


@jit
def log_likelihood_and_grad(w, x, y, n_hidden, n_out, task):
    """Log-likelihood and its gradient over the network weights (tau^2 held fixed)."""
    n_in = x.shape[1]
    w1, b1, w2, b2 = unpack(w, n_in, n_hidden, n_out)
    h = hidden(x, w1, b1)
    z = np.dot(h, w2) + b2
    if task == CLASSIFICATION:
        logp = log_softmax(z)
        ll = np.sum(y * np.maximum(logp, LOG_PROB_FLOOR))
        # rows of y sum to one, so d ll / dz = y - p
        dz = y - np.exp(logp)
    else:
        tau_sq = math.exp(w[w.shape[0] - 1])
        r = y - z
        n_obs = r.shape[0] * r.shape[1]
        ll = -0.5 * n_obs * math.log(2.0 * math.pi * tau_sq) - np.sum(r * r) / (2.0 * tau_sq)
        dz = r / tau_sq
    g_w2 = np.dot(h.T, dz)
    g_b2 = np.sum(dz, axis=0)
    dh = np.dot(dz, w2.T) * h * (1.0 - h)
    g_w1 = np.dot(x.T, dh)
    g_b1 = np.sum(dh, axis=0)
    grad = np.empty(n_weights(n_in, n_hidden, n_out))
    a = n_in * n_hidden
    b = a + n_hidden
    c = b + n_hidden * n_out
    grad[:a] = g_w1.ravel()
    grad[a:b] = g_b1
    grad[b:c] = g_w2.ravel()
    grad[c:] = g_b2
    return ll, grad


@jit
def log_prior(w, n_w, sigma_sq, nu1, nu2, task):
    theta = w[:n_w]
    lp = -0.5 * n_w * math.log(sigma_sq) - np.sum(theta * theta) / (2.0 * sigma_sq)
    if task == REGRESSION:
        eta = w[w.shape[0] - 1]
        lp += -(1.0 + nu1) * eta - nu2 * math.exp(-eta)
    return lp


@jit
def bnn_target(w, data):
    """MH target over the stored state; regression adds the log-Jacobian of tau^2 = exp(eta)."""
    x, y, n_hidden, n_out, task, sigma_sq, nu1, nu2 = data
    ll, grad = log_likelihood_and_grad(w, x, y, n_hidden, n_out, task)
    n_w = grad.shape[0]
    lt = ll + log_prior(w, n_w, sigma_sq, nu1, nu2, task)
    grad -= w[:n_w] / sigma_sq
    if task == REGRESSION:
        lt += w[w.shape[0] - 1]
    return lt, ll, grad


@jit
def acceptance_log_probability(lp_current, lp_proposed, q_correction):
    if not lp_proposed > -np.inf:
        return -np.inf
    a = lp_proposed - lp_current + q_correction
    if a != a:
        return -np.inf
    return min(0.0, a)


@jit
def langevin_mean(theta, grad, eps, free):
    return theta + 0.5 * eps * grad * free


@jit
def langevin_q_correction(theta, proposal, mean_fwd, mean_rev, step):
    """log q(theta | proposal) - log q(proposal | theta) for Gaussian proposals."""
    d_fwd = proposal - mean_fwd
    d_rev = theta - mean_rev
    return (np.sum(d_fwd * d_fwd) - np.sum(d_rev * d_rev)) / (2.0 * step * step)


@jit
def _propose_into(state, grad, n_w, free, eps, step, tau_step, langevin, z_theta, z_eta):
    theta = state[:n_w]
    if langevin:
        mean_fwd = langevin_mean(theta, grad, eps, free)
    else:
        mean_fwd = theta.copy()
    proposal = state.copy()
    proposal[:n_w] = mean_fwd + step * z_theta * free
    if state.shape[0] > n_w:
        proposal[n_w] = state[n_w] + tau_step * z_eta
    return proposal, mean_fwd


@jit
def _log_alpha(state, proposal, lt, lt_p, grad_p, mean_fwd, n_w, free, eps, step, langevin):
    if not (lt_p > -np.inf and np.all(np.isfinite(grad_p))):
        return -np.inf
    log_q = 0.0
    if langevin:
        mean_rev = langevin_mean(proposal[:n_w], grad_p, eps, free)
        log_q = langevin_q_correction(state[:n_w], proposal[:n_w], mean_fwd, mean_rev, step)
    return acceptance_log_probability(lt, lt_p, log_q)


@jit
def mh_block(target, data, state, lt, ll, grad, n_w, free, eps, step, tau_step,
             p_langevin, z_theta, z_eta, u_mode, u_accept,
             out_samples, out_ll, out_accept):
    """Advance the chain by ``len(u_accept)`` steps, writing every state.

    All randomness is supplied by the caller so both backends consume the
    same draws. Masked coordinates (``free == 0``) stay at zero.
    """
    for i in range(u_accept.shape[0]):
        langevin = u_mode[i] < p_langevin
        proposal, mean_fwd = _propose_into(state, grad, n_w, free, eps, step, tau_step,
                                           langevin, z_theta[i], z_eta[i])
        lt_p, ll_p, grad_p = target(proposal, data)
        grad_p = grad_p * free
        log_alpha = _log_alpha(state, proposal, lt, lt_p, grad_p, mean_fwd, n_w, free, eps, step, langevin)
        out_accept[i] = u_accept[i] < math.exp(log_alpha)
        if out_accept[i]:
            state, lt, ll, grad = proposal, lt_p, ll_p, grad_p
        out_samples[i] = state
        out_ll[i] = ll
    return state, lt, ll, grad


@jit
def mh_block_bnn(data, state, lt, ll, grad, n_w, free, eps, step, tau_step,
                 p_langevin, z_theta, z_eta, u_mode, u_accept,
                 out_samples, out_ll, out_accept):
    """:func:`mh_block` with the network target bound statically (cacheable by numba)."""
    for i in range(u_accept.shape[0]):
        langevin = u_mode[i] < p_langevin
        proposal, mean_fwd = _propose_into(state, grad, n_w, free, eps, step, tau_step,
                                           langevin, z_theta[i], z_eta[i])
        lt_p, ll_p, grad_p = bnn_target(proposal, data)
        grad_p = grad_p * free
        log_alpha = _log_alpha(state, proposal, lt, lt_p, grad_p, mean_fwd, n_w, free, eps, step, langevin)
        out_accept[i] = u_accept[i] < math.exp(log_alpha)
        if out_accept[i]:
            state, lt, ll, grad = proposal, lt_p, ll_p, grad_p
        out_samples[i] = state
        out_ll[i] = ll
    return state, lt, ll, grad


@jit
def predict_many(samples, x, n_hidden, n_out, task):
    n_s = samples.shape[0]
    out = np.empty((n_s, x.shape[0], n_out))
    for s in range(n_s):
        out[s] = forward(samples[s], x, n_hidden, n_out, task)
    return out
