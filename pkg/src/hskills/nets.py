"""Function approximators and their optimization plumbing.

All networks are 4-hidden-layer MLPs with input skip connections (each
hidden layer after the first consumes the previous activation concatenated
with the raw input) and ReLU activations. Parameters live in flat
``{name: ndarray}`` dicts; losses lift them into autodiff leaves.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Var, concat, leaf

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)

Params = dict[str, np.ndarray]


# -- parameter containers -------------------------------------------------


def init_mlp(
    rng: np.random.Generator,
    in_dim: int,
    out_dim: int,
    hidden: int = 64,
    n_layers: int = 4,
    prefix: str = "",
) -> Params:
    """Uniform +-1/sqrt(fan_in) init for a skip-connected MLP."""
    params: Params = {}
    d = in_dim
    for k in range(n_layers):
        params[f"{prefix}w{k}"] = rng.uniform(-1, 1, size=(d, hidden)) / math.sqrt(d)
        params[f"{prefix}b{k}"] = np.zeros(hidden)
        d = hidden + in_dim
    params[f"{prefix}head_w"] = rng.uniform(-1, 1, size=(hidden, out_dim)) / math.sqrt(hidden)
    params[f"{prefix}head_b"] = np.zeros(out_dim)
    return params


def lift(params: Params) -> dict[str, Var]:
    """Wrap raw parameter arrays into autodiff leaves for one loss eval."""
    return {k: leaf(v) for k, v in params.items()}


def grads_of(lifted: dict[str, Var]) -> Params:
    return {
        k: (v.grad if v.grad is not None else np.zeros_like(v.data))
        for k, v in lifted.items()
    }


def check_finite(params: Params):
    for k, v in params.items():
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite values in parameter {k!r}")


# -- forward passes -------------------------------------------------------


def mlp_forward(p: dict[str, Var], x: Var, prefix: str = "") -> Var:
    """Skip-connected MLP on a (batch, in_dim) input; returns (batch, out)."""
    return mlp_trunk(p, x, prefix) @ p[f"{prefix}head_w"] + p[f"{prefix}head_b"]


def mlp_trunk(p: dict[str, Var], x: Var, prefix: str = "") -> Var:
    """Hidden representation only (for multi-head networks)."""
    if not np.all(np.isfinite(x.data)):
        raise ValueError("non-finite network input")
    n_layers = sum(1 for k in p if k.startswith(f"{prefix}w") and k != f"{prefix}head_w")
    h = x
    for k in range(n_layers):
        if k > 0:
            h = concat([h, x], axis=-1)
        h = (h @ p[f"{prefix}w{k}"] + p[f"{prefix}b{k}"]).relu()
    return h


# -- stochastic heads -----------------------------------------------------


def split_gaussian(out: Var) -> tuple[Var, Var]:
    """Split a (batch, 2k) head output into mean and clamped log-std."""
    k = out.data.shape[-1] // 2
    mean = out[..., :k]
    log_std = out[..., k:].clip(LOG_STD_MIN, LOG_STD_MAX)
    return mean, log_std


def sample_squashed_gaussian(mean: Var, log_std: Var, noise: np.ndarray) -> tuple[Var, Var]:
    """Reparameterized tanh-squashed Gaussian sample.

    Returns (action in (-1,1)^k, per-row log-probability) including the
    tanh change-of-variables correction, computed in the numerically stable
    form log(1 - tanh(u)^2) = 2(log 2 - u - softplus(-2u)).
    """
    std = log_std.exp()
    u = mean + std * noise
    action = u.tanh()
    logp_gauss = (
        -0.5 * ((u - mean) / std).square() - log_std - Var(0.5 * LOG_2PI)
    ).sum(axis=-1)
    correction = (2.0 * (Var(math.log(2.0)) - u - (-2.0 * u).softplus())).sum(axis=-1)
    return action, logp_gauss - correction


def gaussian_mean_action(mean: Var) -> Var:
    """Deterministic action: tanh of the pre-squash mean."""
    return mean.tanh()


def log_softmax(logits: Var) -> Var:
    return logits - logits.logsumexp(axis=-1, keepdims=True)


def softmax(logits: Var) -> Var:
    return log_softmax(logits).exp()


def categorical_entropy(logits: Var) -> Var:
    """Closed-form entropy of softmax(logits), per row."""
    logp = log_softmax(logits)
    return -(logp.exp() * logp).sum(axis=-1)


# -- updates --------------------------------------------------------------


def polyak_update(target: Params, online: Params, tau: float) -> None:
    """In-place blend target <- (1 - tau) * target + tau * online."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must be in (0, 1]")
    if target.keys() != online.keys():
        raise ValueError("parameter name mismatch")
    for k in target:
        if target[k].shape != online[k].shape:
            raise ValueError(f"shape mismatch for {k!r}")
        target[k] *= 1.0 - tau
        target[k] += tau * online[k]


class Adam:
    """Bias-corrected Adam over a parameter dict."""

    def __init__(self, params: Params, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Params, grads: Params) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)
