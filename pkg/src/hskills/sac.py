"""Soft Actor-Critic for goal-conditioned skill pre-training.

Twin critics with target networks, a tanh-squashed Gaussian actor and
automatic temperature tuning. All losses take explicit standard-normal
noise so gradient checks can freeze the sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Var, concat, minimum
from .nets import (
    Adam,
    Params,
    grads_of,
    init_mlp,
    lift,
    mlp_forward,
    polyak_update,
    sample_squashed_gaussian,
    split_gaussian,
)

__all__ = ["SacConfig", "SacModel", "Batch", "critic_target", "critic_loss",
           "actor_loss", "temperature_loss", "sac_update", "make_batch"]


@dataclass
class SacConfig:
    gamma: float = 1.0 - 1.0 / 72.0
    tau: float = 0.005
    lr_q: float = 1e-3
    lr_pi: float = 1e-3
    lr_alpha: float = 1e-3
    init_alpha: float = 0.1
    batch_size: int = 256
    warmup_steps: int = 10_000
    hidden: int = 64
    n_layers: int = 4
    target_entropy: float | None = None   # default: -action_dim


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    obs_next: np.ndarray
    done: np.ndarray

    @property
    def n(self) -> int:
        return len(self.reward)


def make_batch(transitions, obs_of, obs_next_of) -> Batch:
    """Assemble a Batch from transition records via two observation builders."""
    return Batch(
        obs=np.stack([obs_of(t) for t in transitions]),
        action=np.stack([t.action for t in transitions]),
        reward=np.array([t.reward for t in transitions]),
        obs_next=np.stack([obs_next_of(t) for t in transitions]),
        done=np.array([t.done for t in transitions]),
    )


class SacModel:
    """Parameter container: actor, twin critics + targets, temperature."""

    def __init__(self, actor: Params, critics: Params, critic_targets: Params,
                 log_alpha: float, target_entropy: float, action_dim: int):
        self.actor = actor
        self.critics = critics            # keys prefixed q1_/q2_
        self.critic_targets = critic_targets
        self.log_alpha = np.array(float(log_alpha))
        self.target_entropy = float(target_entropy)
        self.action_dim = action_dim

    @staticmethod
    def create(rng: np.random.Generator, obs_dim: int, action_dim: int,
               cfg: SacConfig) -> "SacModel":
        actor = init_mlp(rng, obs_dim, 2 * action_dim, cfg.hidden, cfg.n_layers)
        critics: Params = {}
        for pre in ("q1_", "q2_"):
            critics.update(
                init_mlp(rng, obs_dim + action_dim, 1, cfg.hidden, cfg.n_layers, prefix=pre)
            )
        targets = {k: v.copy() for k, v in critics.items()}
        h_target = cfg.target_entropy if cfg.target_entropy is not None else -float(action_dim)
        return SacModel(actor, critics, targets, np.log(cfg.init_alpha),
                        h_target, action_dim)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    def act(self, obs: np.ndarray, noise: np.ndarray | None = None) -> np.ndarray:
        """Single-observation action; deterministic (tanh of mean) when no
        noise is given."""
        out = mlp_forward(lift(self.actor), Var(obs[None, :]))
        mean, log_std = split_gaussian(out)
        if noise is None:
            return np.tanh(mean.data[0])
        a, _ = sample_squashed_gaussian(mean, log_std, noise[None, :])
        return a.data[0]


def _policy_sample(actor_p, obs: np.ndarray, noise: np.ndarray):
    out = mlp_forward(actor_p, Var(obs))
    mean, log_std = split_gaussian(out)
    return sample_squashed_gaussian(mean, log_std, noise)


def _twin_q(critic_p, obs: np.ndarray | Var, action: Var | np.ndarray):
    obs_v = obs if isinstance(obs, Var) else Var(obs)
    x = concat([obs_v, action if isinstance(action, Var) else Var(action)], axis=-1)
    q1 = mlp_forward(critic_p, x, prefix="q1_")[:, 0]
    q2 = mlp_forward(critic_p, x, prefix="q2_")[:, 0]
    return q1, q2


def critic_target(batch: Batch, model: SacModel, gamma: float,
                  noise: np.ndarray) -> np.ndarray:
    """Soft Bellman backup y = r + gamma (1 - done)(min Q'(s', a') - alpha log pi)."""
    actor_p = {k: Var(v) for k, v in model.actor.items()}
    a_next, logp = _policy_sample(actor_p, batch.obs_next, noise)
    tgt_p = {k: Var(v) for k, v in model.critic_targets.items()}
    q1, q2 = _twin_q(tgt_p, batch.obs_next, a_next)
    soft_q = minimum(q1, q2).data - model.alpha * logp.data
    return batch.reward + gamma * (1.0 - batch.done) * soft_q


def critic_loss(batch: Batch, targets: np.ndarray, critics: Params):
    """Half mean squared residual over the batch and both critics."""
    lp = lift(critics)
    q1, q2 = _twin_q(lp, batch.obs, batch.action)
    resid1 = q1 - Var(targets)
    resid2 = q2 - Var(targets)
    loss = 0.5 * concat([resid1.square(), resid2.square()], axis=0).mean()
    loss.backward()
    return float(loss.data), grads_of(lp)


def actor_loss(batch: Batch, model: SacModel, noise: np.ndarray):
    """Reparameterized policy loss: mean(alpha log pi - min Q(s, a))."""
    lp = lift(model.actor)
    a, logp = _policy_sample(lp, batch.obs, noise)
    critic_p = {k: Var(v) for k, v in model.critics.items()}
    q1, q2 = _twin_q(critic_p, batch.obs, a)
    loss = (model.alpha * logp - minimum(q1, q2)).mean()
    loss.backward()
    return float(loss.data), grads_of(lp), float(logp.data.mean())


def temperature_loss(mean_logp: float, model: SacModel):
    """J(alpha) = -alpha (E[log pi] + target entropy); gradient on log alpha."""
    alpha = model.alpha
    loss = -alpha * (mean_logp + model.target_entropy)
    grad_log_alpha = -alpha * (mean_logp + model.target_entropy)
    return float(loss), float(grad_log_alpha)


@dataclass
class SacOptState:
    q: Adam
    pi: Adam
    alpha: Adam

    @staticmethod
    def create(model: SacModel, cfg: SacConfig) -> "SacOptState":
        return SacOptState(
            q=Adam(model.critics, cfg.lr_q),
            pi=Adam(model.actor, cfg.lr_pi),
            alpha=Adam({"log_alpha": np.zeros(())}, cfg.lr_alpha),
        )


def sac_update(model: SacModel, opt: SacOptState, batch: Batch, cfg: SacConfig,
               rng: np.random.Generator) -> dict:
    """One gradient step on critics, actor and temperature, plus the polyak
    update on the critic targets. Returns scalar diagnostics."""
    n = batch.n
    noise_t = rng.standard_normal((n, model.action_dim))
    noise_a = rng.standard_normal((n, model.action_dim))

    targets = critic_target(batch, model, cfg.gamma, noise_t)
    q_loss, q_grads = critic_loss(batch, targets, model.critics)
    opt.q.step(model.critics, q_grads)

    pi_loss, pi_grads, mean_logp = actor_loss(batch, model, noise_a)
    opt.pi.step(model.actor, pi_grads)

    a_loss, a_grad = temperature_loss(mean_logp, model)
    box = {"log_alpha": model.log_alpha.reshape(())}
    opt.alpha.step(box, {"log_alpha": np.array(a_grad)})
    model.log_alpha = box["log_alpha"]

    polyak_update(model.critic_targets, model.critics, cfg.tau)
    return {
        "q_loss": q_loss,
        "pi_loss": pi_loss,
        "alpha_loss": a_loss,
        "alpha": model.alpha,
        "entropy_estimate": -mean_logp,
    }
