"""Soft Actor-Critic over the factored discrete-continuous skill action space.

The high level picks a feature set F (discrete, all sets evaluated in closed
form) and a goal g inside F's goal space (continuous, reparameterized). A
shared step-conditioned critic Q(s, F, g, i) scores the pair, where i counts
steps since the last high-level decision. Separate temperatures: one for the
discrete selector and one per feature set, normalized by goal dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Var, concat, minimum, stack_rows
from .goalspace import FeatureCatalog, FeatureSet, GoalTransform
from .nets import (
    Adam,
    Params,
    categorical_entropy,
    grads_of,
    init_mlp,
    lift,
    log_softmax,
    mlp_forward,
    mlp_trunk,
    polyak_update,
    sample_squashed_gaussian,
    split_gaussian,
)
from .replay import Segment

__all__ = [
    "HiConfig",
    "HighLevelModel",
    "SegmentBatch",
    "soft_value",
    "stepcond_critic_loss",
    "joint_policy_loss",
    "dual_temperature_losses",
    "hi_update",
    "make_segment_batch",
]


@dataclass
class HiConfig:
    c: int = 5
    gamma: float = 0.99
    tau: float = 0.005
    lr_q: float = 1e-3
    lr_f: float = 3e-3
    lr_g: float = 3e-3
    lr_alpha: float = 1e-3
    lr_beta: float = 1e-3
    init_alpha: float = 1.0
    init_beta: float = 1.0
    target_entropy_g: float = -1.0   # per goal dimension
    target_entropy_f_scale: float = 0.5  # times log |F|
    hidden: int = 32
    n_layers: int = 4
    batch_size: int = 64
    warmup_steps: int = 1000


class HighLevelModel:
    """Parameters for the goal-space selector, per-set goal policies and the
    step-conditioned twin critic."""

    def __init__(self, state_dim: int, catalog: FeatureCatalog,
                 feature_sets: list[FeatureSet], cfg: HiConfig,
                 rng: np.random.Generator):
        self.state_dim = state_dim
        self.catalog = catalog
        self.feature_sets = list(feature_sets)
        self.transforms = [GoalTransform.for_feature_set(catalog, fs) for fs in feature_sets]
        self.set_dims = [fs.n_dims for fs in feature_sets]
        self.goal_offsets = np.concatenate([[0], np.cumsum(self.set_dims)])
        self.total_goal_dims = int(self.goal_offsets[-1])
        self.cfg = cfg
        K = len(feature_sets)
        self.n_sets = K

        self.pi_f = init_mlp(rng, state_dim, K, cfg.hidden, cfg.n_layers)
        self.pi_g: Params = init_mlp(rng, state_dim, 1, cfg.hidden, cfg.n_layers)
        # trunk head unused; per-set Gaussian heads instead
        del self.pi_g["head_w"], self.pi_g["head_b"]
        for k, d in enumerate(self.set_dims):
            self.pi_g[f"head{k}_w"] = rng.uniform(-1, 1, size=(cfg.hidden, 2 * d)) / math.sqrt(cfg.hidden)
            self.pi_g[f"head{k}_b"] = np.zeros(2 * d)

        q_in = state_dim + K + self.total_goal_dims + 1
        self.critics: Params = {}
        for pre in ("q1_", "q2_"):
            self.critics.update(init_mlp(rng, q_in, 1, cfg.hidden, cfg.n_layers, prefix=pre))
        self.critic_targets = {k: v.copy() for k, v in self.critics.items()}

        self.log_alpha = np.array(math.log(cfg.init_alpha))
        self.log_betas = np.full(K, math.log(cfg.init_beta))
        self.target_entropy_f = cfg.target_entropy_f_scale * math.log(K) if K > 1 else 0.0
        self.target_entropy_g = cfg.target_entropy_g

    # -- helpers ----------------------------------------------------------

    def goal_channel_matrix(self, fs_idx: np.ndarray, goals: list[np.ndarray]) -> np.ndarray:
        """Dense goal input: each row has its goal in the channel block of its
        feature set, zeros elsewhere."""
        out = np.zeros((len(fs_idx), self.total_goal_dims))
        for r, (k, g) in enumerate(zip(fs_idx, goals)):
            o = self.goal_offsets[k]
            out[r, o:o + self.set_dims[k]] = g
        return out

    def onehot(self, fs_idx: np.ndarray) -> np.ndarray:
        out = np.zeros((len(fs_idx), self.n_sets))
        out[np.arange(len(fs_idx)), fs_idx] = 1.0
        return out


def _const(params: Params) -> dict[str, Var]:
    return {k: Var(v) for k, v in params.items()}


def _goal_heads(pi_g_p: dict[str, Var], states: np.ndarray, n_sets: int):
    """Per-set (mean, log_std) from the shared trunk."""
    feats = mlp_trunk(pi_g_p, Var(states))
    heads = []
    for k in range(n_sets):
        out = feats @ pi_g_p[f"head{k}_w"] + pi_g_p[f"head{k}_b"]
        heads.append(split_gaussian(out))
    return heads


def _critic_all_sets(critic_p: dict[str, Var], model: HighLevelModel,
                     states: np.ndarray, goal_samples: list[Var], prefix_pair=("q1_", "q2_")):
    """min over twin critics of Q(s, k, g_k, i=0) for every set k; (K, n)."""
    n = len(states)
    K = model.n_sets
    rows = []
    i_col = np.zeros((n, 1))
    for k in range(K):
        onehot = np.zeros((n, K))
        onehot[:, k] = 1.0
        before = np.zeros((n, int(model.goal_offsets[k])))
        after = np.zeros((n, model.total_goal_dims - int(model.goal_offsets[k + 1])))
        rows.append(concat(
            [Var(states), Var(onehot), Var(before), goal_samples[k], Var(after), Var(i_col)],
            axis=-1,
        ))
    big = concat(rows, axis=0)
    q1 = mlp_forward(critic_p, big, prefix=prefix_pair[0]).reshape(K, n)
    q2 = mlp_forward(critic_p, big, prefix=prefix_pair[1]).reshape(K, n)
    return minimum(q1, q2)


def _split_noise(model: HighLevelModel, noise: np.ndarray) -> list[np.ndarray]:
    return [
        noise[:, model.goal_offsets[k]:model.goal_offsets[k + 1]]
        for k in range(model.n_sets)
    ]


def soft_value(states: np.ndarray, model: HighLevelModel, noise: np.ndarray,
               pi_f_p=None, pi_g_p=None, critic_p=None, use_target: bool = True) -> Var:
    """Soft state value: expectation over all feature sets of the twin-min
    critic at i=0 minus the normalized goal log-likelihood, plus the shifted
    discrete entropy term (always non-positive).

    One reparameterized goal sample per set; ``noise`` has one standard
    normal column per goal channel.
    """
    pi_f_p = pi_f_p or _const(model.pi_f)
    pi_g_p = pi_g_p or _const(model.pi_g)
    if critic_p is None:
        critic_p = _const(model.critic_targets if use_target else model.critics)
    K = model.n_sets

    logits = mlp_forward(pi_f_p, Var(states))
    probs = log_softmax(logits).exp()                       # (n, K)
    heads = _goal_heads(pi_g_p, states, K)
    noise_k = _split_noise(model, noise)
    samples, logps = [], []
    for k, (mean, log_std) in enumerate(heads):
        a, logp = sample_squashed_gaussian(mean, log_std, noise_k[k])
        samples.append(a)
        logps.append(logp)
    q_min = _critic_all_sets(critic_p, model, states, samples)   # (K, n)
    logp_mat = stack_rows(logps)                                 # (K, n)
    betas = Var(np.exp(model.log_betas) / np.array(model.set_dims)).reshape(K, 1)
    inner = q_min - betas * logp_mat                             # (K, n)
    value = (probs.transpose(1, 0) * inner).sum(axis=0)          # (n,)
    alpha = float(np.exp(model.log_alpha))
    ent_shift = categorical_entropy(logits) - math.log(K)
    return value + alpha * ent_shift


@dataclass
class SegmentBatch:
    s_t: np.ndarray          # (n, ds)
    fs_idx: np.ndarray       # (n,)
    goals: list[np.ndarray]  # per-row normalized goal
    step_idx: np.ndarray     # (n,)
    suffix_return: np.ndarray  # (n,) discounted reward suffix
    suffix_len: np.ndarray   # (n,)
    s_end: np.ndarray        # (n, ds)
    terminal: np.ndarray     # (n,) 1.0 where episode ended inside the block

    @property
    def n(self):
        return len(self.fs_idx)


def make_segment_batch(segments: list[Segment], gamma: float) -> SegmentBatch:
    return SegmentBatch(
        s_t=np.stack([s.s_t for s in segments]),
        fs_idx=np.array([s.fs_index for s in segments]),
        goals=[s.goal for s in segments],
        step_idx=np.array([s.step_index for s in segments]),
        suffix_return=np.array(
            [float(np.sum(s.rewards * gamma ** np.arange(len(s.rewards)))) for s in segments]
        ),
        suffix_len=np.array([len(s.rewards) for s in segments]),
        s_end=np.stack([s.s_end for s in segments]),
        terminal=np.array([float(s.terminal) for s in segments]),
    )


def stepcond_targets(batch: SegmentBatch, model: HighLevelModel, gamma: float,
                     noise: np.ndarray) -> np.ndarray:
    """Bootstrap targets: discounted suffix return plus gamma^(c-i) V(s_end),
    with the bootstrap dropped on terminal segments."""
    v_end = soft_value(batch.s_end, model, noise, use_target=True).data
    return batch.suffix_return + (
        gamma ** batch.suffix_len * (1.0 - batch.terminal) * v_end
    )


def stepcond_critic_loss(batch: SegmentBatch, targets: np.ndarray,
                         model: HighLevelModel, critics: Params | None = None):
    """Half mean squared residual of Q(s_t, F_t, g_t, i) against fixed targets."""
    critics = critics if critics is not None else model.critics
    lp = lift(critics)
    x = np.concatenate(
        [
            batch.s_t,
            model.onehot(batch.fs_idx),
            model.goal_channel_matrix(batch.fs_idx, batch.goals),
            (batch.step_idx / model.cfg.c)[:, None],
        ],
        axis=-1,
    )
    q1 = mlp_forward(lp, Var(x), prefix="q1_")[:, 0]
    q2 = mlp_forward(lp, Var(x), prefix="q2_")[:, 0]
    r1 = q1 - Var(targets)
    r2 = q2 - Var(targets)
    loss = 0.5 * concat([r1.square(), r2.square()], axis=0).mean()
    loss.backward()
    return float(loss.data), grads_of(lp)


def joint_policy_loss(states: np.ndarray, model: HighLevelModel, noise: np.ndarray,
                      pi_f: Params | None = None, pi_g: Params | None = None):
    """Both-policy loss: explicit expectation over all sets of the normalized
    goal log-likelihood minus the online twin-min critic, minus the discrete
    entropy bonus."""
    pi_f = pi_f if pi_f is not None else model.pi_f
    pi_g = pi_g if pi_g is not None else model.pi_g
    lf = lift(pi_f)
    lg = lift(pi_g)
    K = model.n_sets

    logits = mlp_forward(lf, Var(states))
    probs = log_softmax(logits).exp()
    heads = _goal_heads(lg, states, K)
    noise_k = _split_noise(model, noise)
    samples, logps = [], []
    for k, (mean, log_std) in enumerate(heads):
        a, logp = sample_squashed_gaussian(mean, log_std, noise_k[k])
        samples.append(a)
        logps.append(logp)
    q_min = _critic_all_sets(_const(model.critics), model, states, samples)
    logp_mat = stack_rows(logps)
    betas = Var(np.exp(model.log_betas) / np.array(model.set_dims)).reshape(K, 1)
    inner = betas * logp_mat - q_min                        # (K, n)
    alpha = float(np.exp(model.log_alpha))
    per_state = (probs.transpose(1, 0) * inner).sum(axis=0) - alpha * categorical_entropy(logits)
    loss = per_state.mean()
    loss.backward()
    mean_ent = float(categorical_entropy(Var(logits.data)).data.mean())
    mean_logp_norm = [
        float((logps[k].data / model.set_dims[k]).mean()) for k in range(K)
    ]
    probs_mean = probs.data.mean(axis=0)
    return float(loss.data), grads_of(lf), grads_of(lg), {
        "pi_f_entropy": mean_ent,
        "probs_mean": probs_mean,
        "logp_norm": mean_logp_norm,
    }


def dual_temperature_losses(states: np.ndarray, model: HighLevelModel, noise: np.ndarray):
    """Temperature losses for the discrete selector and the per-set goal
    policies; the per-set loss is weighted by the selector probability."""
    K = model.n_sets
    logits = mlp_forward(_const(model.pi_f), Var(states))
    probs = log_softmax(logits).exp().data                       # (n, K)
    ent = categorical_entropy(Var(logits.data)).data             # (n,)
    heads = _goal_heads(_const(model.pi_g), states, K)
    noise_k = _split_noise(model, noise)
    logp_norm = np.stack(
        [
            sample_squashed_gaussian(m, s, noise_k[k])[1].data / model.set_dims[k]
            for k, (m, s) in enumerate(heads)
        ]
    )                                                            # (K, n)

    la = lift({"log_alpha": model.log_alpha.reshape(1)})
    lb = lift({"log_betas": model.log_betas})
    alpha = la["log_alpha"].exp()
    betas = lb["log_betas"].exp()                                # (K,)

    j_alpha = (alpha * Var(ent - model.target_entropy_f)).mean()
    inner = (probs.T * (logp_norm + model.target_entropy_g)).mean(axis=1)  # (K,)
    j_beta = -(betas * Var(inner)).sum()
    total = j_alpha + j_beta
    total.backward()
    g_alpha = float(la["log_alpha"].grad[0])
    g_betas = lb["log_betas"].grad
    if g_betas is None:
        g_betas = np.zeros(K)
    return float(j_alpha.data), float(j_beta.data), g_alpha, g_betas


@dataclass
class HiOptState:
    q: Adam
    f: Adam
    g: Adam
    alpha: Adam
    beta: Adam

    @staticmethod
    def create(model: HighLevelModel, cfg: HiConfig) -> "HiOptState":
        return HiOptState(
            q=Adam(model.critics, cfg.lr_q),
            f=Adam(model.pi_f, cfg.lr_f),
            g=Adam(model.pi_g, cfg.lr_g),
            alpha=Adam({"log_alpha": np.zeros(1)}, cfg.lr_alpha),
            beta=Adam({"log_betas": np.zeros(model.n_sets)}, cfg.lr_beta),
        )


def hi_update(model: HighLevelModel, opt: HiOptState, segments: list[Segment],
              states: np.ndarray, cfg: HiConfig, rng: np.random.Generator,
              train_pi_f: bool = True) -> dict:
    """One full high-level gradient step: critic, both policies, both
    temperatures, target blend. ``states`` are the policy-update states
    (segment start states)."""
    batch = make_segment_batch(segments, cfg.gamma)
    noise_v = rng.standard_normal((batch.n, model.total_goal_dims))
    targets = stepcond_targets(batch, model, cfg.gamma, noise_v)
    q_loss, q_grads = stepcond_critic_loss(batch, targets, model)
    opt.q.step(model.critics, q_grads)

    noise_pi = rng.standard_normal((len(states), model.total_goal_dims))
    pi_loss, f_grads, g_grads, info = joint_policy_loss(states, model, noise_pi)
    if train_pi_f:
        opt.f.step(model.pi_f, f_grads)
    opt.g.step(model.pi_g, g_grads)

    noise_t = rng.standard_normal((len(states), model.total_goal_dims))
    j_alpha, j_beta, g_alpha, g_betas = dual_temperature_losses(states, model, noise_t)
    if train_pi_f:
        box_a = {"log_alpha": model.log_alpha.reshape(1)}
        opt.alpha.step(box_a, {"log_alpha": np.array([g_alpha])})
        model.log_alpha = box_a["log_alpha"].reshape(())
    box_b = {"log_betas": model.log_betas}
    opt.beta.step(box_b, {"log_betas": g_betas})
    model.log_betas = box_b["log_betas"]

    polyak_update(model.critic_targets, model.critics, cfg.tau)
    return {
        "q_loss": q_loss,
        "pi_loss": pi_loss,
        "alpha_loss": j_alpha,
        "beta_loss": j_beta,
        "alpha": float(np.exp(model.log_alpha)),
        "beta_mean": float(np.exp(model.log_betas).mean()),
        "pi_f_entropy": info["pi_f_entropy"],
    }
