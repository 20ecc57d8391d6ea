"""Downstream training of the hierarchical policy.

A frozen pre-trained skill policy executes short goal-directed segments while
two high-level heads — a discrete selector over feature sets and a
per-set Gaussian goal policy — are trained on task reward with
step-conditioned critics. A single-set mode trains only the goal policy
(the fixed-goal-space baseline); running that mode once per candidate set
and keeping the best evaluation is the exhaustive-sweep baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .autodiff import Var
from .goalspace import (
    FeatureCatalog,
    FeatureSet,
    GoalTransform,
    enumerate_feature_sets,
    relative_goal_init,
    relative_goal_update,
    relative_reference,
)
from .hisac import HiConfig, HighLevelModel, HiOptState, hi_update
from .nets import lift, mlp_forward, mlp_trunk, split_gaussian
from .pretrain import delta_embedding, skill_observation
from .replay import CircularBuffer, SegmentBlock, sample_segments
from .sac import SacModel


@dataclass
class HlTrainConfig:
    """Driver-level settings around the high-level losses."""

    hi: HiConfig = field(default_factory=HiConfig)
    mode: str = "hsd3"                  # "hsd3" or "sd"
    fixed_set_index: int = -1           # feature-set index for "sd" mode
    total_steps: int = 200_000
    update_interval: int = 50           # env steps between update bursts
    gradient_steps: int = 10
    buffer_capacity: int = 20_000       # segments
    eval_interval: int = 20_000
    eval_trials: int = 50
    metrics_interval: int = 2000

    def __post_init__(self):
        if self.mode not in ("hsd3", "sd"):
            raise ValueError(f"unknown mode: {self.mode}")
        if self.mode == "sd" and self.fixed_set_index < 0:
            raise ValueError("sd mode requires fixed_set_index")


class LowLevelSkills:
    """Frozen goal-conditioned skill policy plus its feature catalog."""

    def __init__(self, actor: dict, catalog: FeatureCatalog, proprio_dim: int,
                 action_dim: int):
        self.actor = actor
        self.catalog = catalog
        self.proprio_dim = proprio_dim
        self.action_dim = action_dim
        self.transforms = {
            fs.group_mask: GoalTransform.for_feature_set(catalog, fs)
            for fs in enumerate_feature_sets(catalog)
        }

    @staticmethod
    def from_model(model: SacModel, catalog: FeatureCatalog, proprio_dim: int) -> "LowLevelSkills":
        return LowLevelSkills({k: v.copy() for k, v in model.actor.items()},
                              catalog, proprio_dim, model.action_dim)

    def act(self, s_p: np.ndarray, fs: FeatureSet, delta: np.ndarray) -> np.ndarray:
        """Deterministic (tanh of the Gaussian mean) skill action."""
        obs = skill_observation(s_p, fs.bow, delta_embedding(fs, delta, self.catalog.scalar_dims))
        out = mlp_forward(lift(self.actor), Var(obs[None, :]))
        mean, _ = split_gaussian(out)
        return np.tanh(mean.data[0])


@dataclass
class RolloutCursor:
    """Per-episode acting state: the active goal segment and its accumulator."""

    t: int = 0
    fs_index: int = -1
    fs: Optional[FeatureSet] = None
    g: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    reference: Optional[np.ndarray] = None
    seg_states: list = field(default_factory=list)
    seg_rewards: list = field(default_factory=list)


def hl_state(frame) -> np.ndarray:
    return np.concatenate([frame.s_p, frame.s_plus])


def sample_high_action(model: HighLevelModel, state: np.ndarray,
                       rng: Optional[np.random.Generator],
                       deterministic: bool = False) -> tuple[int, np.ndarray]:
    """Draw (feature set, normalized goal) from the high-level heads;
    argmax/mean when deterministic."""
    logits = mlp_forward(lift(model.pi_f), Var(state[None, :])).data[0]
    if deterministic:
        k = int(np.argmax(logits))
    else:
        z = logits - logits.max()
        p = np.exp(z) / np.exp(z).sum()
        k = int(rng.choice(len(p), p=p))
    feats = mlp_trunk(lift(model.pi_g), Var(state[None, :]))
    out = (feats @ Var(model.pi_g[f"head{k}_w"]) + Var(model.pi_g[f"head{k}_b"]))
    mean, log_std = split_gaussian(out)
    if deterministic:
        g = np.tanh(mean.data[0])
    else:
        eps = rng.standard_normal(model.set_dims[k])
        g = np.tanh(mean.data[0] + np.exp(log_std.data[0]) * eps)
    return k, g


def begin_segment(cursor: RolloutCursor, frame, model: HighLevelModel,
                  feature_sets: list[FeatureSet], catalog: FeatureCatalog,
                  transforms: list[GoalTransform], rng, *,
                  deterministic: bool = False, warmup: bool = False,
                  fixed_index: Optional[int] = None) -> None:
    state = hl_state(frame)
    if warmup:
        k = fixed_index if fixed_index is not None else int(rng.integers(len(feature_sets)))
        g = rng.uniform(-1.0, 1.0, size=feature_sets[k].n_dims)
    else:
        k, g = sample_high_action(model, state, rng, deterministic)
        if fixed_index is not None:
            k = fixed_index
    cursor.fs_index = k
    cursor.fs = feature_sets[k]
    cursor.g = g
    cursor.reference = relative_reference(catalog, frame.s_g)
    cursor.delta = relative_goal_init(transforms[k], g, frame.s_g - cursor.reference)
    cursor.seg_states = [state]
    cursor.seg_rewards = []


def act_hierarchical(cursor: RolloutCursor, low: LowLevelSkills, frame) -> np.ndarray:
    return low.act(frame.s_p, cursor.fs, cursor.delta)


def advance_cursor(cursor: RolloutCursor, transforms, frame_prev, frame_next,
                   reward: float) -> None:
    cursor.delta = relative_goal_update(
        transforms[cursor.fs_index], cursor.delta,
        frame_prev.s_g - cursor.reference, frame_next.s_g - cursor.reference,
    )
    cursor.seg_states.append(hl_state(frame_next))
    cursor.seg_rewards.append(reward)
    cursor.t += 1


def close_segment(cursor: RolloutCursor, terminal: bool) -> SegmentBlock:
    return SegmentBlock(
        states=np.stack(cursor.seg_states),
        fs_index=cursor.fs_index,
        goal=np.asarray(cursor.g, dtype=float),
        rewards=np.asarray(cursor.seg_rewards, dtype=float),
        terminal=terminal,
    )


@dataclass
class HlTrainResult:
    model: HighLevelModel
    metrics: list
    buffer: CircularBuffer
    selection_counts: np.ndarray
    eval_history: list


def run_hl_training(
    cfg: HlTrainConfig,
    env,
    eval_env,
    low: LowLevelSkills,
    rng: np.random.Generator,
    feature_sets: Optional[list[FeatureSet]] = None,
    warmup_steps: Optional[int] = None,
) -> HlTrainResult:
    catalog = low.catalog
    if feature_sets is None:
        feature_sets = enumerate_feature_sets(catalog)
    if cfg.mode == "sd":
        feature_sets = [feature_sets[cfg.fixed_set_index]]
    transforms = [GoalTransform.for_feature_set(catalog, fs) for fs in feature_sets]

    probe = env.reset(0)
    state_dim = len(hl_state(probe))
    model = HighLevelModel(state_dim, catalog, feature_sets, cfg.hi, rng)
    opt = HiOptState.create(model, cfg.hi)
    buffer = CircularBuffer(cfg.buffer_capacity)
    warmup = cfg.hi.warmup_steps if warmup_steps is None else warmup_steps
    train_pi_f = cfg.mode == "hsd3"
    c = cfg.hi.c

    metrics: list[dict] = []
    eval_history: list[dict] = []
    selection_counts = np.zeros(len(feature_sets))
    returns_window: list[float] = []
    last_diag: dict = {}

    frame = env.reset(int(rng.integers(2**31)))
    cursor = RolloutCursor()
    ep_return = 0.0
    ep_t = 0

    for t in range(cfg.total_steps):
        if ep_t % c == 0:
            if cursor.seg_rewards:
                buffer.append(close_segment(cursor, terminal=False))
            begin_segment(cursor, frame, model, feature_sets, catalog, transforms,
                          rng, warmup=(t < warmup),
                          fixed_index=0 if cfg.mode == "sd" else None)
            selection_counts[cursor.fs_index] += 1
        action = act_hierarchical(cursor, low, frame)
        frame2 = env.step(action)
        advance_cursor(cursor, transforms, frame, frame2, frame2.reward)
        ep_return += frame2.reward
        ep_t += 1
        frame = frame2

        if frame2.done:
            buffer.append(close_segment(cursor, terminal=True))
            cursor = RolloutCursor()
            returns_window.append(ep_return)
            returns_window = returns_window[-20:]
            ep_return, ep_t = 0.0, 0
            frame = env.reset(int(rng.integers(2**31)))

        if (t + 1) % cfg.update_interval == 0 and t >= warmup \
                and len(buffer) >= cfg.hi.batch_size:
            for _ in range(cfg.gradient_steps):
                segs = sample_segments(buffer, cfg.hi.batch_size, c, rng)
                states = np.stack([s.s_t for s in segs])
                last_diag = hi_update(model, opt, segs, states, cfg.hi, rng,
                                      train_pi_f=train_pi_f)

        if (t + 1) % cfg.eval_interval == 0:
            mean, std, _ = evaluate(model, low, eval_env, feature_sets,
                                    n_trials=cfg.eval_trials, c=c)
            eval_history.append({"step": t + 1, "mean": mean, "std": std})

        if (t + 1) % cfg.metrics_interval == 0:
            total = selection_counts.sum()
            row = {
                "step": t + 1,
                "train_return": float(np.mean(returns_window)) if returns_window else 0.0,
                "alpha": float(np.exp(model.log_alpha)),
                "beta_mean": float(np.exp(model.log_betas).mean()),
            }
            if total > 0:
                row["selection_entropy"] = _hist_entropy(selection_counts / total)
            row.update({k: float(v) for k, v in last_diag.items()})
            metrics.append(row)

    return HlTrainResult(model, metrics, buffer, selection_counts, eval_history)


def _hist_entropy(p: np.ndarray) -> float:
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def evaluate(model: HighLevelModel, low: LowLevelSkills, env,
             feature_sets: list[FeatureSet], n_trials: int = 50,
             c: int = 5, seeds: Optional[list[int]] = None,
             record_trace: bool = False):
    """Deterministic evaluation over a fixed seed set: the discrete head
    picks its argmax, both Gaussian heads act at their squashed means.

    Returns (mean, std, per-trial returns); with ``record_trace``, also a
    per-step (t, set index, goal) trace of the first trial.
    """
    catalog = low.catalog
    transforms = [GoalTransform.for_feature_set(catalog, fs) for fs in feature_sets]
    if seeds is None:
        seeds = list(range(n_trials))
    returns = []
    trace: list = []
    for trial, seed in enumerate(seeds):
        frame = env.reset(seed)
        cursor = RolloutCursor()
        total = 0.0
        ep_t = 0
        done = False
        while not done:
            if ep_t % c == 0:
                begin_segment(cursor, frame, model, feature_sets, catalog,
                              transforms, None, deterministic=True)
                if record_trace and trial == 0:
                    trace.append((ep_t, cursor.fs_index, cursor.g.copy()))
            action = act_hierarchical(cursor, low, frame)
            frame2 = env.step(action)
            advance_cursor(cursor, transforms, frame, frame2, frame2.reward)
            total += frame2.reward
            ep_t += 1
            frame = frame2
            done = frame2.done
        returns.append(total)
    returns = np.array(returns)
    out = (float(returns.mean()), float(returns.std()), returns)
    if record_trace:
        return out + (trace,)
    return out


def sweep_fixed_sets(cfg: HlTrainConfig, env_factory, low: LowLevelSkills,
                     rng: np.random.Generator,
                     set_indices: Optional[list[int]] = None) -> dict:
    """Exhaustive single-set sweep: train one fixed-set run per candidate
    feature set and report each final evaluation, plus the best."""
    sets = enumerate_feature_sets(low.catalog)
    if set_indices is None:
        set_indices = list(range(len(sets)))
    results = {}
    for idx in set_indices:
        run_cfg = HlTrainConfig(
            hi=cfg.hi, mode="sd", fixed_set_index=idx,
            total_steps=cfg.total_steps, update_interval=cfg.update_interval,
            gradient_steps=cfg.gradient_steps, buffer_capacity=cfg.buffer_capacity,
            eval_interval=cfg.eval_interval, eval_trials=cfg.eval_trials,
            metrics_interval=cfg.metrics_interval,
        )
        env = env_factory()
        eval_env = env_factory()
        res = run_hl_training(run_cfg, env, eval_env, low,
                              np.random.default_rng(rng.integers(2**31)))
        final = res.eval_history[-1] if res.eval_history else {"mean": -math.inf}
        results[sets[idx].name] = {"index": idx, "eval": final, "result": res}
    best = max(results, key=lambda k: results[k]["eval"]["mean"])
    return {"runs": results, "best": best}
