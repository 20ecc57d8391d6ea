"""Unsupervised skill pre-training.

The driver repeatedly samples a feature set and a normalized goal, runs the
low-level policy for up to ``horizon`` steps towards it, and rewards the
decrease in normalized goal distance. Goal episodes roll on without a
simulator reset — the simulation resets only on invalid states or after a
fixed number of goal episodes — and stored transitions bootstrap across goal
switches.

A controllability probe (an auxiliary critic on a 0/1 goal-reached reward)
is trained alongside the main critic; querying it with buffer states and
random goals estimates the fraction of the goal space that is reachable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Var, concat
from .goalspace import (
    FeatureCatalog,
    FeatureSet,
    GoalTransform,
    distance_reward,
    enumerate_feature_sets,
    relative_goal_init,
    relative_goal_update,
    relative_reference,
)
from .nets import Adam, init_mlp, lift, mlp_forward, polyak_update
from .replay import CircularBuffer, Transition, sample_minibatch
from .sac import SacConfig, SacModel, SacOptState, make_batch, sac_update


@dataclass
class PretrainConfig:
    horizon: int = 72
    goal_threshold: float = 0.1
    resample_prob: float = 0.0
    reset_interval: int = 100
    update_interval: int = 50     # env steps between update bursts
    gradient_steps: int = 50      # sac updates per burst
    warmup_steps: int = 10_000
    total_steps: int = 100_000
    ctrl_cost: float = 0.01
    buffer_capacity: int = 200_000
    metrics_interval: int = 1000

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not 0.0 <= self.resample_prob < 1.0:
            raise ValueError("resample_prob must be in [0, 1)")
        if self.reset_interval < 1:
            raise ValueError("reset_interval must be >= 1")

    @property
    def gamma(self) -> float:
        return 1.0 - 1.0 / self.horizon


@dataclass
class EpisodeState:
    """One goal episode: a feature set, a normalized goal, and the rolling
    delta (absolute raw target minus current features)."""

    fs_index: int
    fs: FeatureSet
    transform: GoalTransform
    g: np.ndarray
    reference: np.ndarray
    delta: np.ndarray
    steps: int = 0


def delta_embedding(fs: FeatureSet, delta: np.ndarray, n_scalar: int) -> np.ndarray:
    """Fixed-width goal input: the delta scattered onto the catalog's scalar
    slots, zero on inactive dims."""
    out = np.zeros(n_scalar)
    out[list(fs.scalar_indices)] = delta
    return out


def skill_observation(s_p: np.ndarray, bow: np.ndarray, delta_embed: np.ndarray) -> np.ndarray:
    return np.concatenate([s_p, bow, delta_embed])


def normalized_goal_distance(ep: EpisodeState, s_g: np.ndarray) -> float:
    cur = ep.transform.project(ep.transform.select(s_g - ep.reference))
    return float(np.linalg.norm(cur - ep.g))


def sample_goal_episode(
    catalog: FeatureCatalog,
    feature_sets: list[FeatureSet],
    transforms: list[GoalTransform],
    s_g: np.ndarray,
    rng: np.random.Generator,
    fs_index: Optional[int] = None,
) -> EpisodeState:
    if fs_index is None:
        fs_index = int(rng.integers(len(feature_sets)))
    fs = feature_sets[fs_index]
    tf = transforms[fs_index]
    g = rng.uniform(-1.0, 1.0, size=fs.n_dims)
    ref = relative_reference(catalog, s_g)
    delta = relative_goal_init(tf, g, s_g - ref)
    return EpisodeState(fs_index, fs, tf, g, ref, delta)


def step_env(env, ep: EpisodeState, action: np.ndarray, cfg: PretrainConfig,
             rng: np.random.Generator):
    """Advance the simulator one step under the current goal episode.

    Returns ``(frame, reward, done, reset)``: ``done`` ends the goal episode
    (goal reached, horizon elapsed, or random resample), ``reset`` requires a
    simulator reset (invalid state; the reward is then -1).
    """
    prev_shifted = env_goal_frame(env) - ep.reference
    frame = env.step(action)
    next_shifted = frame.s_g - ep.reference
    reward = distance_reward(ep.transform, prev_shifted, next_shifted, ep.g,
                             action=action, ctrl_cost=cfg.ctrl_cost)
    ep.steps += 1
    ep.delta = relative_goal_update(ep.transform, ep.delta, prev_shifted, next_shifted)

    reached = normalized_goal_distance(ep, frame.s_g) < cfg.goal_threshold
    done = reached or ep.steps >= cfg.horizon
    if cfg.resample_prob > 0.0 and rng.random() < cfg.resample_prob:
        done = True
    reset = bool(frame.invalid)
    if reset:
        reward = -1.0
        done = True
    return frame, reward, done, reset, reached


def env_goal_frame(env) -> np.ndarray:
    from .envs.robot import goal_features

    return goal_features(env.state)


@dataclass
class ProbeState:
    """Auxiliary critic on the 0/1 goal-reached reward."""

    params: dict
    targets: dict
    opt: Adam


def make_probe(rng: np.random.Generator, obs_dim: int, action_dim: int,
               sac_cfg: SacConfig) -> ProbeState:
    params = init_mlp(rng, obs_dim + action_dim, 1, sac_cfg.hidden, sac_cfg.n_layers)
    targets = {k: v.copy() for k, v in params.items()}
    return ProbeState(params, targets, Adam(params, sac_cfg.lr_q))


def reached_indicator(catalog: FeatureCatalog, bow: np.ndarray,
                      delta_embed: np.ndarray, threshold: float) -> float:
    """Recover the goal-reached bit from a stored (bow, delta) pair: the
    normalized distance is the range-scaled norm of the delta."""
    scale = 2.0 / (catalog.highs() - catalog.lows())
    dist = np.linalg.norm((scale * delta_embed)[bow > 0])
    return 1.0 if dist < threshold else 0.0


def probe_update(probe: ProbeState, model: SacModel, batch_obs: np.ndarray,
                 batch_action: np.ndarray, batch_r01: np.ndarray,
                 batch_obs_next: np.ndarray, batch_done: np.ndarray,
                 gamma: float, tau: float, rng: np.random.Generator) -> float:
    noise = rng.standard_normal((len(batch_obs), model.action_dim))
    from .nets import sample_squashed_gaussian, split_gaussian

    out = mlp_forward(lift(model.actor), Var(batch_obs_next))
    mean, log_std = split_gaussian(out)
    a_next, _ = sample_squashed_gaussian(mean, log_std, noise)
    q_next = mlp_forward(lift(probe.targets),
                         concat([Var(batch_obs_next), a_next.detach()], axis=-1)).data[:, 0]
    target = batch_r01 + gamma * (1.0 - batch_done) * np.clip(q_next, 0.0, 1.0 / (1.0 - gamma))

    lp = lift(probe.params)
    q = mlp_forward(lp, Var(np.concatenate([batch_obs, batch_action], axis=-1)))[:, 0]
    loss = (q - Var(target)).square().mean() * 0.5
    loss.backward()
    probe.opt.step(probe.params, {k: v.grad for k, v in lp.items()})
    polyak_update(probe.targets, probe.params, tau)
    return float(loss.data)


def controllability_probe(probe: ProbeState, model: SacModel, buffer: CircularBuffer,
                          catalog: FeatureCatalog, feature_sets: list[FeatureSet],
                          n: int, rng: np.random.Generator,
                          s_g_of=None) -> float:
    """Mean predicted reach probability over (buffer state, random set,
    random goal) triples, clamped to [0, 1].

    ``s_g_of`` maps a stored transition to its goal-feature vector (in the
    goal-sampling reference frame); without it, features default to range
    midpoints.
    """
    if len(buffer) == 0:
        raise ValueError("empty replay buffer")
    trans = sample_minibatch(buffer, n, rng)
    n_scalar = catalog.scalar_dims
    midpoints = 0.5 * (catalog.lows() + catalog.highs())
    transforms = [GoalTransform.for_feature_set(catalog, fs) for fs in feature_sets]
    obs = []
    for t in trans:
        k = int(rng.integers(len(feature_sets)))
        fs, tf = feature_sets[k], transforms[k]
        g = rng.uniform(-1.0, 1.0, size=fs.n_dims)
        s_g = s_g_of(t) if s_g_of is not None else midpoints
        delta = relative_goal_init(tf, g, s_g)
        obs.append(skill_observation(t.s_p, fs.bow, delta_embedding(fs, delta, n_scalar)))
    obs = np.stack(obs)
    actions = np.stack([model.act(o) for o in obs])
    q = mlp_forward(lift(probe.params), Var(np.concatenate([obs, actions], axis=-1))).data[:, 0]
    return float(np.clip(q, 0.0, 1.0).mean())


@dataclass
class PretrainResult:
    model: SacModel
    metrics: list
    events: list
    reach_rates: dict
    buffer: CircularBuffer


def run_pretraining(
    cfg: PretrainConfig,
    env,
    catalog: FeatureCatalog,
    rng: np.random.Generator,
    feature_sets: Optional[list[FeatureSet]] = None,
    sac_cfg: Optional[SacConfig] = None,
    model: Optional[SacModel] = None,
    record_events: bool = False,
    with_probe: bool = True,
    probe_s_g_of=None,
) -> PretrainResult:
    """Main pre-training loop; returns the trained model, per-interval
    metrics, the (optional) step event log, and recent per-set reach rates."""
    if feature_sets is None:
        feature_sets = enumerate_feature_sets(catalog)
    transforms = [GoalTransform.for_feature_set(catalog, fs) for fs in feature_sets]
    n_scalar = catalog.scalar_dims
    obs_dim = env.proprio_dim + 2 * n_scalar

    sac_cfg = sac_cfg or SacConfig()
    sac_cfg.gamma = cfg.gamma
    if model is None:
        model = SacModel.create(rng, obs_dim, env.action_dim, sac_cfg)
    opt = SacOptState.create(model, sac_cfg)
    probe = make_probe(rng, obs_dim, env.action_dim, sac_cfg) if with_probe else None

    buffer = CircularBuffer(cfg.buffer_capacity)
    metrics: list[dict] = []
    events: list[dict] = []
    reach_window: dict[int, deque] = {k: deque(maxlen=50) for k in range(len(feature_sets))}
    reward_window: deque = deque(maxlen=1000)
    last_diag: dict = {}

    def obs_of(t: Transition) -> np.ndarray:
        return np.concatenate([t.s_p, t.fs_bow, t.delta_goal])

    def obs_next_of(t: Transition) -> np.ndarray:
        return np.concatenate([t.s_p_next, t.fs_bow_next, t.delta_goal_next])

    frame = env.reset(int(rng.integers(2**31)))
    ep = sample_goal_episode(catalog, feature_sets, transforms, frame.s_g, rng)
    goals_since_reset = 1
    if record_events:
        events.append({"t": 0, "event": "goal", "fs_index": ep.fs_index,
                       "goals_since_reset": goals_since_reset})

    for t in range(cfg.total_steps):
        obs = skill_observation(frame.s_p, ep.fs.bow,
                                delta_embedding(ep.fs, ep.delta, n_scalar))
        if t < cfg.warmup_steps:
            action = rng.uniform(-1.0, 1.0, size=env.action_dim)
        else:
            action = model.act(obs, noise=rng.standard_normal(env.action_dim))

        prev_bow = ep.fs.bow.copy()
        prev_delta_embed = obs[env.proprio_dim + n_scalar:]
        frame2, reward, done, reset, reached = step_env(env, ep, action, cfg, rng)
        reward_window.append(reward)

        next_delta_embed = delta_embedding(ep.fs, ep.delta, n_scalar)
        buffer.append(Transition(
            s_p=frame.s_p, fs_bow=prev_bow,
            delta_goal=prev_delta_embed,
            action=action, reward=reward,
            s_p_next=frame2.s_p, fs_bow_next=ep.fs.bow,
            delta_goal_next=next_delta_embed,
            done=1.0 if reset else 0.0,
        ))
        if record_events:
            events.append({
                "t": t + 1, "event": "step", "fs_index": ep.fs_index,
                "ep_steps": ep.steps, "reset": reset, "done": done,
                "delta": ep.delta.copy(), "s_g": frame2.s_g.copy(),
                "reference": ep.reference.copy(), "g": ep.g.copy(),
            })

        if done:
            reach_window[ep.fs_index].append(1.0 if reached else 0.0)

        if reset or (done and goals_since_reset >= cfg.reset_interval):
            frame = env.reset(int(rng.integers(2**31)))
            ep = sample_goal_episode(catalog, feature_sets, transforms, frame.s_g, rng)
            goals_since_reset = 1
            if record_events:
                events.append({"t": t + 1, "event": "reset", "invalid": reset})
                events.append({"t": t + 1, "event": "goal", "fs_index": ep.fs_index,
                               "goals_since_reset": goals_since_reset})
        elif done:
            frame = frame2
            ep = sample_goal_episode(catalog, feature_sets, transforms, frame.s_g, rng)
            goals_since_reset += 1
            if record_events:
                events.append({"t": t + 1, "event": "goal", "fs_index": ep.fs_index,
                               "goals_since_reset": goals_since_reset})
        else:
            frame = frame2

        if (t + 1) % cfg.update_interval == 0 and t >= cfg.warmup_steps \
                and len(buffer) >= sac_cfg.batch_size:
            for _ in range(cfg.gradient_steps):
                trans = sample_minibatch(buffer, sac_cfg.batch_size, rng)
                batch = make_batch(trans, obs_of, obs_next_of)
                last_diag = sac_update(model, opt, batch, sac_cfg, rng)
                if probe is not None:
                    r01 = np.array([
                        reached_indicator(catalog, tr.fs_bow_next, tr.delta_goal_next,
                                          cfg.goal_threshold)
                        for tr in trans
                    ])
                    probe_update(probe, model, batch.obs, batch.action, r01,
                                 batch.obs_next, batch.done, cfg.gamma,
                                 sac_cfg.tau, rng)

        if (t + 1) % cfg.metrics_interval == 0:
            row = {
                "step": t + 1,
                "mean_reward": float(np.mean(reward_window)) if reward_window else 0.0,
                "reach_rate": _overall_rate(reach_window),
                "alpha": model.alpha,
            }
            for k, dq in reach_window.items():
                if dq:
                    row[f"reach_rate_set{k}"] = float(np.mean(dq))
            row.update({k: float(v) for k, v in last_diag.items()})
            if probe is not None and len(buffer) > 0:
                row["controllability"] = controllability_probe(
                    probe, model, buffer, catalog, feature_sets, 64, rng,
                    s_g_of=probe_s_g_of)
            metrics.append(row)

    rates = {k: (float(np.mean(v)) if v else 0.0) for k, v in reach_window.items()}
    return PretrainResult(model, metrics, events, rates, buffer)


def _overall_rate(reach_window: dict[int, deque]) -> float:
    vals = [x for dq in reach_window.values() for x in dq]
    return float(np.mean(vals)) if vals else 0.0
