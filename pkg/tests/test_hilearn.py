import numpy as np
import pytest

from hskills.envs import make_env
from hskills.goalspace import (
    GoalTransform,
    enumerate_feature_sets,
    relative_goal_init,
    walker_catalog,
)
from hskills.hilearn import (
    HlTrainConfig,
    LowLevelSkills,
    RolloutCursor,
    act_hierarchical,
    advance_cursor,
    begin_segment,
    close_segment,
    evaluate,
    hl_state,
    run_hl_training,
    sample_high_action,
    sweep_fixed_sets,
)
from hskills.hisac import HiConfig, HighLevelModel
from hskills.sac import SacConfig, SacModel


def tiny_hi(c=5):
    return HiConfig(c=c, hidden=8, n_layers=2, batch_size=8, warmup_steps=100)


def make_low(rng=None):
    rng = rng or np.random.default_rng(0)
    cat = walker_catalog()
    obs_dim = 15 + 2 * cat.scalar_dims
    model = SacModel.create(rng, obs_dim, 7, SacConfig(hidden=8, n_layers=2))
    return LowLevelSkills.from_model(model, cat, 15)


class ForwardLow:
    """Scripted stand-in skill: always push the torso forward."""

    def __init__(self):
        self.catalog = walker_catalog()
        self.proprio_dim = 15
        self.action_dim = 7

    def act(self, s_p, fs, delta):
        a = np.zeros(7)
        a[0] = 1.0
        return a


def make_hl_model(low, env, feature_sets, cfg, seed=1):
    state_dim = len(hl_state(env.reset(0)))
    return HighLevelModel(state_dim, low.catalog, feature_sets, cfg,
                          np.random.default_rng(seed))


class TestConfig:
    def test_mode_validation(self):
        with pytest.raises(ValueError):
            HlTrainConfig(mode="bogus")
        with pytest.raises(ValueError):
            HlTrainConfig(mode="sd")
        HlTrainConfig(mode="sd", fixed_set_index=3)


class TestActing:
    def test_decision_every_c_steps(self):
        low = make_low()
        env = make_env("polebalance")
        sets = enumerate_feature_sets(low.catalog)
        cfg = tiny_hi(c=4)
        model = make_hl_model(low, env, sets, cfg)
        out = evaluate(model, low, env, sets, n_trials=1, c=4, record_trace=True)
        mean, std, returns, trace = out
        env2 = make_env("polebalance")
        frame = env2.reset(0)
        steps = 0
        # replay to count episode length deterministically
        tfs = [GoalTransform.for_feature_set(low.catalog, fs) for fs in sets]
        cursor = RolloutCursor()
        done = False
        while not done:
            if steps % 4 == 0:
                begin_segment(cursor, frame, model, sets, low.catalog, tfs,
                              None, deterministic=True)
            frame2 = env2.step(act_hierarchical(cursor, low, frame))
            advance_cursor(cursor, tfs, frame, frame2, frame2.reward)
            frame = frame2
            steps += 1
            done = frame2.done
        assert len(trace) == -(-steps // 4)   # ceil division

    def test_c1_resamples_every_step(self):
        low = make_low()
        env = make_env("polebalance")
        sets = enumerate_feature_sets(low.catalog)
        model = make_hl_model(low, env, sets, tiny_hi(c=1))
        *_, trace = evaluate(model, low, env, sets, n_trials=1, c=1,
                             record_trace=True)
        # one decision per executed step
        env2 = make_env("polebalance")
        frame = env2.reset(0)
        n = 0
        tfs = [GoalTransform.for_feature_set(low.catalog, fs) for fs in sets]
        cursor = RolloutCursor()
        while True:
            begin_segment(cursor, frame, model, sets, low.catalog, tfs, None,
                          deterministic=True)
            frame = env2.step(act_hierarchical(cursor, low, frame))
            n += 1
            if frame.done:
                break
        assert len(trace) == n

    def test_delta_invariant_along_rollout(self):
        low = make_low()
        env = make_env("pretrain")
        sets = enumerate_feature_sets(low.catalog)
        cfg = tiny_hi()
        model = make_hl_model(low, env, sets, cfg)
        tfs = [GoalTransform.for_feature_set(low.catalog, fs) for fs in sets]
        rng = np.random.default_rng(3)
        frame = env.reset(7)
        cursor = RolloutCursor()
        begin_segment(cursor, frame, model, sets, low.catalog, tfs, rng)
        k = cursor.fs_index
        for _ in range(10):
            frame2 = env.step(act_hierarchical(cursor, low, frame))
            advance_cursor(cursor, tfs, frame, frame2, frame2.reward)
            frame = frame2
            expected = relative_goal_init(tfs[k], cursor.g, frame.s_g - cursor.reference)
            np.testing.assert_allclose(cursor.delta, expected, atol=1e-9)

    def test_sample_high_action_deterministic_is_argmax_mean(self):
        low = make_low()
        env = make_env("pretrain")
        sets = enumerate_feature_sets(low.catalog)
        model = make_hl_model(low, env, sets, tiny_hi())
        state = hl_state(env.reset(0))
        k1, g1 = sample_high_action(model, state, None, deterministic=True)
        k2, g2 = sample_high_action(model, state, None, deterministic=True)
        assert k1 == k2
        np.testing.assert_array_equal(g1, g2)
        assert (np.abs(g1) <= 1).all()

    def test_segment_block_contents(self):
        low = make_low()
        env = make_env("pretrain")
        sets = enumerate_feature_sets(low.catalog)
        model = make_hl_model(low, env, sets, tiny_hi())
        tfs = [GoalTransform.for_feature_set(low.catalog, fs) for fs in sets]
        rng = np.random.default_rng(4)
        frame = env.reset(1)
        cursor = RolloutCursor()
        begin_segment(cursor, frame, model, sets, low.catalog, tfs, rng)
        for _ in range(5):
            frame2 = env.step(act_hierarchical(cursor, low, frame))
            advance_cursor(cursor, tfs, frame, frame2, frame2.reward)
            frame = frame2
        block = close_segment(cursor, terminal=False)
        assert block.states.shape[0] == 6
        assert len(block.rewards) == 5
        assert block.fs_index == cursor.fs_index


class TestEvaluate:
    def test_bit_identical_across_invocations(self):
        low = make_low()
        sets = enumerate_feature_sets(low.catalog)
        model = make_hl_model(low, make_env("hurdles"), sets, tiny_hi())
        m1, s1, r1 = evaluate(model, low, make_env("hurdles"), sets, n_trials=5)
        m2, s2, r2 = evaluate(model, low, make_env("hurdles"), sets, n_trials=5)
        assert m1 == m2 and s1 == s2
        np.testing.assert_array_equal(r1, r2)

    def test_random_policy_scores_poorly_on_hurdles(self):
        low = make_low()
        sets = enumerate_feature_sets(low.catalog)
        model = make_hl_model(low, make_env("hurdles"), sets, tiny_hi())
        mean, _, _ = evaluate(model, low, make_env("hurdles"), sets, n_trials=5)
        assert mean <= 1.0

    def test_scripted_forward_policy_passes_an_obstacle(self):
        low = ForwardLow()
        sets = enumerate_feature_sets(low.catalog)
        model = make_hl_model(low, make_env("hurdles"), sets, tiny_hi())
        mean, _, returns = evaluate(model, low, make_env("hurdles"), sets, n_trials=3)
        assert (returns >= 1.0).all()


class TestTraining:
    def test_zero_steps_leaves_model_unchanged(self):
        low = make_low()
        cfg = HlTrainConfig(hi=tiny_hi(), total_steps=0, eval_interval=10**9)
        res = run_hl_training(cfg, make_env("pretrain"), make_env("pretrain"),
                              low, np.random.default_rng(5))
        assert res.metrics == [] and len(res.buffer) == 0

    def test_segment_accounting(self):
        low = make_low()
        cfg = HlTrainConfig(hi=tiny_hi(c=5), total_steps=200,
                            eval_interval=10**9, metrics_interval=100,
                            update_interval=10**9)
        res = run_hl_training(cfg, make_env("polebalance"), make_env("polebalance"),
                              low, np.random.default_rng(6), warmup_steps=10**9)
        # every rollout step lands in exactly one segment
        total = sum(len(b.rewards) for b in res.buffer)
        # the currently-open segment (if any) is not yet in the buffer
        assert 200 - cfg.hi.c <= total <= 200
        assert res.selection_counts.sum() == sum(1 for _ in res.buffer) + (
            1 if total < 200 else 0)

    def test_updates_run_and_report(self):
        low = make_low()
        cfg = HlTrainConfig(hi=tiny_hi(c=5), total_steps=400,
                            update_interval=100, gradient_steps=2,
                            eval_interval=10**9, metrics_interval=200)
        res = run_hl_training(cfg, make_env("polebalance"), make_env("polebalance"),
                              low, np.random.default_rng(7), warmup_steps=50)
        assert len(res.metrics) == 2
        assert any("q_loss" in row for row in res.metrics)
        for row in res.metrics:
            for v in row.values():
                assert np.isfinite(v)

    def test_sd_mode_trains_single_set_and_freezes_selector(self):
        low = make_low()
        cfg = HlTrainConfig(hi=tiny_hi(c=5), mode="sd", fixed_set_index=30,
                            total_steps=300, update_interval=100,
                            gradient_steps=2, eval_interval=10**9,
                            metrics_interval=300)
        env = make_env("polebalance")
        res = run_hl_training(cfg, env, make_env("polebalance"), low,
                              np.random.default_rng(8), warmup_steps=50)
        assert res.model.n_sets == 1
        assert res.selection_counts.shape == (1,)
        # with one set, every decision picks it
        assert res.selection_counts[0] > 0

    def test_eval_history_recorded(self):
        low = make_low()
        cfg = HlTrainConfig(hi=tiny_hi(c=5), total_steps=120,
                            update_interval=10**9, eval_interval=60,
                            eval_trials=2, metrics_interval=10**9)
        res = run_hl_training(cfg, make_env("polebalance"), make_env("polebalance"),
                              low, np.random.default_rng(9), warmup_steps=10**9)
        assert len(res.eval_history) == 2
        assert all(np.isfinite(row["mean"]) for row in res.eval_history)


class TestSweep:
    def test_sweep_returns_best_of_runs(self):
        low = make_low()
        cfg = HlTrainConfig(hi=tiny_hi(c=5), total_steps=60,
                            update_interval=10**9, eval_interval=60,
                            eval_trials=1, metrics_interval=10**9)
        out = sweep_fixed_sets(cfg, lambda: make_env("polebalance"), low,
                               np.random.default_rng(10), set_indices=[0, 30])
        assert set(out["runs"]) == {"torso_x", "torso_x+torso_rot+torso_z+left_foot+right_foot"}
        assert out["best"] in out["runs"]
        best_mean = out["runs"][out["best"]]["eval"]["mean"]
        for r in out["runs"].values():
            assert r["eval"]["mean"] <= best_mean
