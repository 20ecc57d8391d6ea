import math

import numpy as np
import pytest

from hskills.autodiff import Var
from hskills.goalspace import build_catalog, enumerate_feature_sets
from hskills.hisac import (
    HiConfig,
    HighLevelModel,
    HiOptState,
    dual_temperature_losses,
    hi_update,
    joint_policy_loss,
    make_segment_batch,
    soft_value,
    stepcond_critic_loss,
    stepcond_targets,
)
from hskills.nets import lift, mlp_forward, sample_squashed_gaussian, split_gaussian, mlp_trunk
from hskills.replay import Segment
from tests.conftest import assert_grads_close, fd_grad_params

STATE_DIM = 3


def tiny_catalog(n_groups=2, dims_per_group=None):
    if dims_per_group is None:
        dims_per_group = (1,) * n_groups
    spec = []
    idx = 0
    for gi in range(n_groups):
        dims = []
        for d in range(dims_per_group[gi]):
            dims.append({"index": idx, "label": f"f{idx}", "lo": -1.0, "hi": 1.0})
            idx += 1
        spec.append({"name": f"g{gi}", "dims": dims})
    return build_catalog(spec)


def make_model(n_groups=2, dims_per_group=None, hidden=6, n_layers=2, c=5, seed=0):
    catalog = tiny_catalog(n_groups, dims_per_group)
    sets = enumerate_feature_sets(catalog)
    cfg = HiConfig(hidden=hidden, n_layers=n_layers, c=c)
    model = HighLevelModel(STATE_DIM, catalog, sets, cfg, np.random.default_rng(seed))
    return model, cfg


def random_segments(model, rng, n=6, c=5, terminal_frac=0.0):
    segs = []
    for _ in range(n):
        length = c
        term = rng.random() < terminal_frac
        if term:
            length = int(rng.integers(1, c + 1))
        i = int(rng.integers(0, length))
        k = int(rng.integers(0, model.n_sets))
        segs.append(
            Segment(
                s_t=rng.normal(size=STATE_DIM),
                fs_index=k,
                goal=rng.uniform(-1, 1, size=model.set_dims[k]),
                step_index=i,
                rewards=rng.normal(size=length - i),
                s_end=rng.normal(size=STATE_DIM),
                terminal=term,
            )
        )
    return segs


class TestSoftValue:
    def test_single_set_reduces_to_sac_value(self):
        # |F| = 1: discrete entropy terms vanish and V = minQ - beta logp
        model, _ = make_model(n_groups=1)
        rng = np.random.default_rng(1)
        states = rng.normal(size=(4, STATE_DIM))
        noise = rng.standard_normal((4, model.total_goal_dims))
        v = soft_value(states, model, noise).data

        heads = mlp_trunk(lift(model.pi_g), Var(states))
        out = heads @ Var(model.pi_g["head0_w"]) + Var(model.pi_g["head0_b"])
        mean, log_std = split_gaussian(out)
        a, logp = sample_squashed_gaussian(mean, log_std, noise)
        x = np.concatenate([states, np.ones((4, 1)), a.data, np.zeros((4, 1))], axis=-1)
        q1 = mlp_forward(lift(model.critic_targets), Var(x), prefix="q1_").data[:, 0]
        q2 = mlp_forward(lift(model.critic_targets), Var(x), prefix="q2_").data[:, 0]
        beta = float(np.exp(model.log_betas[0]))
        expected = np.minimum(q1, q2) - beta * logp.data
        np.testing.assert_allclose(v, expected, atol=1e-9)

    def test_uniform_two_sets_equal_inner(self):
        model, _ = make_model(n_groups=2)
        # pi_f uniform: zero logits
        for k in model.pi_f:
            model.pi_f[k][:] = 0.0
        # constant critic targets q, beta -> 0
        for k in model.critic_targets:
            model.critic_targets[k][:] = 0.0
        model.critic_targets["q1_head_b"][:] = 1.7
        model.critic_targets["q2_head_b"][:] = 1.7
        model.log_betas[:] = -60.0
        rng = np.random.default_rng(2)
        states = rng.normal(size=(3, STATE_DIM))
        noise = rng.standard_normal((3, model.total_goal_dims))
        v = soft_value(states, model, noise).data
        # H = log 2 cancels the -log|F| shift exactly
        np.testing.assert_allclose(v, 1.7, atol=1e-9)

    def test_entropy_shift_non_positive(self):
        model, _ = make_model(n_groups=3)
        rng = np.random.default_rng(3)
        for k in model.critic_targets:
            model.critic_targets[k][:] = 0.0
        model.log_betas[:] = -60.0
        model.log_alpha = np.array(math.log(2.0))
        states = rng.normal(size=(20, STATE_DIM))
        noise = rng.standard_normal((20, model.total_goal_dims))
        v = soft_value(states, model, noise).data
        assert (v <= 1e-10).all()  # only the alpha term remains; must be <= 0

    def test_matches_quadrature_oracle(self):
        # all three sets of a 2-group catalog (two 1-dim, one 2-dim goal);
        # integrate the inner expectation over the sampling noise with a
        # trapezoid tensor grid and compare to a Monte-Carlo soft-value mean
        model, _ = make_model(n_groups=2, hidden=4, n_layers=1, seed=5)
        K = model.n_sets
        rng = np.random.default_rng(6)
        state = rng.normal(size=(1, STATE_DIM))

        logits = mlp_forward(lift(model.pi_f), Var(state)).data[0]
        p = np.exp(logits - logits.max())
        p /= p.sum()
        feats = mlp_trunk(lift(model.pi_g), Var(state))
        alpha = float(np.exp(model.log_alpha))
        ent = -(p * np.log(p)).sum()

        def inner_for_set(k):
            d = model.set_dims[k]
            out = (feats @ Var(model.pi_g[f"head{k}_w"]) + Var(model.pi_g[f"head{k}_b"])).data[0]
            mean, log_std = out[:d], np.clip(out[d:], -20, 2)
            grid_1d = np.linspace(-8, 8, 401 if d == 2 else 4001)
            grids = np.meshgrid(*([grid_1d] * d), indexing="ij")
            eps = np.stack([g.ravel() for g in grids], axis=-1)       # (m, d)
            w = np.exp(-0.5 * (eps**2).sum(axis=-1)) / (2 * math.pi) ** (d / 2)
            a = np.tanh(mean + np.exp(log_std) * eps)
            logp = (
                -0.5 * eps**2 - log_std - 0.5 * math.log(2 * math.pi)
                - np.log(1 - a**2 + 1e-300)
            ).sum(axis=-1)
            m = len(eps)
            states_rep = np.repeat(state, m, axis=0)
            onehot = np.zeros((m, K))
            onehot[:, k] = 1.0
            goal = np.zeros((m, model.total_goal_dims))
            o = int(model.goal_offsets[k])
            goal[:, o:o + d] = a
            x = np.concatenate([states_rep, onehot, goal, np.zeros((m, 1))], axis=-1)
            q1 = mlp_forward(lift(model.critic_targets), Var(x), prefix="q1_").data[:, 0]
            q2 = mlp_forward(lift(model.critic_targets), Var(x), prefix="q2_").data[:, 0]
            beta = float(np.exp(model.log_betas[k])) / d
            vals = (w * (np.minimum(q1, q2) - beta * logp)).reshape(grids[0].shape)
            h = grid_1d[1] - grid_1d[0]
            for _ in range(d):
                vals = np.trapezoid(vals, dx=h, axis=-1)
            return float(vals)

        expected = (
            sum(p[k] * inner_for_set(k) for k in range(K))
            + alpha * (ent - math.log(K))
        )

        n_mc = 4000
        noise = np.random.default_rng(7).standard_normal((n_mc, model.total_goal_dims))
        draws = np.concatenate(
            [
                soft_value(np.repeat(state, 500, axis=0), model, noise[i : i + 500])
                .data
                for i in range(0, n_mc, 500)
            ]
        )
        se = draws.std(ddof=1) / math.sqrt(n_mc)
        assert abs(draws.mean() - expected) < 3 * se + 1e-6


class TestStepcondCritic:
    def test_c1_reduces_to_one_step_soft_bellman(self):
        model, cfg = make_model(c=1)
        rng = np.random.default_rng(8)
        segs = random_segments(model, rng, n=5, c=1)
        noise = rng.standard_normal((5, model.total_goal_dims))
        batch = make_segment_batch(segs, cfg.gamma)
        y = stepcond_targets(batch, model, cfg.gamma, noise)
        v = soft_value(batch.s_end, model, noise).data
        expected = np.array([s.rewards[0] for s in segs]) + cfg.gamma * v
        np.testing.assert_array_equal(y, expected)

    def test_terminal_drops_bootstrap(self):
        model, cfg = make_model(c=5)
        rng = np.random.default_rng(9)
        segs = random_segments(model, rng, n=4, c=5)
        for s in segs:
            s.terminal = True
        batch = make_segment_batch(segs, cfg.gamma)
        noise = rng.standard_normal((4, model.total_goal_dims))
        y = stepcond_targets(batch, model, cfg.gamma, noise)
        np.testing.assert_allclose(y, batch.suffix_return)

    def test_suffix_return_discounting(self):
        model, cfg = make_model(c=3)
        rng = np.random.default_rng(10)
        seg = Segment(
            s_t=np.zeros(STATE_DIM), fs_index=0, goal=np.zeros(1), step_index=1,
            rewards=np.array([1.0, 2.0]), s_end=np.zeros(STATE_DIM), terminal=True,
        )
        batch = make_segment_batch([seg], 0.5)
        assert batch.suffix_return[0] == pytest.approx(1.0 + 0.5 * 2.0)
        assert batch.suffix_len[0] == 2

    def test_gradient_matches_fd(self):
        model, cfg = make_model(c=5)
        rng = np.random.default_rng(11)
        segs = random_segments(model, rng, n=4, c=5, terminal_frac=0.3)
        batch = make_segment_batch(segs, cfg.gamma)
        targets = rng.normal(size=batch.n)
        _, grads = stepcond_critic_loss(batch, targets, model)
        numeric = fd_grad_params(
            lambda p: stepcond_critic_loss(batch, targets, model, critics=p)[0],
            model.critics,
        )
        assert_grads_close(grads, numeric, rtol=1e-4)


class TestJointPolicyLoss:
    def test_flat_critic_zero_temperature_no_logit_gradient(self):
        model, _ = make_model(n_groups=2)
        model.log_alpha = np.array(-np.inf)
        model.log_betas[:] = -np.inf
        for k in model.critics:
            model.critics[k][:] = 0.0
        model.critics["q1_head_b"][:] = 0.7
        model.critics["q2_head_b"][:] = 0.7
        rng = np.random.default_rng(12)
        states = rng.normal(size=(4, STATE_DIM))
        noise = rng.standard_normal((4, model.total_goal_dims))
        loss, f_grads, _, _ = joint_policy_loss(states, model, noise)
        assert loss == pytest.approx(-0.7)
        for g in f_grads.values():
            np.testing.assert_allclose(g, 0.0, atol=1e-12)

    def test_better_set_gets_larger_logit(self):
        # Q favors set 1 regardless of goal: descent should increase logit 1
        model, _ = make_model(n_groups=2, hidden=4, n_layers=1)
        model.log_alpha = np.array(-np.inf)
        model.log_betas[:] = -np.inf
        for k in model.critics:
            model.critics[k][:] = 0.0
        # one-hot input for set 1 sits at column STATE_DIM + 1 of the critic input
        for pre in ("q1_", "q2_"):
            model.critics[pre + "w0"][STATE_DIM + 1, :] = 1.0
            model.critics[pre + "head_w"][:, 0] = 1.0
        rng = np.random.default_rng(13)
        states = rng.normal(size=(6, STATE_DIM))
        noise = rng.standard_normal((6, model.total_goal_dims))
        _, f_grads, _, _ = joint_policy_loss(states, model, noise)
        # gradient on the bias of the logit head: negative for set 1
        assert f_grads["head_b"][1] < 0
        assert f_grads["head_b"][0] > 0

    def test_gradients_match_fd_frozen_noise(self):
        model, _ = make_model(n_groups=2, dims_per_group=(1, 2), hidden=5, n_layers=2)
        rng = np.random.default_rng(14)
        states = rng.normal(size=(4, STATE_DIM))
        noise = rng.standard_normal((4, model.total_goal_dims))
        _, f_grads, g_grads, _ = joint_policy_loss(states, model, noise)
        num_f = fd_grad_params(
            lambda p: joint_policy_loss(states, model, noise, pi_f=p)[0], model.pi_f
        )
        assert_grads_close(f_grads, num_f, rtol=1e-4)
        num_g = fd_grad_params(
            lambda p: joint_policy_loss(states, model, noise, pi_g=p)[0], model.pi_g
        )
        assert_grads_close(g_grads, num_g, rtol=1e-4)

    def test_dimension_normalization(self):
        # two sets with identical per-dim Gaussians: normalized logp terms match
        model, _ = make_model(n_groups=2, dims_per_group=(1, 2), hidden=4, n_layers=1)
        rng = np.random.default_rng(15)
        # head 1 repeats head 0 on both dims
        model.pi_g["head1_w"][:, 0] = model.pi_g["head0_w"][:, 0]
        model.pi_g["head1_w"][:, 1] = model.pi_g["head0_w"][:, 0]
        model.pi_g["head1_w"][:, 2] = model.pi_g["head0_w"][:, 1]
        model.pi_g["head1_w"][:, 3] = model.pi_g["head0_w"][:, 1]
        model.pi_g["head1_b"][0] = model.pi_g["head1_b"][1] = model.pi_g["head0_b"][0]
        model.pi_g["head1_b"][2] = model.pi_g["head1_b"][3] = model.pi_g["head0_b"][1]
        states = rng.normal(size=(3, STATE_DIM))
        noise = np.zeros((3, model.total_goal_dims))
        noise[:, :] = rng.standard_normal((3, 1))  # same noise in every column
        _, _, _, info = joint_policy_loss(states, model, noise)
        assert info["logp_norm"][0] == pytest.approx(info["logp_norm"][1], abs=1e-12)


class TestDualTemperatures:
    def test_alpha_stationary_at_target(self):
        model, _ = make_model(n_groups=2)
        # uniform pi_f: entropy log 2; set the target to match
        for k in model.pi_f:
            model.pi_f[k][:] = 0.0
        model.target_entropy_f = math.log(model.n_sets)
        rng = np.random.default_rng(16)
        states = rng.normal(size=(5, STATE_DIM))
        noise = rng.standard_normal((5, model.total_goal_dims))
        _, _, g_alpha, _ = dual_temperature_losses(states, model, noise)
        assert g_alpha == pytest.approx(0.0, abs=1e-9)

    def test_ignored_set_gets_no_beta_gradient(self):
        model, _ = make_model(n_groups=2)
        # force pi_f to put ~zero mass on set 0
        for k in model.pi_f:
            model.pi_f[k][:] = 0.0
        model.pi_f["head_b"][:] = np.array([-800.0, 0.0, 0.0])
        rng = np.random.default_rng(17)
        states = rng.normal(size=(5, STATE_DIM))
        noise = rng.standard_normal((5, model.total_goal_dims))
        _, _, _, g_betas = dual_temperature_losses(states, model, noise)
        assert abs(g_betas[0]) < 1e-12
        assert abs(g_betas[1]) > 0

    def test_matches_fd(self):
        model, _ = make_model(n_groups=2, dims_per_group=(2, 1))
        rng = np.random.default_rng(18)
        states = rng.normal(size=(4, STATE_DIM))
        noise = rng.standard_normal((4, model.total_goal_dims))
        _, _, g_alpha, g_betas = dual_temperature_losses(states, model, noise)

        def total(log_alpha, log_betas):
            saved_a, saved_b = model.log_alpha, model.log_betas
            model.log_alpha = np.array(log_alpha)
            model.log_betas = np.array(log_betas)
            try:
                ja, jb, _, _ = dual_temperature_losses(states, model, noise)
                return ja + jb
            finally:
                model.log_alpha, model.log_betas = saved_a, saved_b

        h = 1e-6
        la = float(model.log_alpha)
        num_a = (total(la + h, model.log_betas) - total(la - h, model.log_betas)) / (2 * h)
        assert g_alpha == pytest.approx(num_a, rel=1e-5, abs=1e-9)
        for k in range(model.n_sets):
            lb_p = model.log_betas.copy()
            lb_m = model.log_betas.copy()
            lb_p[k] += h
            lb_m[k] -= h
            num_b = (total(la, lb_p) - total(la, lb_m)) / (2 * h)
            assert g_betas[k] == pytest.approx(num_b, rel=1e-5, abs=1e-9)


class TestHiUpdate:
    def test_runs_and_reports_finite(self):
        model, cfg = make_model(n_groups=2, c=3)
        opt = HiOptState.create(model, cfg)
        rng = np.random.default_rng(19)
        for _ in range(5):
            segs = random_segments(model, rng, n=6, c=3, terminal_frac=0.2)
            states = rng.normal(size=(6, STATE_DIM))
            d = hi_update(model, opt, segs, states, cfg, rng)
            assert all(np.isfinite(v) for v in d.values())

    def test_zero_lr_keeps_parameters(self):
        model, cfg = make_model(n_groups=2, c=3)
        cfg.lr_q = cfg.lr_f = cfg.lr_g = cfg.lr_alpha = cfg.lr_beta = 0.0
        opt = HiOptState.create(model, cfg)
        rng = np.random.default_rng(20)
        before = {k: v.copy() for k, v in {**model.pi_f, **model.pi_g, **model.critics}.items()}
        segs = random_segments(model, rng, n=4, c=3)
        hi_update(model, opt, segs, rng.normal(size=(4, STATE_DIM)), cfg, rng)
        after = {**model.pi_f, **model.pi_g, **model.critics}
        for k, v in before.items():
            np.testing.assert_array_equal(after[k], v)
