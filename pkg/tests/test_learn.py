import dataclasses

import numpy as np
import pytest

from conftest import TINY_POLICY
from skilllab.diffcore import Tensor, backward
from skilllab.errors import DataError, VariantError
from skilllab.evalsuite import continual_suite
from skilllab.generate import run_expert_episode
from skilllab.learn import (
    FlowDraw, LOG_COLUMNS, bc_on_off, coop_loss, combine_losses, continual_finetune, disc_label,
    disc_loss, draw_flow_noise, flow_matching_loss, gate_distance, gate_regularizers, train_policy, train_selector,
    training_step,
)
from skilllab.policy import HighLevelSelector, PolicyModel, Variant
from skilllab.world import SkillId, TaskSpec


def _frozen_selector(seed=0):
    selector = HighLevelSelector(TINY_POLICY, seed=seed)
    selector.trained = True
    selector.freeze()
    return selector


class TestObjectives:
    def test_coop_loss_value_and_gradient(self):
        alpha = Tensor(np.array([0.9, 0.1]), requires_grad=True)
        loss = coop_loss(np.array([0.1, 0.5]), np.array([0.5, 0.5]), alpha)
        assert loss.item() == pytest.approx(-0.18, abs=1e-6)
        backward(loss)
        np.testing.assert_allclose(alpha.grad, [-0.2, 0.0], atol=1e-6)

    def test_coop_loss_stops_gradient_into_losses(self):
        l_on = Tensor(np.array([0.1, 0.5]), requires_grad=True)
        l_off = Tensor(np.array([0.5, 0.5]), requires_grad=True)
        alpha = Tensor(np.array([0.9, 0.1]), requires_grad=True)
        backward(coop_loss(l_on, l_off, alpha))
        assert l_on.grad is None and l_off.grad is None

    def test_coop_loss_scales_with_weight(self):
        args = (np.array([0.1, 0.5]), np.array([0.5, 0.5]), np.array([0.9, 0.1]))
        assert coop_loss(*args, lam=2.0).item() == pytest.approx(2.0 * coop_loss(*args).item())

    def test_continuous_regularizers(self):
        y = Tensor(np.array([0.2, 0.8]))
        prior, sticky, sup = gate_regularizers(y, np.array([0.2, 0.8]), np.array([0.0, 1.0]), discrete=False)
        assert prior.item() == pytest.approx(0.04, rel=1e-5)
        assert sticky.item() == pytest.approx(0.0)
        assert sup.item() == pytest.approx(0.5)

    def test_discrete_regularizers_vanish_at_target(self):
        y = Tensor(np.array([0.3, 0.7]))
        prior, sticky, _ = gate_regularizers(y, np.array([0.3, 0.7]), np.array([0.3, 0.7]), discrete=True)
        assert prior.item() == pytest.approx(0.0, abs=1e-5)
        assert sticky.item() == pytest.approx(0.0, abs=1e-5)

    def test_discrete_prior_is_positive_away_from_label(self):
        prior, _, _ = gate_regularizers(Tensor(np.array([0.2])), np.array([0.2]), np.array([1.0]))
        assert prior.item() == pytest.approx(-np.log(0.2), rel=1e-4)

    def test_discrete_gate_distance_is_bernoulli_kl(self):
        y, t = np.array([0.2, 0.6]), np.array([0.5, 0.9])
        kl = np.mean(t * np.log(t / y) + (1.0 - t) * np.log((1.0 - t) / (1.0 - y)))
        assert gate_distance(Tensor(y), t, discrete=True).item() == pytest.approx(kl, rel=1e-4)

    def test_disc_label_ties_are_zero(self):
        labels = disc_label(np.array([0.1, 0.5, 0.3]), np.array([0.2, 0.5, 0.1]))
        np.testing.assert_array_equal(labels, [1.0, 0.0, 0.0])

    def test_disc_loss(self):
        loss, labels = disc_loss(np.array([0.1, 0.9]), np.array([0.2, 0.2]), Tensor(np.array([0.5, 0.5])))
        np.testing.assert_array_equal(labels, [1.0, 0.0])
        assert loss.item() == pytest.approx(np.log(2.0), rel=1e-5)

    def test_flow_interpolation_endpoints(self):
        eps = np.ones((2, 6), dtype=np.float32)
        actions = np.zeros((2, 6), dtype=np.float32)
        draw = FlowDraw(eps, np.array([0.0, 1.0], dtype=np.float32))
        np.testing.assert_allclose(draw.interpolate(actions), [[1.0] * 6, [0.0] * 6])
        np.testing.assert_allclose(draw.target(actions), -eps)

    def test_flow_noise_shapes(self):
        draw = draw_flow_noise(5, np.random.default_rng(0))
        assert draw.eps.shape == (5, 6)
        assert np.all((draw.tau >= 0) & (draw.tau <= 1))


class TestLosses:
    def test_flow_matching_loss_is_positive(self, short_dataset):
        model = PolicyModel(Variant.SHARED, TINY_POLICY)
        batch = short_dataset.sample(6, np.random.default_rng(0))
        l_l, l_r = flow_matching_loss(batch, model, rng=np.random.default_rng(1))
        assert l_l.item() > 0 and l_r.item() > 0

    def test_on_off_need_a_gate(self, short_dataset):
        model = PolicyModel(Variant.TWIN, TINY_POLICY)
        batch = short_dataset.sample(4, np.random.default_rng(0))
        with pytest.raises(VariantError):
            bc_on_off(batch, model, draw_flow_noise(4, np.random.default_rng(0)))

    def test_on_off_share_noise(self, short_dataset):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY)
        batch = short_dataset.sample(4, np.random.default_rng(0))
        draw = draw_flow_noise(4, np.random.default_rng(2))
        on, off, rows = bc_on_off(batch, model, draw)
        assert on.shape == off.shape == (4,)
        np.testing.assert_allclose(on.data, rows[0].data + rows[1].data, rtol=1e-5)


class TestTrainingStep:
    def test_total_matches_logged_terms(self, tiny_cfg, short_dataset):
        selector = _frozen_selector()
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY, selector=selector)
        contexts = selector.context(short_dataset.obs, short_dataset.u_L, short_dataset.u_R)
        batch = short_dataset.sample(8, np.random.default_rng(0))
        total, row = training_step(model, batch, np.random.default_rng(1), tiny_cfg.learn, contexts)
        assert row['total'] == pytest.approx(total.item())
        assert combine_losses(row, tiny_cfg.learn) == pytest.approx(row['total'], rel=1e-4, abs=1e-6)

    def test_baseline_total_is_flow_matching(self, tiny_cfg, short_dataset):
        model = PolicyModel(Variant.MONO, TINY_POLICY)
        batch = short_dataset.sample(8, np.random.default_rng(0))
        total, row = training_step(model, batch, np.random.default_rng(1), tiny_cfg.learn)
        assert total.item() == pytest.approx(row['L_FM_L'] + row['L_FM_R'], rel=1e-5)
        assert row['L_coop'] == 0.0

    def test_same_rng_same_loss(self, tiny_cfg, short_dataset):
        model = PolicyModel(Variant.TWIN, TINY_POLICY)
        batch = short_dataset.sample(8, np.random.default_rng(0))
        first, _ = training_step(model, batch, np.random.default_rng(5), tiny_cfg.learn)
        second, _ = training_step(model, batch, np.random.default_rng(5), tiny_cfg.learn)
        assert first.item() == second.item()

    def test_gated_step_needs_contexts(self, tiny_cfg, short_dataset):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY, selector=_frozen_selector())
        batch = short_dataset.sample(4, np.random.default_rng(0))
        with pytest.raises(VariantError):
            training_step(model, batch, np.random.default_rng(0), tiny_cfg.learn)


class TestLoops:
    def test_selector_is_frozen_after_training(self, tiny_cfg, short_dataset):
        selector = train_selector(short_dataset, tiny_cfg)
        assert selector.trained and selector.frozen

    def test_selector_accuracy_threshold(self, tiny_cfg, short_dataset):
        learn = dataclasses.replace(tiny_cfg.learn, selector_accuracy=1.01, selector_steps=2)
        with pytest.raises(DataError, match="accuracy"):
            train_selector(short_dataset, tiny_cfg.replace(learn=learn))

    def test_train_policy_log(self, tiny_cfg, short_dataset):
        model, log = train_policy(short_dataset, "mono", tiny_cfg)
        assert list(log.columns) == LOG_COLUMNS
        assert list(log['step']) == [1, 2, 3]
        assert model.skills == [SkillId.L1, SkillId.R1, SkillId.D1]

    def test_train_skillvla(self, tiny_cfg, short_dataset):
        model, log = train_policy(short_dataset, "skillvla", tiny_cfg, selector=_frozen_selector())
        assert np.all(np.isfinite(log['total']))
        assert log['mean_gate'].between(0, 1).all()

    def test_skillvla_needs_selector(self, tiny_cfg, short_dataset):
        with pytest.raises(VariantError):
            train_policy(short_dataset, "skillvla", tiny_cfg)

    def test_parameters_change(self, tiny_cfg, short_dataset):
        before = PolicyModel(Variant.SHARED, TINY_POLICY, seed=tiny_cfg.seed).snapshot()
        model, _ = train_policy(short_dataset, "shared", tiny_cfg)
        after = model.snapshot()
        assert any(not np.array_equal(before[k], after[k]) for k in before)


class TestContinual:
    @pytest.fixture(scope="class")
    def new_demos(self):
        task = TaskSpec.pair(SkillId.L2, SkillId.IDLE, horizon=8)
        return [run_expert_episode(task, seed) for seed in range(3)]

    def test_zero_shots_returns_pretrained(self, tiny_cfg, new_demos):
        model = PolicyModel(Variant.TWIN, TINY_POLICY)
        tuned, log = continual_finetune(model, new_demos, 0, tiny_cfg)
        assert tuned is model
        assert log.empty

    def test_finetune_leaves_original_untouched(self, tiny_cfg, new_demos):
        model = PolicyModel(Variant.TWIN, TINY_POLICY)
        before = model.snapshot()
        tuned, _ = continual_finetune(model, new_demos, 2, tiny_cfg)
        assert tuned is not model
        assert all(np.array_equal(before[k], model.snapshot()[k]) for k in before)
        assert SkillId.L2 in tuned.skills

    def test_finetune_log_counts_demonstrations(self, tiny_cfg, new_demos):
        _, log = continual_finetune(PolicyModel(Variant.TWIN, TINY_POLICY), new_demos, 2, tiny_cfg)
        assert len(log) == tiny_cfg.learn.finetune_steps
        assert set(log['k']) == {2} and set(log['episodes']) == {2}

    def test_continual_report_keeps_finetune_logs(self, tiny_cfg, new_demos):
        report = continual_suite({'TWIN': PolicyModel(Variant.TWIN, TINY_POLICY)}, new_demos, k_list=[0, 2],
                                 n_trials=1, cfg=tiny_cfg, task=new_demos[0].task)
        assert list(report.tables['curve']['episodes']) == [0, 2]
        assert set(report.tables['finetune']['k']) == {2}

    def test_too_few_demos(self, tiny_cfg, new_demos):
        with pytest.raises(DataError):
            continual_finetune(PolicyModel(Variant.TWIN, TINY_POLICY), new_demos, 5, tiny_cfg)

    def test_variant_check(self, tiny_cfg, new_demos):
        with pytest.raises(VariantError):
            continual_finetune(PolicyModel(Variant.TWIN, TINY_POLICY), new_demos, 1, tiny_cfg, variant="MONO")
