import numpy as np
import pytest

from conftest import TINY_POLICY
from skilllab.config import SamplerConfig
from skilllab.diffcore import Tensor
from skilllab.errors import ConfigError
from skilllab.policy import HighLevelSelector, PolicyModel, Variant
from skilllab.sampler import (
    ExpertAgent, PolicyAgent, ZeroAgent, decide_gate, integrate_flow, rollout, run_rollouts,
    sample_actions, sample_batch,
)
from skilllab.world import OBS_DIM, SKILL_INDEX, SkillId, Stage, TaskSpec, reset, stages


class _ConstantField:
    """Velocity field that ignores its inputs."""

    def __init__(self, value):
        self.value = np.float32(value)

    def velocity(self, a_tau, tau, latents, obs, gate=None):
        return Tensor(np.full(a_tau.shape, self.value, dtype=np.float32))


def _skillvla():
    selector = HighLevelSelector(TINY_POLICY)
    selector.trained = True
    selector.freeze()
    return PolicyModel(Variant.SKILLVLA, TINY_POLICY, selector=selector)


class TestFlow:
    def test_zero_field_returns_noise(self):
        eps = np.array([[0.3, -0.2, 0.1, 0.0, 0.5, -0.9]], dtype=np.float32)
        out = integrate_flow(_ConstantField(0.0), np.zeros((1, OBS_DIM)), None, eps, np.zeros(1), 10)
        np.testing.assert_allclose(out, eps)

    def test_constant_field_shifts_noise(self):
        eps = np.zeros((2, 6), dtype=np.float32)
        out = integrate_flow(_ConstantField(0.25), np.zeros((2, OBS_DIM)), None, eps, np.zeros(2), 4)
        np.testing.assert_allclose(out, 0.25, rtol=1e-6)

    def test_output_is_clipped(self):
        eps = np.full((1, 6), 0.9, dtype=np.float32)
        out = integrate_flow(_ConstantField(5.0), np.zeros((1, OBS_DIM)), None, eps, np.zeros(1), 2)
        np.testing.assert_array_equal(out, 1.0)

    def test_needs_a_flow_step(self):
        with pytest.raises(ConfigError):
            integrate_flow(_ConstantField(0.0), np.zeros((1, OBS_DIM)), None, np.zeros((1, 6)), np.zeros(1), 0)


class TestGate:
    def test_force_gate_must_be_binary(self):
        with pytest.raises(ConfigError):
            decide_gate(PolicyModel(Variant.MONO, TINY_POLICY), None, 2, force_gate=0.5)

    def test_force_gate_overrides_alpha(self):
        model = _skillvla()
        z = np.random.default_rng(0).normal(size=(3, TINY_POLICY.d_h))
        yhat, alpha = decide_gate(model, z, 3, force_gate=1)
        np.testing.assert_array_equal(alpha, 1.0)
        assert np.all((yhat > 0) & (yhat < 1))

    def test_estimator_output_is_binarised(self):
        model = _skillvla()
        z = np.random.default_rng(1).normal(size=(5, TINY_POLICY.d_h))
        yhat, alpha = decide_gate(model, z, 5, threshold=0.5)
        np.testing.assert_array_equal(alpha, (yhat >= 0.5).astype(float))

    def test_baseline_gate_constants(self):
        _, twin = decide_gate(PolicyModel(Variant.TWIN, TINY_POLICY), None, 2)
        _, mono = decide_gate(PolicyModel(Variant.MONO, TINY_POLICY), None, 2)
        np.testing.assert_array_equal(twin, 1.0)
        np.testing.assert_array_equal(mono, 0.0)


class TestSampling:
    def test_sample_actions_shapes(self):
        model = PolicyModel(Variant.SHARED, TINY_POLICY)
        a_l, a_r = sample_actions(model, np.zeros(OBS_DIM), Stage(SkillId.L1, SkillId.IDLE),
                                  np.random.default_rng(0), n_steps=3)
        assert a_l.shape == a_r.shape == (3,)
        assert np.all(np.abs(a_l) <= 1.0) and np.all(np.abs(a_r) <= 1.0)

    def test_one_stream_per_row(self):
        model = PolicyModel(Variant.SHARED, TINY_POLICY)
        tok = np.array([SKILL_INDEX[SkillId.L1]] * 2)
        with pytest.raises(ConfigError):
            sample_batch(model, np.zeros((2, OBS_DIM)), tok, tok, [np.random.default_rng(0)])

    def test_selector_picks_tokens(self):
        model = _skillvla()
        obs = np.zeros((2, OBS_DIM))
        instr_l = np.full(2, SKILL_INDEX[SkillId.D1])
        instr_r = np.full(2, SKILL_INDEX[SkillId.D1])
        rngs = [np.random.default_rng(i) for i in range(2)]
        sample = sample_batch(model, obs, instr_l, instr_r, rngs, SamplerConfig(n_flow_steps=2))
        expected_l, expected_r, _ = model.selector.select(obs, instr_l, instr_r)
        np.testing.assert_array_equal(sample.u_L, expected_l)
        np.testing.assert_array_equal(sample.u_R, expected_r)


class TestRollouts:
    def test_gate_trace_covers_every_step(self):
        ro = rollout(_skillvla(), TaskSpec.pair(SkillId.L1, SkillId.IDLE), horizon=6, seed=3,
                     cfg=SamplerConfig(n_flow_steps=2))
        assert ro.steps == 6
        assert len(ro.gate) == len(ro.priors) == len(ro.observations) == 6
        assert set(ro.gate.alpha) <= {0.0, 1.0}

    def test_zero_agent_scores_nothing(self):
        task = TaskSpec.pair(SkillId.L1, SkillId.IDLE)
        (ro,) = run_rollouts(ZeroAgent(), [task], [0], horizon=15)
        assert ro.steps == 15
        assert ro.score == 0 and not ro.success
        assert ro.final_state.left_ee == reset(task, 0).left_ee

    def test_expert_agent_succeeds(self):
        task = TaskSpec.pair(SkillId.L1, SkillId.IDLE)
        results = run_rollouts(ExpertAgent(), [task, task], [0, 1])
        assert all(ro.success for ro in results)
        assert all(ro.progress == 1.0 for ro in results)

    def test_stage_plan_follows_world_progress(self):
        task = TaskSpec.long("TUBES")
        (ro,) = run_rollouts(ExpertAgent(), [task], [0])
        plan = stages(task)
        assert ro.stage_index[0] == 0
        assert ro.stage_index[-1] >= 1
        assert all(s == plan[i] for s, i in zip(ro.stages, ro.stage_index))

    def test_episodes_are_batch_independent(self):
        model = PolicyModel(Variant.TWIN, TINY_POLICY)
        agent = PolicyAgent(model, SamplerConfig(n_flow_steps=2))
        task = TaskSpec.pair(SkillId.IDLE, SkillId.R1)
        together = run_rollouts(agent, [task, task], [1, 2], horizon=4)
        alone = run_rollouts(agent, [task], [2], horizon=4)
        np.testing.assert_allclose(np.stack(together[1].actions_L), np.stack(alone[0].actions_L), atol=1e-4)
        np.testing.assert_allclose(np.stack(together[1].actions_R), np.stack(alone[0].actions_R), atol=1e-4)

    def test_same_seed_same_rollout(self):
        model = PolicyModel(Variant.SHARED, TINY_POLICY)
        task = TaskSpec.pair(SkillId.L2, SkillId.IDLE)
        first = rollout(model, task, horizon=5, seed=4, cfg=SamplerConfig(n_flow_steps=2))
        second = rollout(model, task, horizon=5, seed=4, cfg=SamplerConfig(n_flow_steps=2))
        np.testing.assert_array_equal(np.stack(first.actions_L), np.stack(second.actions_L))

    def test_mismatched_seeds(self):
        with pytest.raises(ConfigError):
            run_rollouts(ZeroAgent(), [TaskSpec.dual(SkillId.D1)], [0, 1])
