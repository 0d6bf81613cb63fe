import dataclasses

import numpy as np
import pytest

from conftest import TINY_POLICY
from skilllab.diffcore import Tensor, no_grad
from skilllab.errors import ConfigError, VariantError
from skilllab.policy import HighLevelSelector, PolicyModel, Variant, head_labels
from skilllab.world import OBS_DIM, SKILL_INDEX, Arm, SkillId
from skilllab.world.sim import OBS_EE

B = 4


def _inputs(seed=0):
    rng = np.random.default_rng(seed)
    obs = rng.uniform(-1, 1, size=(B, OBS_DIM)).astype(np.float32)
    u_l = np.full(B, SKILL_INDEX[SkillId.L1])
    u_r = np.full(B, SKILL_INDEX[SkillId.R2])
    a_tau = rng.normal(size=(B, 6)).astype(np.float32)
    return obs, u_l, u_r, a_tau


def _velocity(model, obs, u_l, u_r, a_tau, gate=None, tau=0.3):
    with no_grad():
        latents = model.encode(obs, u_l, u_r)
        return model.velocity(Tensor(a_tau), np.full(B, tau), latents, obs, gate).data


class TestStreams:
    def test_left_latent_ignores_right_token(self):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY)
        obs, u_l, u_r, _ = _inputs()
        z1 = model.encode(obs, u_l, u_r)
        z2 = model.encode(obs, u_l, np.full(B, SKILL_INDEX[SkillId.R3]))
        np.testing.assert_array_equal(z1.z_L.data, z2.z_L.data)
        assert not np.array_equal(z1.z_R.data, z2.z_R.data)

    def test_own_observation_mode_hides_partner(self):
        model = PolicyModel(Variant.SKILLVLA, dataclasses.replace(TINY_POLICY, stream_obs="own"))
        obs, u_l, u_r, _ = _inputs()
        moved = obs.copy()
        moved[:, OBS_EE[Arm.RIGHT]] += 0.5
        z1, z2 = model.encode(obs, u_l, u_r), model.encode(moved, u_l, u_r)
        np.testing.assert_array_equal(z1.z_L.data, z2.z_L.data)

    def test_shared_variants_have_one_latent(self):
        for variant in (Variant.MONO, Variant.SHARED):
            obs, u_l, u_r, _ = _inputs()
            latents = PolicyModel(variant, TINY_POLICY).encode(obs, u_l, u_r)
            assert latents.shared
            assert latents.z.shape == (B, TINY_POLICY.d_z)


class TestGate:
    def test_closed_gate_isolates_arms(self):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY)
        obs, u_l, u_r, a_tau = _inputs()
        changed = a_tau.copy()
        changed[:, 3:] += 1.0
        v1 = _velocity(model, obs, u_l, u_r, a_tau, gate=np.zeros(B))
        v2 = _velocity(model, obs, u_l, u_r, changed, gate=np.zeros(B))
        np.testing.assert_allclose(v1[:, :3], v2[:, :3])

    def test_open_gate_couples_arms(self):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY)
        obs, u_l, u_r, a_tau = _inputs()
        changed = a_tau.copy()
        changed[:, 3:] += 1.0
        v1 = _velocity(model, obs, u_l, u_r, a_tau, gate=np.ones(B))
        v2 = _velocity(model, obs, u_l, u_r, changed, gate=np.ones(B))
        assert not np.allclose(v1[:, :3], v2[:, :3])

    def test_no_gate_equals_closed_gate(self):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY)
        obs, u_l, u_r, a_tau = _inputs()
        np.testing.assert_array_equal(_velocity(model, obs, u_l, u_r, a_tau),
                                      _velocity(model, obs, u_l, u_r, a_tau, gate=np.zeros(B)))

    def test_twin_always_communicates(self):
        model = PolicyModel(Variant.TWIN, TINY_POLICY)
        obs, u_l, u_r, a_tau = _inputs()
        np.testing.assert_array_equal(_velocity(model, obs, u_l, u_r, a_tau, gate=np.zeros(B)),
                                      _velocity(model, obs, u_l, u_r, a_tau, gate=np.ones(B)))

    def test_coop_probability_in_unit_interval(self):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY)
        p = model.estimate_coop(np.random.default_rng(0).normal(size=(B, TINY_POLICY.d_h))).data
        assert p.shape == (B,)
        assert np.all((p > 0) & (p < 1))

    def test_baselines_have_no_estimator(self):
        model = PolicyModel(Variant.MONO, TINY_POLICY)
        with pytest.raises(VariantError):
            model.estimate_coop(np.zeros((1, TINY_POLICY.d_h)))


class TestShapesAndCounts:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_joint_velocity_shape(self, variant):
        model = PolicyModel(variant, TINY_POLICY)
        obs, u_l, u_r, a_tau = _inputs()
        assert _velocity(model, obs, u_l, u_r, a_tau).shape == (B, 6)

    @pytest.mark.parametrize("variant", list(Variant))
    def test_counts_match_closed_form(self, variant):
        model = PolicyModel(variant, TINY_POLICY)
        counts = model.parameter_counts()
        expected = model.expected_counts()
        for key in ('streams', 'experts', 'estimator', 'total'):
            assert counts[key] == expected[key]

    def test_only_skillvla_has_estimator_parameters(self):
        assert PolicyModel(Variant.SKILLVLA, TINY_POLICY).parameter_counts()['estimator'] > 0
        assert PolicyModel(Variant.TWIN, TINY_POLICY).parameter_counts()['estimator'] == 0

    def test_unknown_variant(self):
        with pytest.raises(ConfigError):
            Variant.parse("quad")
        assert Variant.parse("mono") is Variant.MONO


class TestCheckpoint:
    def test_save_load_reproduces_outputs(self, tmp_path):
        selector = HighLevelSelector(TINY_POLICY, seed=1)
        selector.trained = True
        selector.freeze()
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY, seed=3, selector=selector)
        model.skills = [SkillId.L1, SkillId.D1]
        path = model.save(str(tmp_path / "m.json"), config_hash="abc")
        loaded = PolicyModel.load(path, variant="SKILLVLA")
        obs, u_l, u_r, a_tau = _inputs()
        gate = np.ones(B)
        np.testing.assert_allclose(_velocity(model, obs, u_l, u_r, a_tau, gate),
                                   _velocity(loaded, obs, u_l, u_r, a_tau, gate))
        assert loaded.skills == [SkillId.L1, SkillId.D1]
        assert loaded.require_selector().frozen
        np.testing.assert_allclose(loaded.context(obs, u_l, u_r), model.context(obs, u_l, u_r))

    def test_variant_mismatch(self, tmp_path):
        path = PolicyModel(Variant.MONO, TINY_POLICY).save(str(tmp_path / "mono.json"))
        with pytest.raises(VariantError):
            PolicyModel.load(path, variant="TWIN")

    def test_copy_is_independent(self):
        model = PolicyModel(Variant.SHARED, TINY_POLICY)
        clone = model.copy()
        name, tensor = next(iter(clone.params.items()))
        tensor.data = tensor.data + 1.0
        assert not np.array_equal(model.params[name].data, clone.params[name].data)


class TestSelector:
    def test_probabilities_sum_to_one(self):
        selector = HighLevelSelector(TINY_POLICY)
        obs, u_l, u_r, _ = _inputs()
        p_l, p_r = selector.probabilities(obs, u_l, u_r)
        np.testing.assert_allclose(p_l.sum(axis=-1), 1.0, rtol=1e-5)
        np.testing.assert_allclose(p_r.sum(axis=-1), 1.0, rtol=1e-5)

    def test_select_returns_arm_tokens(self):
        selector = HighLevelSelector(TINY_POLICY)
        obs, u_l, u_r, _ = _inputs()
        sel_l, sel_r, z = selector.select(obs, u_l, u_r)
        left_ok = {SKILL_INDEX[s] for s in SkillId if s.arm is not Arm.RIGHT}
        right_ok = {SKILL_INDEX[s] for s in SkillId if s.arm is not Arm.LEFT}
        assert set(sel_l.tolist()) <= left_ok
        assert set(sel_r.tolist()) <= right_ok
        assert z.shape == (B, TINY_POLICY.d_h)

    def test_untrained_selector_is_refused(self):
        model = PolicyModel(Variant.SKILLVLA, TINY_POLICY, selector=HighLevelSelector(TINY_POLICY))
        with pytest.raises(VariantError):
            model.require_selector()

    def test_head_labels_reject_wrong_arm(self):
        with pytest.raises(ConfigError):
            head_labels(np.array([SKILL_INDEX[SkillId.R1]]), np.array([SKILL_INDEX[SkillId.R1]]))
