import json
import math

import numpy as np
import pandas as pd
import pytest

from conftest import TINY_POLICY
from skilllab.errors import ConfigError, EvaluationError
from skilllab.evalsuite import (
    EvalReport, ProductRegion, binned_mi, coop_suite, coverage_fraction, gate_stage_agreement, gaussian_mi,
    gradcheck_suite, load_report, longhorizon_suite, merge_reports, mi_from_samples, recomposition_suite,
    render_to_markdown, report_files, save_report, seen_suite, success_rate, support_coverage, t_norm,
    within_stage_variance,
)
from skilllab.evalsuite.suites import _schedule_for, conditional_mi, expert_region, trial_seeds
from skilllab.policy import PolicyModel, Variant
from skilllab.sampler import ZeroAgent
from skilllab.world import LongTask, SkillId, Stage, TaskSpec, observe, reset


class TestRates:
    def test_wilson_interval(self):
        row = success_rate([True] * 7 + [False] * 3)
        assert row['rate'] == pytest.approx(0.7)
        assert row['ci_low'] == pytest.approx(0.3968, abs=1e-3)
        assert row['ci_high'] == pytest.approx(0.8922, abs=1e-3)
        assert row['se'] == pytest.approx(math.sqrt(0.21 / 10))

    def test_no_trials(self):
        row = success_rate([])
        assert row['trials'] == 0
        assert np.isnan(row['rate'])

    def test_t_norm_skips_zero_progress(self):
        assert t_norm([100, 80, 50], [1.0, 0.5, 0.0]) == pytest.approx(130.0)

    def test_t_norm_absent_without_progress(self):
        assert t_norm([10, 20], [0.0, 0.0]) is None

    def test_gate_agreement(self):
        assert gate_stage_agreement([0.2, 0.8, 0.9, 0.1], [0, 1, 0, 0]) == pytest.approx(0.75)

    def test_within_stage_variance(self):
        assert within_stage_variance([0.0, 1.0, 1.0, 1.0], [0, 0, 1, 1]) == pytest.approx(0.125)

    def test_stage_locked_gate_has_no_within_stage_variance(self):
        stage_index = [0, 0, 1, 1]
        locked = within_stage_variance([0.0, 0.0, 1.0, 1.0], stage_index)
        drifting = within_stage_variance([0.2, 0.8, 0.3, 0.9], stage_index)
        assert locked == 0.0
        assert drifting > locked


class TestMutualInformation:
    def test_copied_actions_reach_the_entropy(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, size=(2000, 3))
        diag = mi_from_samples(a, a.copy(), bins=2, rng=rng, n_shuffles=5)
        assert diag.mi == pytest.approx(math.log(8), rel=0.02)
        assert not diag.independent()

    def test_product_samples_stay_near_the_floor(self):
        rng = np.random.default_rng(1)
        a_l = rng.uniform(-1, 1, size=(2000, 3))
        a_r = rng.uniform(-1, 1, size=(2000, 3))
        diag = mi_from_samples(a_l, a_r, bins=2, rng=rng, n_shuffles=10)
        assert diag.mi < 0.05
        assert diag.bias_floor > 0.0

    def test_too_few_samples(self):
        a = np.zeros((50, 3))
        with pytest.raises(EvaluationError, match="too few"):
            mi_from_samples(a, a, bins=2, rng=np.random.default_rng(0))

    def test_binned_gaussian_matches_closed_form(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=20000)
        y = 0.5 * x + math.sqrt(0.75) * rng.normal(size=20000)
        estimate = binned_mi(x, y, bins=8, value_range=[[-3, 3], [-3, 3]])
        assert estimate == pytest.approx(gaussian_mi(0.5), rel=0.2)


class TestCoverage:
    def test_full_region_covers_everything(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-1, 1, size=(100, 3))
        assert coverage_fraction(a, a, ProductRegion.full()) == 1.0

    def test_region_is_clipped_to_action_box(self):
        region = ProductRegion.around([1.0, 0.0, 0.0], [0.0, 0.0, -1.0], 0.25)
        np.testing.assert_allclose(region.hi_L, [1.0, 0.25, 0.25])
        np.testing.assert_allclose(region.lo_R, [-0.25, -0.25, -1.0])

    def test_zero_volume_region(self):
        region = ProductRegion.around(np.zeros(3), np.zeros(3), 0.0)
        with pytest.raises(EvaluationError, match="zero volume"):
            coverage_fraction(np.zeros((4, 3)), np.zeros((4, 3)), region)

    def test_expert_region_holds_expert_action(self):
        task = TaskSpec.pair(SkillId.L1, SkillId.R2)
        region = expert_region(reset(task, 0), Stage(SkillId.L1, SkillId.R2), 0.25)
        assert region.volume > 0

    def test_policy_samples_lie_in_full_region(self, tiny_cfg):
        model = PolicyModel(Variant.SHARED, TINY_POLICY)
        task = TaskSpec.pair(SkillId.L1, SkillId.R1)
        obs = observe(reset(task, 0), task)
        assert support_coverage(model, obs, Stage(SkillId.L1, SkillId.R1), ProductRegion.full(),
                                n_samples=20, cfg=tiny_cfg) == 1.0


class TestDiagnostics:
    def test_conditional_mi_row(self, tiny_cfg):
        model = PolicyModel(Variant.MONO, TINY_POLICY)
        task = TaskSpec.pair(SkillId.L2, SkillId.R3)
        obs = observe(reset(task, 0), task)
        diag = conditional_mi(model, obs, Stage(SkillId.L2, SkillId.R3), cfg=tiny_cfg)
        assert diag.n_samples == tiny_cfg.eval.mi_samples
        assert diag.mi >= 0.0
        assert diag.as_row()['context'] == "L2,R3"

    def test_conditional_mi_sample_floor(self, tiny_cfg):
        model = PolicyModel(Variant.MONO, TINY_POLICY)
        with pytest.raises(EvaluationError):
            conditional_mi(model, np.zeros(1), Stage(SkillId.L1, SkillId.R1), n_samples=100, bins=2, cfg=tiny_cfg)

    def test_gradcheck_suite(self):
        report = gradcheck_suite(n_seeds=1, seed=0)
        table = report.tables['gradcheck']
        assert 'skillvla_loss' in set(table['check'])
        assert report.summary['max_rel_error'] < 1e-3
        assert (table['max_abs_error'] >= 0.0).all()
        assert report.summary['max_abs_error'] == pytest.approx(table['max_abs_error'].max())


class TestSuites:
    def test_trial_seeds_are_stable(self):
        assert trial_seeds(0, "L1,R1", 3) == trial_seeds(0, "L1,R1", 3)
        assert trial_seeds(0, "L1,R1", 3) != trial_seeds(0, "L1,R2", 3)

    def test_seen_suite_zero_agent(self, tiny_cfg):
        report = seen_suite(None, n_trials=1, cfg=tiny_cfg, agent=ZeroAgent())
        assert len(report.tables['seen']) == 6
        assert report.summary['average'] == 0.0
        assert report.variant == 'ZeroAgent'

    def test_recomposition_needs_trained_skills(self, tiny_cfg):
        with pytest.raises(EvaluationError, match="not trained"):
            recomposition_suite(PolicyModel(Variant.MONO, TINY_POLICY), n_trials=1, cfg=tiny_cfg)

    def test_coop_ablation_without_successes(self, tiny_cfg):
        report = coop_suite(None, n_trials=1, cfg=tiny_cfg, ablate=True, agent=ZeroAgent())
        assert set(report.tables['coop']['condition']) == {'policy', 'no_messages'}
        assert report.summary['relative_drop'] is None

    def test_longhorizon_zero_agent(self, tiny_cfg):
        report = longhorizon_suite(None, n_trials=1, cfg=tiny_cfg, agent=ZeroAgent())
        assert report.summary['schedule'] == tiny_cfg.eval.schedule
        assert report.summary['t_norm_TUBES'] is None
        assert len(report.tables['episodes']) == 2

    def test_every_variant_gets_the_same_schedule(self, tiny_cfg):
        plans = {v: _schedule_for(PolicyModel(v, TINY_POLICY), tiny_cfg.eval, None) for v in Variant}
        assert set(plans.values()) == {tiny_cfg.eval.schedule}
        assert _schedule_for(None, tiny_cfg.eval, None) == tiny_cfg.eval.schedule

    def test_longhorizon_schedule_override(self, tiny_cfg):
        report = longhorizon_suite(None, n_trials=1, cfg=tiny_cfg, agent=ZeroAgent(), schedule="sequential",
                                   tasks=(LongTask.TUBES,))
        assert report.summary['schedule'] == "sequential"
        assert set(report.tables['tasks']['schedule']) == {"sequential"}


def _report(suite, variant="MONO", rate=0.5):
    table = pd.DataFrame([{'task': 'L1,IDLE', 'rate': rate, 'ci_low': np.nan}])
    return EvalReport(suite, variant, 0, 2, {'seen': table}, {'average': rate})


class TestReports:
    def test_dict_round_trip(self):
        report = _report('seen')
        data = json.loads(json.dumps(report.to_dict()))
        back = EvalReport.from_dict(data)
        assert back.suite == 'seen' and back.n_trials == 2
        assert back.summary == {'average': 0.5}
        assert back.tables['seen'].loc[0, 'task'] == 'L1,IDLE'
        assert data['tables']['seen'][0]['ci_low'] is None

    def test_missing_field(self):
        with pytest.raises(EvaluationError, match="suite"):
            EvalReport.from_dict({'variant': 'MONO', 'seed': 0, 'n_trials': 1})

    def test_save_and_load(self, tmp_path):
        paths = save_report(_report('seen'), str(tmp_path), plots=False)
        assert (tmp_path / 'seen.report.json').exists()
        assert (tmp_path / 'seen_seen.csv').exists()
        assert load_report(paths['json']).summary['average'] == 0.5

    def test_merge_adds_suite_column(self, tmp_path):
        save_report(_report('seen'), str(tmp_path), name='a', plots=False)
        save_report(_report('coop', rate=0.25), str(tmp_path), name='b', plots=False)
        paths = merge_reports([str(tmp_path)], str(tmp_path / 'merged'))
        merged = pd.read_csv(paths['merged'])
        assert list(merged.columns[:3]) == ['suite', 'variant', 'table']
        assert sorted(merged['suite']) == ['coop', 'seen']

    def test_markdown(self, tmp_path):
        path = render_to_markdown([_report('seen')], str(tmp_path / 'results.md'))
        text = open(path, encoding='utf-8').read()
        assert text.startswith("# Evaluation results")
        assert "## seen (MONO, seed 0, 2 trials)" in text

    def test_report_files_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            report_files([str(tmp_path / 'missing.report.json')])
        with pytest.raises(ConfigError, match="no report files"):
            report_files([str(tmp_path)])
