"""
Evaluation suites and diagnostics

Each suite runs seeded closed-loop trials of a policy (or of a scripted agent)
and returns an EvalReport of pandas tables plus a summary dictionary.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from skilllab.config import EvalConfig, LearnConfig, LossWeights, PolicyConfig, RunConfig, WorldConfig
from skilllab.diffcore import (
    ParameterSet, add, bce, concat, cross_entropy, exp, gather, grad_check_errors, layer_norm, log,
    log_softmax, matmul, mean, mse, mul, multihead_attention, power, relu, reshape, sigmoid, slice_,
    softmax, sub, sum_, tanh, transpose,
)
from skilllab.errors import EvaluationError
from skilllab.evalsuite.stats import (
    MIDiagnostic, ProductRegion, coverage_fraction, gate_stage_agreement, mi_from_samples, success_rate,
    t_norm, within_stage_variance,
)
from skilllab.generate.dataset import Batch
from skilllab.generate.records import Demonstration
from skilllab.learn.trainer import continual_finetune, training_step
from skilllab.policy.model import PolicyModel, Variant
from skilllab.policy.selector import HighLevelSelector
from skilllab.sampler.rollout import PolicyAgent, Rollout, run_rollouts, sample_batch
from skilllab.utils.seeding import derive_seed, make_rng, stable_key
from skilllab.world import (
    Arm, K_D, K_L, K_R, LongTask, SkillId, Stage, TaskSpec, WorldState, SKILL_INDEX, OBS_DIM,
    expert_action, observe, reset,
)

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    suite: str
    variant: str
    seed: int
    n_trials: int
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'suite': self.suite, 'variant': self.variant, 'seed': self.seed, 'n_trials': self.n_trials,
            'summary': _json_safe(self.summary),
            'tables': {name: _json_safe(df.to_dict(orient='records')) for name, df in self.tables.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        try:
            tables = {name: pd.DataFrame(rows) for name, rows in data.get('tables', {}).items()}
            return cls(data['suite'], data['variant'], int(data['seed']), int(data['n_trials']),
                       tables, dict(data.get('summary', {})))
        except KeyError as e:
            raise EvaluationError(f"report is missing the field {e}") from e


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return None if not np.isfinite(value) else float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


# ---------------------------------------------------------------------------
# shared plumbing

def _resolve(cfg: Optional[RunConfig], n_trials: Optional[int], seed: Optional[int]) -> Tuple[RunConfig, int, int]:
    cfg = cfg or RunConfig()
    return cfg, cfg.eval.n_trials if n_trials is None else n_trials, cfg.seed if seed is None else seed


def trial_seeds(seed: int, label: str, n: int) -> List[int]:
    return [derive_seed(seed, stable_key(label), i) for i in range(n)]


def _variant_name(model: Optional[PolicyModel], agent) -> str:
    if model is not None:
        return model.variant.value
    return type(agent).__name__


def _require_skills(model: Optional[PolicyModel], needed: Sequence[SkillId]) -> None:
    if model is None:
        return
    missing = [s.value for s in needed if s not in model.skills]
    if missing:
        raise EvaluationError(f"{model.variant.value} model was not trained on {', '.join(missing)}")


def run_trials(agent, tasks: Mapping[str, TaskSpec], n_trials: int, seed: int, world: WorldConfig,
               threshold: float = 0.5, jobs: int = 1) -> Dict[str, List[Rollout]]:
    """n_trials seeded rollouts per labelled task, all stepped in one lock-step batch."""
    labels, specs, seeds = [], [], []
    for label, task in tasks.items():
        for s in trial_seeds(seed, label, n_trials):
            labels.append(label)
            specs.append(task)
            seeds.append(s)
    rollouts = run_rollouts(agent, specs, seeds, world, threshold=threshold, jobs=jobs)
    out: Dict[str, List[Rollout]] = {label: [] for label in tasks}
    for label, ro in zip(labels, rollouts):
        out[label].append(ro)
    return out


def _rate_row(rollouts: Sequence[Rollout], **extra) -> Dict[str, Any]:
    row = dict(extra)
    row.update(success_rate([ro.success for ro in rollouts]))
    row['progress'] = float(np.mean([ro.progress for ro in rollouts])) if rollouts else np.nan
    return row


def _agent(model: Optional[PolicyModel], agent, cfg: RunConfig, force_gate: Optional[float] = None):
    if agent is not None:
        return agent
    if model is None:
        raise EvaluationError("either a model or an agent is required")
    return PolicyAgent(model, cfg.sampler, force_gate)


# ---------------------------------------------------------------------------
# experiment families

def seen_suite(model: Optional[PolicyModel], n_trials: Optional[int] = None, cfg: Optional[RunConfig] = None,
               seed: Optional[int] = None, agent=None, jobs: int = 1) -> EvalReport:
    """Success on the six demonstrated single-arm pairings (each skill with IDLE)."""
    cfg, n_trials, seed = _resolve(cfg, n_trials, seed)
    _require_skills(model, K_L + K_R)
    tasks = {f"{s.value},IDLE": TaskSpec.pair(s, SkillId.IDLE) for s in K_L}
    tasks.update({f"IDLE,{s.value}": TaskSpec.pair(SkillId.IDLE, s) for s in K_R})
    results = run_trials(_agent(model, agent, cfg), tasks, n_trials, seed, cfg.world,
                         cfg.sampler.gate_threshold, jobs)
    rows = [_rate_row(ros, task=label) for label, ros in results.items()]
    table = pd.DataFrame(rows)
    report = EvalReport('seen', _variant_name(model, agent), seed, n_trials, {'seen': table})
    report.summary['average'] = float(table['rate'].mean())
    logger.info("seen skills: average success %.3f", report.summary['average'])
    return report


def recomposition_suite(model: Optional[PolicyModel], n_trials: Optional[int] = None,
                        cfg: Optional[RunConfig] = None, seed: Optional[int] = None, agent=None,
                        jobs: int = 1, include_seen: bool = True) -> EvalReport:
    """
    Success on the nine left/right pairings never demonstrated together

    Parameters:
    -----------
    model : PolicyModel or None
        Policy trained on the six single-arm skills paired with IDLE
    n_trials : int, optional
        Trials per cell (``eval.n_trials`` by default)
    cfg : RunConfig, optional
        World, sampler and evaluation settings
    seed : int, optional
        Suite seed
    agent : optional
        Scripted agent evaluated instead of the model
    include_seen : bool
        Also evaluate the six demonstrated pairings

    Returns:
    --------
    EvalReport with tables 'cells', 'matrix' (rows L1..L3, columns R1..R3) and 'seen'
    """
    cfg, n_trials, seed = _resolve(cfg, n_trials, seed)
    _require_skills(model, K_L + K_R)
    tasks = {f"{l.value},{r.value}": TaskSpec.pair(l, r) for l in K_L for r in K_R}
    results = run_trials(_agent(model, agent, cfg), tasks, n_trials, seed, cfg.world,
                         cfg.sampler.gate_threshold, jobs)
    rows = []
    for l in K_L:
        for r in K_R:
            row = _rate_row(results[f"{l.value},{r.value}"], left=l.value, right=r.value)
            rows.append(row)
            logger.info("recompose %s+%s: %d/%d", l.value, r.value, row['successes'], row['trials'])
    cells = pd.DataFrame(rows)
    matrix = cells.pivot(index='left', columns='right', values='rate')
    report = EvalReport('recompose', _variant_name(model, agent), seed, n_trials,
                        {'cells': cells, 'matrix': matrix.reset_index()})
    report.summary['average'] = float(np.mean(matrix.values))
    report.summary['matrix'] = matrix.values.tolist()
    if include_seen:
        seen = seen_suite(model, n_trials, cfg, seed, agent, jobs)
        report.tables['seen'] = seen.tables['seen']
        report.summary['seen_average'] = seen.summary['average']
    return report


def coop_suite(model: Optional[PolicyModel], n_trials: Optional[int] = None, cfg: Optional[RunConfig] = None,
               seed: Optional[int] = None, ablate: bool = False, agent=None, jobs: int = 1) -> EvalReport:
    """
    Success on the dual-arm skills

    With ``ablate`` the same trials are repeated with the gate forced to zero,
    which removes every inter-arm message.
    """
    cfg, n_trials, seed = _resolve(cfg, n_trials, seed)
    _require_skills(model, K_D)
    tasks = {s.value: TaskSpec.dual(s) for s in K_D}
    conditions = [('policy', None)] + ([('no_messages', 0)] if ablate else [])
    rows = []
    for name, force in conditions:
        results = run_trials(_agent(model, agent, cfg, force), tasks, n_trials, seed, cfg.world,
                             cfg.sampler.gate_threshold, jobs)
        rows += [_rate_row(ros, task=label, condition=name) for label, ros in results.items()]
    table = pd.DataFrame(rows)
    report = EvalReport('coop', _variant_name(model, agent), seed, n_trials, {'coop': table})
    by_condition = table.groupby('condition', sort=False)
    for name, group in by_condition:
        # trial-count weighted
        report.summary[f"average_{name}"] = float(group['successes'].sum() / group['trials'].sum())
    if ablate:
        base = report.summary['average_policy']
        report.summary['relative_drop'] = (None if base == 0
                                           else float((base - report.summary['average_no_messages']) / base))
    return report


def _schedule_for(model: Optional[PolicyModel], ev: EvalConfig, schedule: Optional[str]) -> str:
    # one stage plan for every variant; only the flag or the config picks it
    return ev.schedule if schedule is None else schedule


def longhorizon_suite(model: Optional[PolicyModel], n_trials: Optional[int] = None,
                      cfg: Optional[RunConfig] = None, seed: Optional[int] = None,
                      schedule: Optional[str] = None, agent=None, jobs: int = 1,
                      tasks: Sequence[LongTask] = (LongTask.TUBES, LongTask.COLLECT)) -> EvalReport:
    """
    Zero-shot long-horizon tasks composed from separately trained skills

    Reports per task the success rate, mean progress, progress-normalised
    completion time (absent when no episode made progress), gate/stage step
    agreement and within-stage gate variance, plus one row per episode.
    """
    cfg, n_trials, seed = _resolve(cfg, n_trials, seed)
    schedule = _schedule_for(model, cfg.eval, schedule)
    specs = {t.value: TaskSpec.long(t, schedule=schedule) for t in tasks}
    for spec in specs.values():
        _require_skills(model, spec.skills)
    threshold = cfg.sampler.gate_threshold
    results = run_trials(_agent(model, agent, cfg), specs, n_trials, seed, cfg.world, threshold, jobs)
    episodes, rows = [], []
    report = EvalReport('longhorizon', _variant_name(model, agent), seed, n_trials)
    for label, ros in results.items():
        for i, ro in enumerate(ros):
            episodes.append({
                'task': label, 'trial': i, 'seed': ro.seed, 'steps': ro.steps, 'score': ro.score,
                'progress': ro.progress, 'success': ro.success,
                'agreement': gate_stage_agreement(ro.gate.alpha, ro.priors, threshold),
                'gate_variance': within_stage_variance(ro.gate.alpha, ro.stage_index),
            })
        ep = pd.DataFrame([e for e in episodes if e['task'] == label])
        tn = t_norm(ep['steps'], ep['progress'])
        row = _rate_row(ros, task=label, schedule=schedule)
        row.update(mean_progress=float(ep['progress'].mean()), t_norm=np.nan if tn is None else tn,
                   agreement=float(ep['agreement'].mean()), gate_variance=float(ep['gate_variance'].mean()))
        rows.append(row)
        report.summary[f"t_norm_{label}"] = tn
        logger.info("%s (%s): progress %.3f, t_norm %s", label, schedule, row['mean_progress'],
                    'absent' if tn is None else f"{tn:.1f}")
    report.tables = {'tasks': pd.DataFrame(rows), 'episodes': pd.DataFrame(episodes)}
    report.summary['schedule'] = schedule
    return report


def continual_suite(pretrained: Mapping[str, PolicyModel], new_demos: Sequence[Demonstration],
                    k_list: Optional[Sequence[int]] = None, n_trials: Optional[int] = None,
                    cfg: Optional[RunConfig] = None, seed: Optional[int] = None,
                    task: TaskSpec = TaskSpec.dual(SkillId.D1), jobs: int = 1,
                    progress: bool = False) -> EvalReport:
    """
    Success on a new dual-arm task against the number of fine-tuning demonstrations

    Parameters:
    -----------
    pretrained : mapping of variant name to PolicyModel
        Models pretrained on single-arm data
    new_demos : sequence of Demonstration
        Demonstrations of the new task; the first K are used for each K
    k_list : sequence of int, optional
        Demonstration counts (``eval.continual_k`` by default)

    Returns:
    --------
    EvalReport with one 'curve' row per (variant, K) and, when any K > 0, the
    'finetune' table of the fine-tuning logs
    """
    cfg, n_trials, seed = _resolve(cfg, n_trials, seed)
    k_list = list(cfg.eval.continual_k if k_list is None else k_list)
    rows, logs = [], []
    for name, model in pretrained.items():
        for k in k_list:
            tuned, log = continual_finetune(model, new_demos, k, cfg, progress=progress)
            if len(log):
                logs.append(log.assign(variant=name))
            results = run_trials(PolicyAgent(tuned, cfg.sampler), {task.label(): task}, n_trials, seed,
                                 cfg.world, cfg.sampler.gate_threshold, jobs)
            row = _rate_row(results[task.label()], variant=name, k=k,
                            episodes=int(log['episodes'].iloc[0]) if len(log) else 0)
            rows.append(row)
            logger.info("continual %s K=%d: %d/%d", name, k, row['successes'], row['trials'])
    tables = {'curve': pd.DataFrame(rows)}
    if logs:
        tables['finetune'] = pd.concat(logs, ignore_index=True)
    report = EvalReport('continual', ",".join(pretrained), seed, n_trials, tables)
    report.summary['task'] = task.label()
    report.summary['k_list'] = k_list
    return report


# ---------------------------------------------------------------------------
# entanglement diagnostics

def draw_joint_samples(model: PolicyModel, obs: np.ndarray, stage: Stage, n_samples: int, seed: int,
                       cfg: Optional[RunConfig] = None, force_gate: Optional[float] = None,
                       chunk: int = 512) -> Tuple[np.ndarray, np.ndarray]:
    """n_samples joint actions at one fixed observation, fresh noise for every draw."""
    cfg = cfg or RunConfig()
    obs = np.asarray(obs, dtype=np.float32).reshape(1, OBS_DIM)
    a_l, a_r = [], []
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        rngs = [make_rng(seed, stable_key('mi'), start + i) for i in range(n)]
        s = sample_batch(model, np.repeat(obs, n, axis=0), np.full(n, SKILL_INDEX[stage.left]),
                         np.full(n, SKILL_INDEX[stage.right]), rngs, cfg.sampler, force_gate)
        a_l.append(s.a_L)
        a_r.append(s.a_R)
    return np.concatenate(a_l), np.concatenate(a_r)


def conditional_mi(model: PolicyModel, obs: np.ndarray, stage: Stage, n_samples: Optional[int] = None,
                   bins: Optional[int] = None, seed: int = 0, cfg: Optional[RunConfig] = None,
                   force_gate: Optional[float] = None) -> MIDiagnostic:
    """Plug-in I(a_L; a_R | x) at one observation, with its shuffle bias floor."""
    cfg = cfg or RunConfig()
    n_samples = cfg.eval.mi_samples if n_samples is None else n_samples
    bins = cfg.eval.mi_bins if bins is None else bins
    if bins < 2 or n_samples < 100 * bins ** 2:
        raise EvaluationError(f"{n_samples} samples are too few for {bins} bins per dimension")
    a_l, a_r = draw_joint_samples(model, obs, stage, n_samples, seed, cfg, force_gate)
    return mi_from_samples(a_l, a_r, bins, make_rng(seed, stable_key('shuffle')), cfg.eval.mi_shuffles,
                           context=f"{stage.left.value},{stage.right.value}")


def expert_region(state: WorldState, stage: Stage, tolerance: float,
                  world: WorldConfig = WorldConfig()) -> ProductRegion:
    """Box of half-width ``tolerance`` around each arm's noise-free expert action."""
    quiet = dataclasses.replace(world, sigma_action=0.0, sigma_idle=0.0)
    rng = np.random.default_rng(0)
    shared = np.zeros(2)
    centers = [expert_action(state, skill, arm, rng, quiet, shared).clamped().to_array()
               for skill, arm in ((stage.left, Arm.LEFT), (stage.right, Arm.RIGHT))]
    return ProductRegion.around(centers[0], centers[1], tolerance)


def support_coverage(model: PolicyModel, obs: np.ndarray, stage: Stage, region: ProductRegion,
                     n_samples: Optional[int] = None, seed: int = 0, cfg: Optional[RunConfig] = None,
                     force_gate: Optional[float] = None) -> float:
    """Fraction of sampled joint actions inside the product of the per-arm target boxes."""
    cfg = cfg or RunConfig()
    if not region.volume > 0:
        raise EvaluationError("degenerate target region (zero volume)")
    n_samples = cfg.eval.support_samples if n_samples is None else n_samples
    a_l, a_r = draw_joint_samples(model, obs, stage, n_samples, seed, cfg, force_gate)
    return coverage_fraction(a_l, a_r, region)


def entanglement_suite(model: PolicyModel, cfg: Optional[RunConfig] = None, seed: Optional[int] = None,
                       kinds: Sequence[str] = ('mi', 'support')) -> EvalReport:
    """
    MI and support coverage at the start state of every unseen pairing

    Gated models are queried with the gate forced off, the condition under which
    the arms should act independently.
    """
    cfg, _, seed = _resolve(cfg, 1, seed)
    force = 0 if model.has_gate else None
    rows = []
    for l in K_L:
        for r in K_R:
            stage = Stage(l, r)
            task = TaskSpec.pair(l, r)
            key = derive_seed(seed, stable_key(task.label()))
            state = reset(task, key)
            obs = observe(state, task)
            row: Dict[str, Any] = {'left': l.value, 'right': r.value}
            if 'mi' in kinds:
                row.update(conditional_mi(model, obs, stage, seed=key, cfg=cfg, force_gate=force).as_row())
            if 'support' in kinds:
                region = expert_region(state, stage, cfg.eval.support_tolerance, cfg.world)
                row['coverage'] = support_coverage(model, obs, stage, region, seed=key, cfg=cfg, force_gate=force)
            rows.append(row)
            logger.info("entanglement %s+%s: %s", l.value, r.value,
                        ", ".join(f"{k}={v:.4f}" for k, v in row.items() if isinstance(v, float)))
    table = pd.DataFrame(rows)
    report = EvalReport('diag', model.variant.value, seed, 1, {'entanglement': table})
    if 'mi' in kinds:
        report.summary['mean_mi'] = float(table['mi'].mean())
        report.summary['mean_bias_floor'] = float(table['bias_floor'].mean())
    if 'support' in kinds:
        report.summary['mean_coverage'] = float(table['coverage'].mean())
    return report


# ---------------------------------------------------------------------------
# gradient checks

def _rand(rng, *shape, low=-1.0, high=1.0):
    return rng.uniform(low, high, size=shape)


def _primitive_checks(rng: np.random.Generator) -> Dict[str, Tuple[Callable, ParameterSet]]:
    """Scalar functions exercising one primitive each, with their parameters."""
    checks = {}

    def make(name, shapes, fn, low=-1.0, high=1.0):
        ps = ParameterSet()
        for i, shape in enumerate(shapes):
            ps.add(f"p{i}", _rand(rng, *shape, low=low, high=high))
        w = rng.standard_normal(64)
        names = list(ps)

        def f(p):
            out = fn(*(p[n] for n in names))
            flat = reshape(out, (-1,)) if out.ndim else reshape(out, (1,))
            return sum_(mul(flat, w[:flat.shape[0]]))
        checks[name] = (f, ps)

    make('add', [(3, 4), (4,)], add)
    make('sub', [(3, 4), (3, 4)], sub)
    make('mul', [(3, 4), (3, 1)], mul)
    make('matmul', [(2, 3, 4), (4, 2)], matmul)
    make('power', [(5,)], lambda x: power(x, 3.0))
    make('tanh', [(6,)], tanh)
    make('sigmoid', [(6,)], sigmoid)
    make('relu', [(6,)], relu, low=0.2, high=1.0)
    make('exp', [(6,)], exp)
    make('log', [(6,)], log, low=0.5, high=2.0)
    make('sum', [(3, 4)], lambda x: sum_(x, axis=0))
    make('mean', [(3, 4)], lambda x: mean(x, axis=1, keepdims=True))
    make('reshape', [(3, 4)], lambda x: reshape(x, (2, 6)))
    make('transpose', [(2, 3, 4)], lambda x: transpose(x, (2, 0, 1)))
    make('slice', [(4, 5)], lambda x: slice_(x, (slice(1, 3), slice(None, None, 2))))
    make('concat', [(2, 3), (2, 2)], lambda a, b: concat([a, b], axis=1))
    idx = np.array([2, 0, 2, 1])
    make('gather', [(3, 4)], lambda t: gather(t, idx))
    make('layer_norm', [(3, 5), (5,), (5,)], layer_norm)
    make('softmax', [(3, 5)], lambda x: softmax(x, axis=-1))
    make('log_softmax', [(3, 5)], lambda x: log_softmax(x, axis=-1))
    target = _rand(rng, 3, 4)
    make('mse', [(3, 4)], lambda x: mse(x, target))
    labels = rng.integers(0, 5, size=3)
    make('cross_entropy', [(3, 5)], lambda x: cross_entropy(x, labels))
    y = rng.uniform(0.0, 1.0, size=6)
    make('bce', [(6,)], lambda x: bce(x, y), low=0.1, high=0.9)
    make('attention', [(2, 3, 4), (2, 5, 4), (2, 5, 4), (4, 3)],
         lambda q, k, v, w: multihead_attention(q, k, v, 2, w))
    return checks


GRADCHECK_POLICY = PolicyConfig(d_h=8, d_z=8, d_e=8, n_heads=2, token_dim=4, encoder_hidden=(8,),
                                expert_hidden=8, time_features=4, estimator_tokens=2, estimator_heads=2,
                                estimator_dim=4)


def _loss_check(seed: int) -> Tuple[Callable, ParameterSet]:
    """
    One full SKILLVLA training loss on a small random batch

    The cooperation and stickiness terms hold stop-gradients, which finite
    differences cannot see, so their weights are zero here.
    """
    rng = make_rng(seed, stable_key('gradcheck-loss'))
    learn = LearnConfig(weights=LossWeights(coop=0.0, sticky=0.0))
    cfg = RunConfig(policy=GRADCHECK_POLICY, learn=learn)
    selector = HighLevelSelector(cfg.policy, seed=seed)
    model = PolicyModel(Variant.SKILLVLA, cfg.policy, seed=seed, selector=selector)
    b = 4
    u_l = np.array([SKILL_INDEX[s] for s in (SkillId.L1, SkillId.D1, SkillId.IDLE, SkillId.D2)])
    u_r = np.array([SKILL_INDEX[s] for s in (SkillId.IDLE, SkillId.D1, SkillId.R2, SkillId.D2)])
    batch = Batch(np.arange(b), _rand(rng, b, OBS_DIM).astype(np.float32),
                  _rand(rng, b, 3).astype(np.float32), _rand(rng, b, 3).astype(np.float32),
                  u_l, u_r, np.array([0, 1, 0, 1], dtype=np.float32), np.array([0, 0, 2, 2]))
    contexts = selector.context(batch.obs, u_l, u_r)

    def f(_params):
        total, _ = training_step(model, batch, make_rng(seed, 7), cfg.learn, contexts)
        return total
    return f, model.params


def gradcheck_suite(n_seeds: int = 20, seed: int = 0, eps: float = 1e-3,
                    loss_entries: int = 4) -> EvalReport:
    """Maximum relative and absolute gradient errors of every primitive and of a full loss pass, per seed."""
    rows = []
    for k in range(n_seeds):
        s = derive_seed(seed, k)
        rng = make_rng(s, stable_key('gradcheck'))
        for name, (f, ps) in _primitive_checks(rng).items():
            rel, err = grad_check_errors(f, ps, eps=eps)
            rows.append({'check': name, 'seed': s, 'max_rel_error': rel, 'max_abs_error': err})
        f, ps = _loss_check(s)
        rel, err = grad_check_errors(f, ps, eps=eps, max_entries=loss_entries, rng=rng)
        rows.append({'check': 'skillvla_loss', 'seed': s, 'max_rel_error': rel, 'max_abs_error': err})
    table = pd.DataFrame(rows)
    report = EvalReport('gradcheck', 'diffcore', seed, n_seeds, {'gradcheck': table})
    report.summary['max_rel_error'] = float(table['max_rel_error'].max())
    report.summary['max_abs_error'] = float(table['max_abs_error'].max())
    return report
