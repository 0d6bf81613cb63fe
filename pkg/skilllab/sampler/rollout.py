"""
Action sampling and closed-loop rollouts

Actions are drawn by Euler integration of the learned flow from a standard
normal draw. The cooperation gate is decided once per control step and held
fixed through the integration. Rollouts step many independent episodes in
lock-step, one batched agent call per control step.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from skilllab.config import SamplerConfig, WorldConfig
from skilllab.diffcore import Tensor, no_grad
from skilllab.errors import ConfigError
from skilllab.policy.model import ACTION_DIM, PolicyModel, Variant
from skilllab.utils.seeding import make_rng, stable_key
from skilllab.world import (
    Arm, ArmAction, SkillId, Stage, TaskSpec, WorldState, SKILLS, SKILL_INDEX,
    current_stage, drop_is_terminal, expert_action, is_success, max_score, observe, reset, score, step,
)

logger = logging.getLogger(__name__)


@dataclass
class GateTrace:
    """Predicted gate probability and the applied gate value of every control step."""
    threshold: float = 0.5
    yhat: List[float] = field(default_factory=list)
    alpha: List[float] = field(default_factory=list)

    def append(self, yhat: float, alpha: float) -> None:
        self.yhat.append(float(yhat))
        self.alpha.append(float(alpha))

    def __len__(self):
        return len(self.alpha)


@dataclass
class Rollout:
    task: TaskSpec
    seed: int
    observations: List[np.ndarray] = field(default_factory=list)
    actions_L: List[np.ndarray] = field(default_factory=list)
    actions_R: List[np.ndarray] = field(default_factory=list)
    tokens: List[Tuple[SkillId, SkillId]] = field(default_factory=list)
    stages: List[Stage] = field(default_factory=list)
    stage_index: List[int] = field(default_factory=list)
    gate: GateTrace = field(default_factory=GateTrace)
    final_state: Optional[WorldState] = None
    score: int = 0
    max_score: int = 1

    @property
    def steps(self) -> int:
        return len(self.actions_L)

    @property
    def priors(self) -> List[int]:
        return [s.prior for s in self.stages]

    @property
    def progress(self) -> float:
        return self.score / self.max_score if self.max_score else 0.0

    @property
    def success(self) -> bool:
        return self.score >= self.max_score


@dataclass(frozen=True)
class ActionSample:
    """One batched agent decision."""
    a_L: np.ndarray        # (B, 3), clamped
    a_R: np.ndarray
    u_L: np.ndarray        # (B,) skill-token indices
    u_R: np.ndarray
    yhat: np.ndarray       # (B,) predicted gate probability
    alpha: np.ndarray      # (B,) gate value applied to the messages


def _stage_tokens(stages: Sequence[Stage]) -> Tuple[np.ndarray, np.ndarray]:
    return (np.array([SKILL_INDEX[s.left] for s in stages], dtype=np.int64),
            np.array([SKILL_INDEX[s.right] for s in stages], dtype=np.int64))


def decide_gate(model: PolicyModel, z_h: Optional[np.ndarray], batch_size: int, threshold: float = 0.5,
                force_gate: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(yhat, alpha) per sample: binarised estimator output, raw output for continuous gates."""
    if model.has_gate:
        with no_grad():
            yhat = model.estimate_coop(z_h).data.astype(np.float64)
        alpha = yhat.copy() if model.continuous_gate else (yhat >= threshold).astype(np.float64)
    else:
        fixed = 1.0 if model.variant is Variant.TWIN else 0.0
        yhat = np.full(batch_size, fixed)
        alpha = yhat.copy()
    if force_gate is not None:
        if force_gate not in (0, 1):
            raise ConfigError(f"force_gate must be 0 or 1, got {force_gate}")
        alpha = np.full(batch_size, float(force_gate))
    return yhat, alpha


def integrate_flow(model: PolicyModel, obs: np.ndarray, latents, eps: np.ndarray, gate: np.ndarray,
                   n_steps: int) -> np.ndarray:
    """Euler integration of the velocity field from tau = 0 to 1, clamped to [-1, 1]."""
    if n_steps < 1:
        raise ConfigError("n_flow_steps must be at least 1")
    a = np.asarray(eps, dtype=np.float32).copy()
    dt = 1.0 / n_steps
    with no_grad():
        for k in range(n_steps):
            v = model.velocity(Tensor(a), np.float32(k * dt), latents, obs, gate)
            a = (a + dt * v.data).astype(np.float32)
    return np.clip(a, -1.0, 1.0)


def sample_batch(model: PolicyModel, obs: np.ndarray, instr_L: np.ndarray, instr_R: np.ndarray,
                 rngs: Sequence[np.random.Generator], cfg: SamplerConfig = SamplerConfig(),
                 force_gate: Optional[float] = None) -> ActionSample:
    """
    Sample one joint action per row

    Parameters:
    -----------
    model : PolicyModel
        Trained policy; its selector (when present) turns instructions into skill
        tokens, otherwise the instruction tokens are used as they are
    obs : array of shape (B, OBS_DIM)
        Observations
    instr_L, instr_R : arrays of shape (B,)
        Instruction token indices
    rngs : sequence of numpy.random.Generator
        One noise stream per row
    cfg : SamplerConfig
        Flow-step count and gate threshold
    force_gate : 0 or 1, optional
        Override the applied gate value

    Returns:
    --------
    ActionSample
    """
    obs = np.atleast_2d(np.asarray(obs, dtype=np.float32))
    b = obs.shape[0]
    if len(rngs) != b:
        raise ConfigError(f"need one random stream per row, got {len(rngs)} for {b} rows")
    instr_L = np.asarray(instr_L, dtype=np.int64).reshape(b)
    instr_R = np.asarray(instr_R, dtype=np.int64).reshape(b)
    z_h = None
    if model.selector is not None:
        u_l, u_r, z_h = model.selector.select(obs, instr_L, instr_R)
    else:
        u_l, u_r = instr_L, instr_R
    yhat, alpha = decide_gate(model, z_h, b, cfg.gate_threshold, force_gate)
    eps = np.stack([r.standard_normal(2 * ACTION_DIM) for r in rngs]).astype(np.float32)
    with no_grad():
        latents = model.encode(obs, u_l, u_r)
    a = integrate_flow(model, obs, latents, eps, alpha.astype(np.float32), cfg.n_flow_steps)
    return ActionSample(a[:, :ACTION_DIM], a[:, ACTION_DIM:], u_l, u_r, yhat, alpha)


def sample_actions(model: PolicyModel, obs: np.ndarray, instruction: Stage, rng: np.random.Generator,
                   n_steps: int = 10, gate_threshold: float = 0.5,
                   force_gate: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """(a_L, a_R) for a single observation and instruction."""
    instr_l, instr_r = _stage_tokens([instruction])
    s = sample_batch(model, obs, instr_l, instr_r, [rng],
                     SamplerConfig(n_flow_steps=n_steps, gate_threshold=gate_threshold), force_gate)
    return s.a_L[0], s.a_R[0]


# ---------------------------------------------------------------------------
# agents

class PolicyAgent:
    def __init__(self, model: PolicyModel, cfg: SamplerConfig = SamplerConfig(),
                 force_gate: Optional[float] = None):
        self.model = model
        self.cfg = cfg
        self.force_gate = force_gate

    def act_batch(self, obs: np.ndarray, instructions: Sequence[Stage], states: Sequence[WorldState],
                  rngs: Sequence[np.random.Generator]) -> ActionSample:
        instr_l, instr_r = _stage_tokens(instructions)
        return sample_batch(self.model, obs, instr_l, instr_r, rngs, self.cfg, self.force_gate)


class ExpertAgent:
    """Scripted experts behind the agent interface."""

    def __init__(self, cfg: WorldConfig = WorldConfig()):
        self.cfg = cfg

    def act_batch(self, obs, instructions, states, rngs) -> ActionSample:
        a_l, a_r = [], []
        for stage, state, rng in zip(instructions, states, rngs):
            shared = rng.standard_normal(2)
            a_l.append(expert_action(state, stage.left, Arm.LEFT, rng, self.cfg, shared).clamped().to_array())
            a_r.append(expert_action(state, stage.right, Arm.RIGHT, rng, self.cfg, shared).clamped().to_array())
        u_l, u_r = _stage_tokens(instructions)
        prior = np.array([s.prior for s in instructions], dtype=np.float64)
        return ActionSample(np.array(a_l), np.array(a_r), u_l, u_r, prior, prior.copy())


class ZeroAgent:
    """Always outputs the zero action."""

    def act_batch(self, obs, instructions, states, rngs) -> ActionSample:
        b = len(instructions)
        u_l, u_r = _stage_tokens(instructions)
        zeros = np.zeros((b, ACTION_DIM))
        return ActionSample(zeros, zeros.copy(), u_l, u_r, np.zeros(b), np.zeros(b))


# ---------------------------------------------------------------------------
# rollouts

def episode_rng(seed: int) -> np.random.Generator:
    return make_rng(seed, stable_key('rollout'))


def _lockstep(agent, tasks: Sequence[TaskSpec], seeds: Sequence[int], world: WorldConfig,
              horizon: Optional[int], threshold: float) -> List[Rollout]:
    states = [reset(task, seed) for task, seed in zip(tasks, seeds)]
    rngs = [episode_rng(seed) for seed in seeds]
    results = [Rollout(task, int(seed), gate=GateTrace(threshold), max_score=max_score(task))
               for task, seed in zip(tasks, seeds)]
    limits = [horizon if horizon is not None else task.resolved_horizon(world) for task in tasks]
    active = [i for i in range(len(tasks)) if limits[i] > 0]
    while active:
        obs = np.stack([observe(states[i], tasks[i]) for i in active]).astype(np.float32)
        # scripted high-level planner: the stage instruction is read off the world predicates
        planned = [current_stage(states[i], tasks[i], world) for i in active]
        stages = [stage for _, stage in planned]
        sample = agent.act_batch(obs, stages, [states[i] for i in active], [rngs[i] for i in active])
        still = []
        for j, i in enumerate(active):
            ro = results[i]
            a_l, a_r = ArmAction.from_array(sample.a_L[j]).clamped(), ArmAction.from_array(sample.a_R[j]).clamped()
            ro.observations.append(obs[j])
            ro.actions_L.append(a_l.to_array().astype(np.float32))
            ro.actions_R.append(a_r.to_array().astype(np.float32))
            ro.tokens.append((SKILLS[int(sample.u_L[j])], SKILLS[int(sample.u_R[j])]))
            ro.stages.append(stages[j])
            ro.stage_index.append(planned[j][0])
            ro.gate.append(sample.yhat[j], sample.alpha[j])
            states[i] = step(states[i], a_l, a_r, world)
            done = (is_success(states[i], tasks[i], world)
                    or (states[i].bar_dropped and drop_is_terminal(tasks[i]))
                    or ro.steps >= limits[i])
            if not done:
                still.append(i)
        active = still
    for i, ro in enumerate(results):
        ro.final_state = states[i]
        ro.score = score(states[i], tasks[i], world)
    return results


def run_rollouts(agent, tasks: Sequence[TaskSpec], seeds: Sequence[int], world: WorldConfig = WorldConfig(),
                 horizon: Optional[int] = None, threshold: float = 0.5, jobs: int = 1) -> List[Rollout]:
    """
    Closed-loop episodes, one per (task, seed)

    Each episode has its own random stream derived from its seed, so its outcome
    does not depend on the other episodes it shares a batch with. With jobs > 1
    the episodes are split into contiguous chunks run in worker processes.
    """
    if len(tasks) != len(seeds):
        raise ConfigError(f"{len(tasks)} tasks but {len(seeds)} seeds")
    if horizon is not None and horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if jobs > 1 and len(tasks) > 1:
        bounds = np.linspace(0, len(tasks), min(jobs, len(tasks)) + 1).astype(int)
        chunks = [(list(tasks[a:b]), list(seeds[a:b])) for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_lockstep, agent, t, s, world, horizon, threshold) for t, s in chunks]
            return [ro for fut in futures for ro in fut.result()]
    return _lockstep(agent, tasks, seeds, world, horizon, threshold)


def rollout(model: PolicyModel, task: TaskSpec, horizon: Optional[int] = None, seed: int = 0,
            world: WorldConfig = WorldConfig(), cfg: SamplerConfig = SamplerConfig(),
            force_gate: Optional[float] = None) -> Rollout:
    """One closed-loop episode of a policy."""
    return run_rollouts(PolicyAgent(model, cfg, force_gate), [task], [seed], world, horizon,
                        cfg.gate_threshold)[0]
