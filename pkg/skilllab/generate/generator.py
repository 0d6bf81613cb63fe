"""
Generator module for demonstration datasets

Runs the scripted experts in the simulator and records per-step observations,
actions, skill tokens and cooperation-prior labels.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from skilllab.config import DataConfig, RunConfig, WorldConfig
from skilllab.errors import ConfigError, DataError
from skilllab.generate.records import Demonstration, StepRecord
from skilllab.utils.seeding import derive_seed, make_rng, stable_key
from skilllab.world import (
    SkillId, TaskSpec, reset, step, observe, is_success, drop_is_terminal, expert_joint_action,
)

logger = logging.getLogger(__name__)

S = SkillId
INVENTORY_GROUPS: Dict[str, List[TaskSpec]] = {
    'single': [
        TaskSpec.pair(S.L1, S.IDLE), TaskSpec.pair(S.L2, S.IDLE), TaskSpec.pair(S.L3, S.IDLE),
        TaskSpec.pair(S.IDLE, S.R1), TaskSpec.pair(S.IDLE, S.R2), TaskSpec.pair(S.IDLE, S.R3),
    ],
    'dual': [TaskSpec.dual(S.D1), TaskSpec.dual(S.D2), TaskSpec.dual(S.D3)],
    'long': [
        TaskSpec.pair(S.L4, S.IDLE), TaskSpec.pair(S.IDLE, S.R4), TaskSpec.dual(S.D4),
        TaskSpec.dual(S.D5), TaskSpec.pair(S.L5, S.IDLE), TaskSpec.pair(S.IDLE, S.R5),
        TaskSpec.pair(S.L6, S.IDLE), TaskSpec.dual(S.D6),
    ],
}
INVENTORY_GROUPS['mixed'] = INVENTORY_GROUPS['single'] + INVENTORY_GROUPS['dual']
INVENTORY_GROUPS['all'] = INVENTORY_GROUPS['mixed'] + INVENTORY_GROUPS['long']


def label_prior(skill: SkillId) -> int:
    """Cooperation prior of a skill: 1 for dual-arm skills, 0 otherwise."""
    return 1 if SkillId(skill).is_dual else 0


def run_expert_episode(task: TaskSpec, seed: int, cfg: WorldConfig = WorldConfig()) -> Demonstration:
    """
    Roll out the scripted experts for one episode

    Parameters:
    -----------
    task : TaskSpec
        Task to demonstrate
    seed : int
        Reset seed; the expert noise stream is derived from it
    cfg : WorldConfig
        Simulator constants

    Returns:
    --------
    Demonstration ending at success, at a terminal bar drop or at the horizon
    """
    state = reset(task, seed)
    rng = make_rng(seed, stable_key('expert'))
    steps = []
    for _ in range(task.resolved_horizon(cfg)):
        obs = observe(state, task).astype(np.float32)
        a_l, a_r, stage = expert_joint_action(state, task, rng, cfg)
        a_l, a_r = a_l.clamped(), a_r.clamped()
        steps.append(StepRecord(
            obs=obs,
            a_L=a_l.to_array().astype(np.float32),
            a_R=a_r.to_array().astype(np.float32),
            u_L=stage.left,
            u_R=stage.right,
            prior=label_prior(stage.left),
        ))
        state = step(state, a_l, a_r, cfg)
        if is_success(state, task, cfg):
            break
        if state.bar_dropped and drop_is_terminal(task):
            break
    return Demonstration(task, steps, seed=int(seed), success=is_success(state, task, cfg))


def _run_many(task: TaskSpec, seeds: Sequence[int], cfg: WorldConfig, jobs: int) -> List[Demonstration]:
    if jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(partial(run_expert_episode, task, cfg=cfg), seeds))
    return [run_expert_episode(task, s, cfg) for s in seeds]


def generate(task: TaskSpec, n_episodes: int, seed: int, cfg: Optional[RunConfig] = None,
             jobs: int = 1) -> List[Demonstration]:
    """
    Generate successful expert demonstrations for a task

    Failed attempts are discarded and replaced by fresh seeds. If the failure rate
    over the attempts exceeds the configured limit the constants are assumed to
    be wrong and a DataError is raised.

    Parameters:
    -----------
    task : TaskSpec
        Task to demonstrate
    n_episodes : int
        Number of episodes to return (at least 1)
    seed : int
        Base seed; the output is a deterministic function of (task, n_episodes, seed)
    cfg : RunConfig, optional
        World and data settings (defaults when omitted)
    jobs : int
        Worker processes for episode rollouts

    Returns:
    --------
    list of Demonstration, length n_episodes
    """
    if n_episodes < 1:
        raise ConfigError("n_episodes must be at least 1")
    cfg = cfg or RunConfig()
    data_cfg: DataConfig = cfg.data
    limit = data_cfg.max_failure_rate
    max_attempts = n_episodes if limit <= 0 else int(math.ceil(n_episodes / max(1e-9, 1.0 - limit)))
    task_key = stable_key(task.label())

    demos: List[Demonstration] = []
    failures = 0
    attempts = 0
    while len(demos) < n_episodes and attempts < max_attempts:
        batch = range(attempts, min(attempts + n_episodes - len(demos), max_attempts))
        seeds = [derive_seed(seed, task_key, task.layout_seed, a) for a in batch]
        for demo in _run_many(task, seeds, cfg.world, jobs):
            if demo.success:
                demos.append(demo)
            else:
                failures += 1
        attempts = batch.stop

    rate = failures / attempts if attempts else 0.0
    if len(demos) < n_episodes or rate > limit:
        raise DataError(
            f"expert failure rate {rate:.1%} for {task.label()} exceeds the limit of {limit:.0%} "
            f"({len(demos)}/{n_episodes} episodes after {attempts} attempts)"
        )
    if rate > data_cfg.warn_failure_rate:
        logger.warning("expert failure rate %.1f%% for %s", 100 * rate, task.label())
    logger.info("generated %d episodes of %s (%d steps)", len(demos), task.label(),
                sum(len(d) for d in demos))
    return demos


def episodes_for(task: TaskSpec, data_cfg: DataConfig) -> int:
    return data_cfg.episodes_dual if task.kind == 'dual' else data_cfg.episodes_single


def generate_all(cfg: Optional[RunConfig] = None, group: str = 'all', seed: Optional[int] = None,
                 n_episodes: Optional[int] = None, jobs: int = 1, progress: bool = True) -> List[Demonstration]:
    """
    Generate the default inventory of an inventory group

    Groups: 'single' (six single-arm skills, each paired with IDLE), 'dual' (D1 to
    D3), 'mixed' (both), 'long' (constituent skills of TUBES and COLLECT), 'all'.
    """
    if group not in INVENTORY_GROUPS:
        raise ConfigError(f"unknown inventory group '{group}'")
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    demos: List[Demonstration] = []
    for task in tqdm(INVENTORY_GROUPS[group], desc=f"gen {group}", disable=not progress):
        count = n_episodes or episodes_for(task, cfg.data)
        demos.extend(generate(task, count, seed, cfg, jobs=jobs))
    return demos
