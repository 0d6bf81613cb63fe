"""
Demonstration records and dataset manifest
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from skilllab.world.skills import SkillId, Stage, TaskSpec


@dataclass(eq=False)
class StepRecord:
    obs: np.ndarray          # float32, observation layout of world.observe
    a_L: np.ndarray          # float32 (dx, dy, grip), clamped
    a_R: np.ndarray
    u_L: SkillId
    u_R: SkillId
    prior: int               # 1 iff the step belongs to a dual-arm stage

    def __eq__(self, other):
        if not isinstance(other, StepRecord):
            return NotImplemented
        return (np.array_equal(self.obs, other.obs)
                and np.array_equal(self.a_L, other.a_L)
                and np.array_equal(self.a_R, other.a_R)
                and self.u_L is other.u_L and self.u_R is other.u_R
                and self.prior == other.prior)

    @property
    def stage(self) -> Stage:
        return Stage(self.u_L, self.u_R)


@dataclass(eq=False)
class Demonstration:
    task: TaskSpec
    steps: List[StepRecord]
    seed: int = 0
    success: bool = True

    def __eq__(self, other):
        if not isinstance(other, Demonstration):
            return NotImplemented
        return (self.task == other.task and self.seed == other.seed
                and self.success == other.success and self.steps == other.steps)

    def __len__(self):
        return len(self.steps)

    def stage_bounds(self) -> List[Tuple[int, int, Stage]]:
        """Consecutive (start, end, stage) blocks partitioning the step range."""
        bounds = []
        start = 0
        for t in range(1, len(self.steps) + 1):
            if t == len(self.steps) or self.steps[t].stage != self.steps[start].stage:
                bounds.append((start, t, self.steps[start].stage))
                start = t
        return bounds

    @property
    def skill_labels(self) -> List[Tuple[SkillId, SkillId]]:
        return [(s.left, s.right) for _, _, s in self.stage_bounds()]


@dataclass
class DatasetManifest:
    name: str
    format_version: int
    inventory: Dict[str, int]
    episodes: List[Dict[str, Any]]
    world: Dict[str, Any]
    version: str = ""
    seeds: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'format_version': self.format_version,
            'version': self.version,
            'inventory': dict(self.inventory),
            'seeds': list(self.seeds),
            'world': dict(self.world),
            'episodes': list(self.episodes),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DatasetManifest":
        return cls(
            name=data['name'],
            format_version=int(data['format_version']),
            inventory={k: int(v) for k, v in data['inventory'].items()},
            episodes=list(data['episodes']),
            world=dict(data['world']),
            version=data.get('version', ""),
            seeds=[int(s) for s in data.get('seeds', [])],
        )

    @property
    def total_steps(self) -> int:
        return sum(int(e['n_steps']) for e in self.episodes)
