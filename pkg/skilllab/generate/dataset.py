"""
Flat array view of demonstrations for batched training
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from skilllab.errors import DataError
from skilllab.generate.records import Demonstration
from skilllab.world.skills import SKILLS, SKILL_INDEX, SkillId, TaskSpec


@dataclass(frozen=True)
class Batch:
    index: np.ndarray
    obs: np.ndarray
    a_L: np.ndarray
    a_R: np.ndarray
    u_L: np.ndarray
    u_R: np.ndarray
    prior: np.ndarray
    prev: np.ndarray

    def __len__(self):
        return len(self.index)


class Dataset:
    """
    Demonstrations flattened into aligned arrays.

    Tokens are indices into ``SKILLS``; ``prev`` holds the row of the previous
    step of the same episode (the row itself at episode start).
    """

    def __init__(self, obs, a_L, a_R, u_L, u_R, prior, prev, episode, tasks: Sequence[TaskSpec]):
        self.obs = np.asarray(obs, dtype=np.float32)
        self.a_L = np.asarray(a_L, dtype=np.float32)
        self.a_R = np.asarray(a_R, dtype=np.float32)
        self.u_L = np.asarray(u_L, dtype=np.int64)
        self.u_R = np.asarray(u_R, dtype=np.int64)
        self.prior = np.asarray(prior, dtype=np.float32)
        self.prev = np.asarray(prev, dtype=np.int64)
        self.episode = np.asarray(episode, dtype=np.int64)
        self.tasks = list(tasks)

    @classmethod
    def from_demos(cls, demos: Sequence[Demonstration]) -> "Dataset":
        if not demos or not any(len(d) for d in demos):
            raise DataError("no demonstration steps to train on")
        obs, a_l, a_r, u_l, u_r, prior, prev, episode = [], [], [], [], [], [], [], []
        row = 0
        for ep, demo in enumerate(demos):
            for t, rec in enumerate(demo.steps):
                obs.append(rec.obs)
                a_l.append(rec.a_L)
                a_r.append(rec.a_R)
                u_l.append(SKILL_INDEX[rec.u_L])
                u_r.append(SKILL_INDEX[rec.u_R])
                prior.append(rec.prior)
                prev.append(row if t == 0 else row - 1)
                episode.append(ep)
                row += 1
        return cls(np.stack(obs), np.stack(a_l), np.stack(a_r), u_l, u_r, prior, prev, episode,
                   [d.task for d in demos])

    def __len__(self):
        return len(self.obs)

    @property
    def n_episodes(self) -> int:
        return len(self.tasks)

    def skill_inventory(self) -> List[SkillId]:
        """Non-IDLE skills that occur in the data, in canonical order."""
        present = set(self.u_L.tolist()) | set(self.u_R.tolist())
        return [s for s in SKILLS if s is not SkillId.IDLE and SKILL_INDEX[s] in present]

    def batch(self, index: np.ndarray) -> Batch:
        index = np.asarray(index, dtype=np.int64)
        return Batch(index, self.obs[index], self.a_L[index], self.a_R[index], self.u_L[index],
                     self.u_R[index], self.prior[index], self.prev[index])

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        n = len(self)
        return self.batch(rng.choice(n, size=batch_size, replace=n < batch_size))

    def split(self, holdout: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Random (train, held-out) row split; held-out keeps at least one row."""
        perm = rng.permutation(len(self))
        n_out = max(1, int(round(holdout * len(self))))
        if n_out >= len(self):
            raise DataError("dataset too small for a held-out split")
        return np.sort(perm[n_out:]), np.sort(perm[:n_out])
