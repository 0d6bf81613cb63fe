"""
High-level skill selector

Maps (observation, instruction tokens) to a context vector z_H and to one skill
distribution per arm. Heads range over IDLE, the arm's own skills and the dual
skills, so a dual instruction is labelled with the dual skill on both heads.
"""
from typing import Tuple

import numpy as np
from scipy import special

from skilllab.config import PolicyConfig
from skilllab.diffcore import ParameterSet, Tensor, no_grad, tanh
from skilllab.errors import ConfigError
from skilllab.policy.layers import Linear, MLP
from skilllab.world.sim import OBS_DIM
from skilllab.world.skills import LEFT_CLASSES, RIGHT_CLASSES, SKILLS, SKILL_INDEX

N_TOKENS = len(SKILLS)

# skill index -> head class (-1 when the skill cannot appear on that head)
LEFT_CLASS_OF = np.full(N_TOKENS, -1, dtype=np.int64)
RIGHT_CLASS_OF = np.full(N_TOKENS, -1, dtype=np.int64)
for _i, _s in enumerate(LEFT_CLASSES):
    LEFT_CLASS_OF[SKILL_INDEX[_s]] = _i
for _i, _s in enumerate(RIGHT_CLASSES):
    RIGHT_CLASS_OF[SKILL_INDEX[_s]] = _i
LEFT_SKILL_OF = np.array([SKILL_INDEX[s] for s in LEFT_CLASSES], dtype=np.int64)
RIGHT_SKILL_OF = np.array([SKILL_INDEX[s] for s in RIGHT_CLASSES], dtype=np.int64)


def one_hot(index: np.ndarray, n: int = N_TOKENS) -> np.ndarray:
    index = np.asarray(index, dtype=np.int64)
    out = np.zeros(index.shape + (n,), dtype=np.float32)
    np.put_along_axis(out, index[..., None], 1.0, axis=-1)
    return out


def head_labels(u_L: np.ndarray, u_R: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Skill-token indices to head class indices."""
    y_l, y_r = LEFT_CLASS_OF[np.asarray(u_L)], RIGHT_CLASS_OF[np.asarray(u_R)]
    if (y_l < 0).any() or (y_r < 0).any():
        raise ConfigError("skill token on the wrong arm head")
    return y_l, y_r


class HighLevelSelector:
    def __init__(self, cfg: PolicyConfig = PolicyConfig(), seed: int = 0):
        self.cfg = cfg
        self.params = ParameterSet()
        rng = np.random.default_rng([seed, 101])
        d_in = OBS_DIM + 2 * N_TOKENS
        self.encoder = MLP(self.params, "selector.encoder", d_in, cfg.encoder_hidden, cfg.d_h, rng,
                           cfg.init_scale)
        self.head_L = Linear(self.params, "selector.head_L", cfg.d_h, len(LEFT_CLASSES), rng, cfg.init_scale)
        self.head_R = Linear(self.params, "selector.head_R", cfg.d_h, len(RIGHT_CLASSES), rng, cfg.init_scale)
        self.trained = False

    @property
    def frozen(self) -> bool:
        return self.params.frozen

    def freeze(self) -> None:
        self.params.freeze()

    def _inputs(self, obs: np.ndarray, instr_L: np.ndarray, instr_R: np.ndarray) -> Tensor:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float32))
        return Tensor(np.concatenate([obs, one_hot(instr_L), one_hot(instr_R)], axis=-1))

    def encode(self, obs, instr_L, instr_R) -> Tensor:
        """z_H of shape (B, d_h)."""
        return tanh(self.encoder(self._inputs(obs, instr_L, instr_R)))

    def logits(self, obs, instr_L, instr_R) -> Tuple[Tensor, Tensor, Tensor]:
        z = self.encode(obs, instr_L, instr_R)
        return self.head_L(z), self.head_R(z), z

    def context(self, obs, instr_L, instr_R) -> np.ndarray:
        with no_grad():
            return self.encode(obs, instr_L, instr_R).data.copy()

    def probabilities(self, obs, instr_L, instr_R) -> Tuple[np.ndarray, np.ndarray]:
        """Per-head class distributions; each row sums to one."""
        with no_grad():
            l_l, l_r, _ = self.logits(obs, instr_L, instr_R)
        return special.softmax(l_l.data, axis=-1), special.softmax(l_r.data, axis=-1)

    def select(self, obs, instr_L, instr_R) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Argmax skill tokens per arm

        Returns:
        --------
        (u_L, u_R, z_H): skill-token indices of shape (B,) and the context (B, d_h)
        """
        with no_grad():
            l_l, l_r, z = self.logits(obs, instr_L, instr_R)
        u_l = LEFT_SKILL_OF[np.argmax(l_l.data, axis=-1)]
        u_r = RIGHT_SKILL_OF[np.argmax(l_r.data, axis=-1)]
        return u_l, u_r, z.data.copy()
