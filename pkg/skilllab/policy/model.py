"""
Policy architectures

SKILLVLA: per-arm streams z_i = f_i(x, u_i), per-arm flow experts that exchange a
gated cross-attention message, and a cooperation estimator reading the frozen
selector's context. The three baselines entangle the arms in different places:

MONO    one stream over both tokens and one joint expert over the 6-dim action
SHARED  one stream over both tokens feeding two expert heads, no messages
TWIN    two streams and two experts with the message always on, no estimator
"""
import dataclasses
import logging
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from skilllab.config import PolicyConfig, build_section
from skilllab.diffcore import (
    ParameterSet, Tensor, add, concat, dense, glorot, mul, multihead_attention, reshape, sigmoid,
    sinusoidal_features, slice_, tanh,
)
from skilllab.errors import ConfigError, VariantError
from skilllab.policy.layers import CrossAttention, Embedding, LayerNorm, Linear, MLP
from skilllab.policy.selector import N_TOKENS, HighLevelSelector
from skilllab.utils.io import load_checkpoint, save_checkpoint
from skilllab.world.sim import OBS_DIM, other_arm_mask, proprio
from skilllab.world.skills import Arm, SkillId

logger = logging.getLogger(__name__)

ACTION_DIM = 3


class Variant(str, Enum):
    SKILLVLA = "SKILLVLA"
    MONO = "MONO"
    SHARED = "SHARED"
    TWIN = "TWIN"

    @classmethod
    def parse(cls, name: str) -> "Variant":
        try:
            return cls(str(getattr(name, 'value', name)).upper())
        except ValueError as e:
            raise ConfigError(f"unknown architecture '{name}'") from e


class _Expert:
    """
    Token-based flow expert: [latent, proprioception, noisy action + time] tokens,
    a residual feed-forward block, optional incoming message, flatten, MLP head.
    """

    def __init__(self, params: ParameterSet, name: str, cfg: PolicyConfig, d_latent: int,
                 proprio_dims: Sequence[int], action_dim: int, rng: np.random.Generator):
        d_e, scale = cfg.d_e, cfg.init_scale
        self.proj_z = Linear(params, f"{name}.proj_z", d_latent, d_e, rng, scale)
        self.proj_p = [Linear(params, f"{name}.proj_p{i}", d, d_e, rng, scale) for i, d in enumerate(proprio_dims)]
        self.proj_a = Linear(params, f"{name}.proj_a", action_dim + cfg.time_features, d_e, rng, scale)
        self.n_tokens = 2 + len(proprio_dims)
        self.pos = params.add(f"{name}.pos", 0.02 * rng.standard_normal((self.n_tokens, d_e)).astype(np.float32))
        self.ln = LayerNorm(params, f"{name}.ln", d_e)
        self.ffn = MLP(params, f"{name}.ffn", d_e, [cfg.expert_hidden], d_e, rng, scale)
        self.head = MLP(params, f"{name}.head", self.n_tokens * d_e, [cfg.expert_hidden], action_dim, rng, scale)
        self.d_e = d_e

    def tokens(self, z: Tensor, props: Sequence[np.ndarray], a_tau: Tensor, tfeat: np.ndarray) -> Tensor:
        b = a_tau.shape[0]
        parts = [self.proj_z(z)] + [p(Tensor(x)) for p, x in zip(self.proj_p, props)]
        parts.append(self.proj_a(concat([a_tau, Tensor(tfeat)], axis=-1)))
        h0 = add(concat([reshape(t, (b, 1, self.d_e)) for t in parts], axis=1), self.pos)
        return add(h0, self.ffn(self.ln(h0)))

    def output(self, h: Tensor) -> Tensor:
        b = h.shape[0]
        return self.head(reshape(h, (b, self.n_tokens * self.d_e)))

    @staticmethod
    def count(cfg: PolicyConfig, d_latent: int, proprio_dims: Sequence[int], action_dim: int) -> int:
        d_e = cfg.d_e
        n_tokens = 2 + len(proprio_dims)
        return (Linear.count(d_latent, d_e) + sum(Linear.count(d, d_e) for d in proprio_dims)
                + Linear.count(action_dim + cfg.time_features, d_e) + n_tokens * d_e
                + LayerNorm.count(d_e) + MLP.count(d_e, [cfg.expert_hidden], d_e)
                + MLP.count(n_tokens * d_e, [cfg.expert_hidden], action_dim))


class _Estimator:
    """A learned query attending over z_H split into tokens, then a logit."""

    def __init__(self, params: ParameterSet, name: str, cfg: PolicyConfig, rng: np.random.Generator):
        self.n_tok = cfg.estimator_tokens
        self.d_tok = cfg.d_h // cfg.estimator_tokens
        d = cfg.estimator_dim
        self.proj = Linear(params, f"{name}.proj", self.d_tok, d, rng, cfg.init_scale)
        self.query = params.add(f"{name}.query", 0.5 * rng.standard_normal((1, 1, d)).astype(np.float32))
        self.wk = params.add(f"{name}.wk", glorot(rng, d, d, cfg.init_scale))
        self.wv = params.add(f"{name}.wv", glorot(rng, d, d, cfg.init_scale))
        self.out = Linear(params, f"{name}.out", d, d, rng, cfg.init_scale)
        self.logit = Linear(params, f"{name}.logit", d, 1, rng, cfg.init_scale)
        self.n_heads = cfg.estimator_heads
        self.d = d

    def __call__(self, z_h: np.ndarray) -> Tensor:
        z_h = np.atleast_2d(np.asarray(z_h, dtype=np.float32))
        b = z_h.shape[0]
        toks = tanh(self.proj(Tensor(z_h.reshape(b, self.n_tok, self.d_tok))))
        q = mul(Tensor(np.ones((b, 1, 1), dtype=np.float32)), self.query)
        att = multihead_attention(q, dense(toks, self.wk), dense(toks, self.wv), self.n_heads,
                                  self.out.w, self.out.b)
        return reshape(self.logit(tanh(reshape(att, (b, self.d)))), (b,))

    @staticmethod
    def count(cfg: PolicyConfig) -> int:
        d = cfg.estimator_dim
        return (Linear.count(cfg.d_h // cfg.estimator_tokens, d) + d + 2 * d * d
                + Linear.count(d, d) + Linear.count(d, 1))


class Latents:
    """Stream outputs: (z_L, z_R) for factorized variants, z alone otherwise."""

    def __init__(self, z_L: Tensor, z_R: Optional[Tensor] = None):
        self.z_L = z_L
        self.z_R = z_R

    @property
    def shared(self) -> bool:
        return self.z_R is None

    @property
    def z(self) -> Tensor:
        return self.z_L


class PolicyModel:
    """
    One of the four architecture variants

    Parameters:
    -----------
    variant : Variant or str
        SKILLVLA, MONO, SHARED or TWIN
    cfg : PolicyConfig
        Widths and the stream observation mode
    seed : int
        Initialisation seed
    selector : HighLevelSelector, optional
        Frozen selector (SKILLVLA); provides z_H and the skill tokens at inference
    continuous_gate : bool
        Use the estimator output directly instead of binarising it at inference
    """

    def __init__(self, variant, cfg: PolicyConfig = PolicyConfig(), seed: int = 0,
                 selector: Optional[HighLevelSelector] = None, continuous_gate: bool = False):
        self.variant = Variant.parse(variant)
        self.cfg = cfg
        self.seed = seed
        self.selector = selector
        self.continuous_gate = continuous_gate
        self.skills: List[SkillId] = []
        self.params = ParameterSet()
        rng = np.random.default_rng([seed, 202])
        p, v = self.params, self.variant
        s = cfg.init_scale
        if v in (Variant.SKILLVLA, Variant.TWIN):
            self.emb = {arm: Embedding(p, f"stream_{arm.value}.emb", N_TOKENS, cfg.token_dim, rng) for arm in Arm}
            self.streams = {arm: MLP(p, f"stream_{arm.value}.mlp", OBS_DIM + cfg.token_dim, cfg.encoder_hidden,
                                     cfg.d_z, rng, s) for arm in Arm}
        else:
            self.emb = {arm: Embedding(p, f"stream.emb_{arm.value}", N_TOKENS, cfg.token_dim, rng) for arm in Arm}
            self.streams = {None: MLP(p, "stream.mlp", OBS_DIM + 2 * cfg.token_dim, cfg.encoder_hidden,
                                      cfg.d_z, rng, s)}
        if v is Variant.MONO:
            self.experts = {None: _Expert(p, "expert", cfg, cfg.d_z, [ACTION_DIM, ACTION_DIM], 2 * ACTION_DIM, rng)}
        else:
            self.experts = {arm: _Expert(p, f"expert_{arm.value}", cfg, cfg.d_z, [ACTION_DIM], ACTION_DIM, rng)
                            for arm in Arm}
        self.cross = {}
        if v in (Variant.SKILLVLA, Variant.TWIN):
            self.cross = {arm: CrossAttention(p, f"expert_{arm.value}.cross", cfg.d_e, cfg.n_heads, rng, s)
                          for arm in Arm}
        self.estimator = _Estimator(p, "estimator", cfg, rng) if v is Variant.SKILLVLA else None

    # ------------------------------------------------------------------
    @property
    def has_gate(self) -> bool:
        return self.variant is Variant.SKILLVLA

    @property
    def factorized(self) -> bool:
        return self.variant in (Variant.SKILLVLA, Variant.TWIN)

    def _stream_obs(self, obs: np.ndarray, arm: Optional[Arm]) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float32))
        if self.cfg.stream_obs == "own" and arm is not None:
            obs = obs * other_arm_mask(arm).astype(np.float32)
        return obs

    def encode(self, obs: np.ndarray, u_L: np.ndarray, u_R: np.ndarray) -> Latents:
        """Per-arm latents (factorized variants) or one shared latent, each (B, d_z)."""
        u_L, u_R = np.asarray(u_L, dtype=np.int64), np.asarray(u_R, dtype=np.int64)
        if self.factorized:
            z = {}
            for arm, u in ((Arm.LEFT, u_L), (Arm.RIGHT, u_R)):
                x = concat([Tensor(self._stream_obs(obs, arm)), self.emb[arm](u)], axis=-1)
                z[arm] = tanh(self.streams[arm](x))
            return Latents(z[Arm.LEFT], z[Arm.RIGHT])
        x = concat([Tensor(self._stream_obs(obs, None)), self.emb[Arm.LEFT](u_L), self.emb[Arm.RIGHT](u_R)], axis=-1)
        return Latents(tanh(self.streams[None](x)))

    def velocity(self, a_tau: Tensor, tau: np.ndarray, latents: Latents, obs: np.ndarray,
                 gate: Optional[np.ndarray] = None) -> Tensor:
        """
        Flow velocity for the joint action [a_L, a_R], shape (B, 6)

        ``gate`` is the per-sample message multiplier in [0, 1]; it is ignored by
        MONO and SHARED and fixed to one for TWIN. Messages are skipped entirely
        when every gate value is zero.
        """
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float32))
        b = obs.shape[0]
        tfeat = sinusoidal_features(np.broadcast_to(np.asarray(tau, dtype=np.float32), (b,)),
                                    self.cfg.time_features)
        props = {arm: proprio(obs, arm) for arm in Arm}
        if self.variant is Variant.MONO:
            expert = self.experts[None]
            h = expert.tokens(latents.z, [props[Arm.LEFT], props[Arm.RIGHT]], a_tau, tfeat)
            return expert.output(h)

        a_parts = {Arm.LEFT: slice_(a_tau, (slice(None), slice(0, ACTION_DIM))),
                   Arm.RIGHT: slice_(a_tau, (slice(None), slice(ACTION_DIM, 2 * ACTION_DIM)))}
        z = {Arm.LEFT: latents.z_L if latents.z_R is not None else latents.z,
             Arm.RIGHT: latents.z_R if latents.z_R is not None else latents.z}
        h = {arm: self.experts[arm].tokens(z[arm], [props[arm]], a_parts[arm], tfeat) for arm in Arm}
        if self.variant is Variant.TWIN:
            gate = np.ones(b, dtype=np.float32)
        if self.cross and gate is not None and np.any(np.asarray(gate) != 0):
            g = Tensor(np.broadcast_to(np.asarray(gate, dtype=np.float32), (b,)).reshape(b, 1, 1))
            messages = {arm: self.cross[arm](h[arm], h[arm.other]) for arm in Arm}
            h = {arm: add(h[arm], mul(g, messages[arm])) for arm in Arm}
        return concat([self.experts[arm].output(h[arm]) for arm in Arm], axis=-1)

    def expert_velocity(self, a_tau: Tensor, tau, latents: Latents, obs, gate=None) -> Tuple[Tensor, Tensor]:
        """(v_L, v_R), each (B, 3); for MONO these are the blocks of the joint output."""
        v = self.velocity(a_tau, tau, latents, obs, gate)
        return (slice_(v, (slice(None), slice(0, ACTION_DIM))),
                slice_(v, (slice(None), slice(ACTION_DIM, 2 * ACTION_DIM))))

    def estimate_logit(self, z_h: np.ndarray) -> Tensor:
        if self.estimator is None:
            raise VariantError(f"{self.variant.value} has no cooperation estimator")
        return self.estimator(z_h)

    def estimate_coop(self, z_h: np.ndarray) -> Tensor:
        """Probability of enabling communication, shape (B,), strictly inside (0, 1)."""
        return sigmoid(self.estimate_logit(z_h))

    def context(self, obs: np.ndarray, instr_L: np.ndarray, instr_R: np.ndarray) -> np.ndarray:
        if self.selector is None:
            raise VariantError(f"{self.variant.value} model has no selector")
        return self.selector.context(obs, instr_L, instr_R)

    def require_selector(self) -> HighLevelSelector:
        if self.selector is None or not self.selector.trained or not self.selector.frozen:
            raise VariantError("a trained and frozen selector is required")
        return self.selector

    # ------------------------------------------------------------------
    def parameter_counts(self) -> Dict[str, int]:
        counts = {
            'streams': self.params.count("stream"),
            'experts': self.params.count("expert"),
            'estimator': self.params.count("estimator"),
        }
        counts['total'] = self.params.count()
        if self.selector is not None:
            counts['selector'] = self.selector.params.count()
        return counts

    def expected_counts(self) -> Dict[str, int]:
        """Closed-form parameter counts of the declared architecture."""
        cfg = self.cfg
        emb = Embedding.count(N_TOKENS, cfg.token_dim)
        if self.factorized:
            streams = 2 * (emb + MLP.count(OBS_DIM + cfg.token_dim, cfg.encoder_hidden, cfg.d_z))
        else:
            streams = 2 * emb + MLP.count(OBS_DIM + 2 * cfg.token_dim, cfg.encoder_hidden, cfg.d_z)
        if self.variant is Variant.MONO:
            experts = _Expert.count(cfg, cfg.d_z, [ACTION_DIM, ACTION_DIM], 2 * ACTION_DIM)
        else:
            experts = 2 * _Expert.count(cfg, cfg.d_z, [ACTION_DIM], ACTION_DIM)
        if self.factorized:
            experts += 2 * CrossAttention.count(cfg.d_e)
        estimator = _Estimator.count(cfg) if self.has_gate else 0
        return {'streams': streams, 'experts': experts, 'estimator': estimator,
                'total': streams + experts + estimator}

    def snapshot(self) -> Dict[str, np.ndarray]:
        return self.params.state_dict()

    def restore(self, values: Dict[str, np.ndarray]) -> None:
        self.params.load_state_dict(values)

    def save(self, path: str, config_hash: str = "") -> str:
        """Checkpoint with variant tag, config hash, skill inventory and selector."""
        tensors = {f"policy.{n}": t.data for n, t in self.params.items()}
        if self.selector is not None:
            tensors.update({f"sel.{n}": t.data for n, t in self.selector.params.items()})
        meta = {
            'variant': self.variant.value,
            'policy': _plain(self.cfg),
            'seed': self.seed,
            'config_hash': config_hash,
            'skills': [s.value for s in self.skills],
            'continuous_gate': self.continuous_gate,
            'selector': self.selector is not None,
            'selector_trained': bool(self.selector is not None and self.selector.trained),
        }
        return save_checkpoint(path, tensors, meta)

    @classmethod
    def load(cls, path: str, variant=None) -> "PolicyModel":
        tensors, meta = load_checkpoint(path)
        found = Variant.parse(meta['variant'])
        if variant is not None and Variant.parse(variant) is not found:
            raise VariantError(f"checkpoint '{path}' holds a {found.value} model, expected {Variant.parse(variant).value}")
        cfg = build_section(PolicyConfig, meta['policy'], prefix="policy.")
        selector = None
        if meta.get('selector'):
            selector = HighLevelSelector(cfg, seed=meta.get('seed', 0))
            selector.params.load_state_dict(tensors, prefix="sel.")
            selector.trained = bool(meta.get('selector_trained'))
            selector.freeze()
        model = cls(found, cfg, seed=meta.get('seed', 0), selector=selector,
                    continuous_gate=bool(meta.get('continuous_gate', False)))
        model.params.load_state_dict(tensors, prefix="policy.")
        model.skills = [SkillId(s) for s in meta.get('skills', [])]
        logger.info("loaded %s checkpoint from %s", found.value, path)
        return model

    def copy(self) -> "PolicyModel":
        clone = PolicyModel(self.variant, self.cfg, self.seed, self.selector, self.continuous_gate)
        clone.restore(self.snapshot())
        clone.skills = list(self.skills)
        return clone


def _plain(cfg: PolicyConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(cfg).items()}
