"""
Run configuration

Every tunable constant of the simulator, data generation, policies, training,
sampling and evaluation lives here, grouped by module. Files are strict JSON:
unknown keys are rejected with the dotted path of the offending key.
"""
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from skilllab.errors import ConfigError

SEED_ENV_VAR = "SKILLLAB_SEED"


@dataclass(frozen=True)
class WorldConfig:
    v_max: float = 0.05            # workspace units per step at |action| = 1
    grasp_radius: float = 0.05     # r_g
    tilt_threshold: float = 0.1    # delta_tilt
    k_p: float = 4.0
    sigma_action: float = 0.01     # sigma_a
    sigma_idle: float = 0.002
    coupling_gain: float = 2.0     # c
    sync_jitter: float = 0.5       # shared speed multiplier spread of dual experts
    shake_jitter: float = 0.6
    dual_speed_cap: float = 0.6
    horizon_single: int = 200
    horizon_long: int = 600
    target_tolerance: float = 0.05
    place_tolerance: float = 0.02
    orbit_radius: float = 0.12
    orbit_band: float = 0.03
    orbit_lead: float = 0.8        # radians the orbit waypoint runs ahead
    press_steps: int = 20
    shake_reversals: int = 6
    lift_height: float = 0.8


@dataclass(frozen=True)
class DataConfig:
    episodes_single: int = 200
    episodes_dual: int = 100
    max_failure_rate: float = 0.2
    warn_failure_rate: float = 0.05
    format_version: int = 1


@dataclass(frozen=True)
class PolicyConfig:
    d_h: int = 64
    d_z: int = 64
    d_e: int = 128
    n_heads: int = 4
    token_dim: int = 16
    encoder_hidden: Tuple[int, ...] = (128, 128)
    expert_hidden: int = 128
    time_features: int = 8
    estimator_tokens: int = 4
    estimator_heads: int = 2
    estimator_dim: int = 32
    stream_obs: str = "full"       # "full" or "own"
    init_scale: float = 1.0


@dataclass(frozen=True)
class LossWeights:
    coop: float = 1.0
    prior: float = 0.5
    sticky: float = 0.1
    sup: float = 0.01
    disc: float = 1.0


@dataclass(frozen=True)
class LearnConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 64
    steps: int = 3000
    tau_beta: Tuple[float, float] = (1.0, 1.0)
    weights: LossWeights = field(default_factory=LossWeights)
    discrete_gate: bool = True
    teacher_forced_gate: bool = True
    onoff_expert_grads: bool = True
    onoff_weight: float = 0.5
    grad_clip: float = 1.0
    log_every: int = 50
    selector_lr: float = 3e-3
    selector_steps: int = 2000
    selector_accuracy: float = 0.99
    selector_holdout: float = 0.1
    finetune_steps: int = 600


@dataclass(frozen=True)
class SamplerConfig:
    n_flow_steps: int = 10
    gate_threshold: float = 0.5


@dataclass(frozen=True)
class EvalConfig:
    n_trials: int = 50
    mi_bins: int = 4
    mi_samples: int = 1600
    mi_shuffles: int = 10
    support_samples: int = 1000
    support_tolerance: float = 0.25
    continual_k: Tuple[int, ...] = (0, 5, 10, 20, 30)
    schedule: str = "parallel"


@dataclass(frozen=True)
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    data: DataConfig = field(default_factory=DataConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    learn: LearnConfig = field(default_factory=LearnConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    out_dir: str = "output"

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        return _build(cls, data, prefix="")

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        if not os.path.exists(path):
            raise ConfigError(f"config file '{path}' not found")
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file '{path}' is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file '{path}' must hold a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _build(cls, data: Dict[str, Any], prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"'{prefix or 'config'}' must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown config key '{prefix}{unknown[0]}'")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, prefix=f"{prefix}{name}.")
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"'{prefix}{name}' must be a list")
            kwargs[name] = tuple(value)
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{prefix}{name}' must be true or false")
            kwargs[name] = value
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"'{prefix}{name}' must be a number")
            kwargs[name] = type(default)(value) if isinstance(default, float) else value
        else:
            kwargs[name] = value
    cfg = cls(**kwargs)
    _validate(cfg, prefix)
    return cfg


def build_section(cls, data: Dict[str, Any], prefix: str = ""):
    """Strictly build one config section (e.g. PolicyConfig from a checkpoint)."""
    return _build(cls, data, prefix)


def _validate(cfg, prefix: str) -> None:
    if isinstance(cfg, LossWeights):
        for f in dataclasses.fields(cfg):
            value = getattr(cfg, f.name)
            if not (value >= 0 and value == value and value != float('inf')):
                raise ConfigError(f"loss weight '{prefix}{f.name}' must be finite and >= 0")
    if isinstance(cfg, PolicyConfig):
        if cfg.stream_obs not in ("full", "own"):
            raise ConfigError(f"'{prefix}stream_obs' must be 'full' or 'own'")
        if cfg.d_e % cfg.n_heads:
            raise ConfigError(f"'{prefix}d_e' must be divisible by n_heads")
        if cfg.estimator_dim % cfg.estimator_heads:
            raise ConfigError(f"'{prefix}estimator_dim' must be divisible by estimator_heads")
        if cfg.d_h % cfg.estimator_tokens:
            raise ConfigError(f"'{prefix}d_h' must be divisible by estimator_tokens")
    if isinstance(cfg, EvalConfig):
        if cfg.schedule not in ("parallel", "sequential"):
            raise ConfigError(f"'{prefix}schedule' must be 'parallel' or 'sequential'")


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def config_hash(cfg: RunConfig) -> str:
    """SHA-256 of the canonical JSON form of the configuration."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def resolve_seed(cfg: RunConfig, cli_seed: Optional[int] = None) -> RunConfig:
    """
    Apply seed overrides: the SKILLLAB_SEED environment variable beats the file,
    an explicit command-line seed beats both.
    """
    seed = cfg.seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            seed = int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got '{env}'") from e
    if cli_seed is not None:
        seed = cli_seed
    return cfg.replace(seed=seed)


def apply_overrides(cfg: RunConfig, overrides: List[str]) -> RunConfig:
    """
    Apply ``section.key=value`` overrides given on the command line.

    Values are parsed as JSON where possible, so ``learn.steps=500`` gives an
    integer and ``policy.stream_obs=own`` a string.
    """
    data = cfg.to_dict()
    for item in overrides:
        if '=' not in item:
            raise ConfigError(f"override '{item}' must look like section.key=value")
        path, raw = item.split('=', 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = data
        keys = path.split('.')
        for key in keys[:-1]:
            if key not in node or not isinstance(node[key], dict):
                raise ConfigError(f"unknown config key '{path}'")
            node = node[key]
        if keys[-1] not in node:
            raise ConfigError(f"unknown config key '{path}'")
        node[keys[-1]] = value
    return RunConfig.from_dict(data)
