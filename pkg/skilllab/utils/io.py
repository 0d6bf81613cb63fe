"""
Input/Output utilities: demonstrations, checkpoints, logs and run metadata
"""
import datetime
import json
import logging
import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import skilllab
from skilllab.config import RunConfig, WorldConfig, config_hash
from skilllab.errors import ConfigError, DataError
from skilllab.generate.records import DatasetManifest, Demonstration, StepRecord
from skilllab.world.skills import SkillId, TaskSpec

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CHECKPOINT_VERSION = 1
RESOLVED_CONFIG = 'config.resolved.json'
TIMESTAMPS = 'timestamps.json'
_LINE_KEYS = ('ep', 't', 'obs', 'aL', 'aR', 'uL', 'uR', 'prior')


def _ensure_dir(filename: str) -> None:
    os.makedirs(os.path.dirname(filename) or '.', exist_ok=True)


def _f9(values) -> List[float]:
    """Nine significant digits: lossless for 32-bit floats."""
    return [float(format(float(v), '.9g')) for v in np.asarray(values).reshape(-1)]


def manifest_path(path: str) -> str:
    """``<dir>/<name>.manifest.json`` for ``<dir>/<name>.jsonl``."""
    base = path[:-len('.jsonl')] if path.endswith('.jsonl') else path
    return base + '.manifest.json'


def dataset_name(path: str) -> str:
    base = os.path.basename(path)
    return base[:-len('.jsonl')] if base.endswith('.jsonl') else base


def _episode_entry(ep: int, demo: Demonstration) -> Dict[str, Any]:
    return {
        'ep': ep,
        'task': demo.task.label(),
        'layout_seed': demo.task.layout_seed,
        'horizon': demo.task.horizon,
        'schedule': demo.task.schedule,
        'seed': demo.seed,
        'success': bool(demo.success),
        'n_steps': len(demo.steps),
    }


def _task_from_entry(entry: Dict[str, Any]) -> TaskSpec:
    return TaskSpec.parse(entry['task'], layout_seed=int(entry['layout_seed']),
                          horizon=entry['horizon'], schedule=entry['schedule'])


def save_demos(demos: Sequence[Demonstration], path: str, world: Optional[WorldConfig] = None,
               seeds: Sequence[int] = ()) -> DatasetManifest:
    """
    Save demonstrations as JSON lines plus a sibling manifest

    Parameters:
    -----------
    demos : sequence of Demonstration
        Episodes in file order; their position becomes the episode id
    path : str
        Target ``.jsonl`` file
    world : WorldConfig, optional
        Simulator constants snapshot stored in the manifest
    seeds : sequence of int
        Base seeds used for generation

    Returns:
    --------
    DatasetManifest that was written
    """
    _ensure_dir(path)
    world = world or WorldConfig()
    inventory: Dict[str, int] = {}
    with open(path, 'w', encoding='utf-8') as f:
        for ep, demo in enumerate(demos):
            inventory[demo.task.label()] = inventory.get(demo.task.label(), 0) + 1
            for t, rec in enumerate(demo.steps):
                line = {
                    'ep': ep, 't': t,
                    'obs': _f9(rec.obs), 'aL': _f9(rec.a_L), 'aR': _f9(rec.a_R),
                    'uL': rec.u_L.value, 'uR': rec.u_R.value, 'prior': int(rec.prior),
                }
                f.write(json.dumps(line, separators=(',', ':')) + '\n')
    manifest = DatasetManifest(
        name=dataset_name(path),
        format_version=FORMAT_VERSION,
        inventory=inventory,
        episodes=[_episode_entry(ep, d) for ep, d in enumerate(demos)],
        world=_plain_world(world),
        version=skilllab.__version__,
        seeds=[int(s) for s in seeds],
    )
    with open(manifest_path(path), 'w', encoding='utf-8') as f:
        json.dump(manifest.to_dict(), f, indent=2, sort_keys=True)
    print(f"Data saved to {path}")
    return manifest


def _plain_world(world: WorldConfig) -> Dict[str, Any]:
    return {k: v for k, v in RunConfig(world=world).to_dict()['world'].items()}


def load_manifest(path: str) -> DatasetManifest:
    mpath = manifest_path(path)
    if not os.path.exists(path):
        raise ConfigError(f"dataset '{path}' not found")
    if not os.path.exists(mpath):
        raise DataError(f"manifest '{mpath}' not found")
    try:
        with open(mpath, 'r', encoding='utf-8') as f:
            manifest = DatasetManifest.from_dict(json.load(f))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise DataError(f"manifest '{mpath}' is malformed: {e}") from e
    if manifest.format_version != FORMAT_VERSION:
        raise DataError(f"dataset '{path}' has format version {manifest.format_version}, "
                        f"expected {FORMAT_VERSION}")
    return manifest


def _parse_line(path: str, lineno: int, text: str) -> Dict[str, Any]:
    try:
        rec = json.loads(text)
        missing = [k for k in _LINE_KEYS if k not in rec]
        if missing:
            raise ValueError(f"missing keys {missing}")
        return rec
    except (json.JSONDecodeError, ValueError, TypeError) as e:
        raise DataError(f"{path}:{lineno}: malformed record ({e})") from e


def load_demos(path: str, world: Optional[WorldConfig] = None) -> List[Demonstration]:
    """
    Load demonstrations saved by ``save_demos``

    Raises DataError on a malformed line (naming the line number), a version
    mismatch, a record count that disagrees with the manifest, or, when ``world``
    is given, a constants snapshot that differs from it.
    """
    manifest = load_manifest(path)
    if world is not None and manifest.world != _plain_world(world):
        raise DataError(f"dataset '{path}' was generated with different simulator constants")
    steps: List[List[StepRecord]] = [[] for _ in manifest.episodes]
    with open(path, 'r', encoding='utf-8') as f:
        for lineno, text in enumerate(f, start=1):
            if not text.strip():
                continue
            rec = _parse_line(path, lineno, text)
            ep, t = int(rec['ep']), int(rec['t'])
            if not 0 <= ep < len(steps) or t != len(steps[ep]):
                raise DataError(f"{path}:{lineno}: record (ep={ep}, t={t}) out of sequence")
            try:
                steps[ep].append(StepRecord(
                    obs=np.asarray(rec['obs'], dtype=np.float32),
                    a_L=np.asarray(rec['aL'], dtype=np.float32),
                    a_R=np.asarray(rec['aR'], dtype=np.float32),
                    u_L=SkillId(rec['uL']),
                    u_R=SkillId(rec['uR']),
                    prior=int(rec['prior']),
                ))
            except (ValueError, TypeError) as e:
                raise DataError(f"{path}:{lineno}: malformed record ({e})") from e
    demos = []
    for entry, ep_steps in zip(manifest.episodes, steps):
        if len(ep_steps) != int(entry['n_steps']):
            raise DataError(f"dataset '{path}': episode {entry['ep']} has {len(ep_steps)} steps, "
                            f"manifest says {entry['n_steps']}")
        demos.append(Demonstration(_task_from_entry(entry), ep_steps, seed=int(entry['seed']),
                                   success=bool(entry['success'])))
    print(f"Loaded {len(demos)} episodes from {path}")
    return demos


# ---------------------------------------------------------------------------
# checkpoints

def checkpoint_paths(path: str) -> Tuple[str, str]:
    base = path[:-len('.json')] if path.endswith('.json') else path
    return base + '.json', base + '.bin'


def save_checkpoint(path: str, tensors: Dict[str, np.ndarray], meta: Dict[str, Any]) -> str:
    """
    Write a JSON manifest (names, shapes, byte offsets, metadata) and one blob of
    little-endian float32 values.
    """
    manifest_file, blob_file = checkpoint_paths(path)
    _ensure_dir(manifest_file)
    entries = []
    offset = 0
    with open(blob_file, 'wb') as f:
        for name, value in tensors.items():
            data = np.ascontiguousarray(value, dtype='<f4')
            f.write(data.tobytes())
            entries.append({'name': name, 'shape': list(data.shape), 'offset': offset, 'count': int(data.size)})
            offset += data.nbytes
    with open(manifest_file, 'w', encoding='utf-8') as f:
        json.dump({'format_version': CHECKPOINT_VERSION, 'meta': meta, 'tensors': entries},
                  f, indent=2, sort_keys=True)
    logger.info("checkpoint written to %s", manifest_file)
    return manifest_file


def load_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    manifest_file, blob_file = checkpoint_paths(path)
    if not os.path.exists(manifest_file) or not os.path.exists(blob_file):
        raise ConfigError(f"checkpoint '{path}' not found")
    with open(manifest_file, 'r', encoding='utf-8') as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"checkpoint manifest '{manifest_file}' is malformed: {e}") from e
    if manifest.get('format_version') != CHECKPOINT_VERSION:
        raise DataError(f"checkpoint '{manifest_file}' has an unsupported format version")
    with open(blob_file, 'rb') as f:
        blob = f.read()
    tensors = {}
    for entry in manifest['tensors']:
        end = entry['offset'] + 4 * entry['count']
        if end > len(blob):
            raise DataError(f"checkpoint blob '{blob_file}' is truncated at tensor '{entry['name']}'")
        arr = np.frombuffer(blob, dtype='<f4', count=entry['count'], offset=entry['offset'])
        tensors[entry['name']] = arr.astype(np.float32).reshape(entry['shape'])
    return tensors, manifest['meta']


# ---------------------------------------------------------------------------
# logs and run metadata

def save_table(df: pd.DataFrame, filename: str) -> None:
    _ensure_dir(filename)
    df.to_csv(filename, index=False, float_format='%.9g')
    print(f"Table saved to {filename}")


def write_json(obj: Any, filename: str) -> None:
    _ensure_dir(filename)
    with open(filename, 'w', encoding='utf-8') as f:
        json.dump(obj, f, indent=2, sort_keys=True)


def read_json(filename: str) -> Any:
    if not os.path.exists(filename):
        raise ConfigError(f"'{filename}' not found")
    with open(filename, 'r', encoding='utf-8') as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"'{filename}' is not valid JSON: {e}") from e


def write_resolved_config(cfg: RunConfig, out_dir: str) -> str:
    """Resolved configuration with tool version and hash, next to the artifacts."""
    filename = os.path.join(out_dir, RESOLVED_CONFIG)
    write_json({'config': cfg.to_dict(), 'config_hash': config_hash(cfg),
                'version': skilllab.__version__}, filename)
    return filename


def record_timestamp(out_dir: str, command: str, started: datetime.datetime) -> None:
    """Append wall-clock times to the sidecar; the only non-reproducible file of a run."""
    filename = os.path.join(out_dir, TIMESTAMPS)
    entries = read_json(filename) if os.path.exists(filename) else []
    entries.append({'command': command, 'started': started.isoformat(timespec='seconds'),
                    'finished': datetime.datetime.now().isoformat(timespec='seconds')})
    write_json(entries, filename)


def save_rollouts(rollouts, path: str) -> None:
    """Rollout dump: demonstration line format plus gate columns yhat and alpha."""
    _ensure_dir(path)
    with open(path, 'w', encoding='utf-8') as f:
        for ep, ro in enumerate(rollouts):
            for t in range(ro.steps):
                line = {
                    'ep': ep, 't': t,
                    'obs': _f9(ro.observations[t]), 'aL': _f9(ro.actions_L[t]), 'aR': _f9(ro.actions_R[t]),
                    'uL': ro.tokens[t][0].value, 'uR': ro.tokens[t][1].value, 'prior': int(ro.priors[t]),
                    'yhat': float(format(float(ro.gate.yhat[t]), '.9g')), 'alpha': float(ro.gate.alpha[t]),
                }
                f.write(json.dumps(line, separators=(',', ':')) + '\n')
    print(f"Rollouts saved to {path}")
