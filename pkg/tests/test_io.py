import json
import os

import numpy as np
import pytest

from skilllab.config import WorldConfig
from skilllab.errors import ConfigError, DataError
from skilllab.utils.io import (
    checkpoint_paths, load_checkpoint, load_demos, load_manifest, manifest_path, save_checkpoint,
    save_demos,
)


@pytest.fixture
def saved(tmp_path, short_demos):
    path = str(tmp_path / "demos.jsonl")
    save_demos(short_demos, path, seeds=[0, 1])
    return path


def test_round_trip(saved, short_demos):
    loaded = load_demos(saved)
    assert loaded == short_demos


def test_manifest_counts(saved, short_demos):
    manifest = load_manifest(saved)
    assert manifest.name == "demos"
    assert manifest.inventory == {"pair:L1,IDLE": 2, "pair:IDLE,R1": 2, "dual:D1": 2}
    assert manifest.total_steps == sum(len(d) for d in short_demos)
    assert manifest.seeds == [0, 1]


def test_malformed_line_names_line_number(saved):
    with open(saved) as f:
        lines = f.readlines()
    lines[2] = '{"ep": 0, "t": 2, "obs": [1, 2\n'
    with open(saved, "w") as f:
        f.writelines(lines)
    with pytest.raises(DataError, match=r":3:"):
        load_demos(saved)


def test_count_mismatch(saved):
    with open(saved) as f:
        lines = f.readlines()
    with open(saved, "w") as f:
        f.writelines(lines[:-1])
    with pytest.raises(DataError, match="manifest says"):
        load_demos(saved)


def test_version_mismatch(saved):
    mpath = manifest_path(saved)
    with open(mpath) as f:
        data = json.load(f)
    data["format_version"] = 99
    with open(mpath, "w") as f:
        json.dump(data, f)
    with pytest.raises(DataError, match="format version"):
        load_demos(saved)


def test_world_mismatch(saved):
    with pytest.raises(DataError, match="simulator constants"):
        load_demos(saved, world=WorldConfig(v_max=0.1))
    assert len(load_demos(saved, world=WorldConfig())) == 6


def test_missing_dataset(tmp_path):
    with pytest.raises(ConfigError):
        load_demos(str(tmp_path / "absent.jsonl"))


def test_checkpoint_round_trip(tmp_path):
    tensors = {"w": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.array([0.5], np.float32)}
    save_checkpoint(str(tmp_path / "model.json"), tensors, {"variant": "skillvla"})
    loaded, meta = load_checkpoint(str(tmp_path / "model.json"))
    assert meta == {"variant": "skillvla"}
    assert set(loaded) == {"w", "b"}
    np.testing.assert_array_equal(loaded["w"], tensors["w"])


def test_truncated_blob(tmp_path):
    path = str(tmp_path / "model.json")
    save_checkpoint(path, {"w": np.ones(8, np.float32)}, {})
    _, blob = checkpoint_paths(path)
    with open(blob, "r+b") as f:
        f.truncate(12)
    with pytest.raises(DataError, match="truncated"):
        load_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(ConfigError):
        load_checkpoint(str(tmp_path / "nothing.json"))
    assert not os.path.exists(tmp_path / "nothing.bin")
