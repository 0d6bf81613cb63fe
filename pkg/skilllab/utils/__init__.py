"""
Utility functions for file handling and seeding
"""

from .io import (
    save_demos, load_demos, load_manifest, manifest_path, save_checkpoint, load_checkpoint,
    save_table, write_json, read_json, write_resolved_config, record_timestamp, save_rollouts,
)
from .seeding import make_rng, derive_seed, stable_key
