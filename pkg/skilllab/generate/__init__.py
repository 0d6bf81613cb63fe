"""
Demonstration generation and labelling
"""

from .records import StepRecord, Demonstration, DatasetManifest
from .generator import (
    label_prior, generate, generate_all, run_expert_episode, episodes_for, INVENTORY_GROUPS,
)
from .dataset import Dataset, Batch
