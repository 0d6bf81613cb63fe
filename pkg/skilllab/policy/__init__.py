"""
Skill selector and the four bimanual policy architectures
"""

from .layers import Linear, MLP, LayerNorm, Embedding, CrossAttention
from .selector import (
    HighLevelSelector, N_TOKENS, LEFT_CLASS_OF, RIGHT_CLASS_OF, LEFT_SKILL_OF, RIGHT_SKILL_OF,
    one_hot, head_labels,
)
from .model import PolicyModel, Variant, Latents, ACTION_DIM
