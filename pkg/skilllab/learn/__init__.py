"""
Training objectives and loops
"""

from .losses import (
    FlowDraw, draw_flow_noise, flow_matching_loss, bc_on_off, coop_loss, gate_regularizers,
    disc_loss, disc_label, gate_distance, bernoulli_entropy,
)
from .trainer import (
    train_selector, train_policy, continual_finetune, finetune_dataset, training_step,
    combine_losses, selector_accuracy, LOG_COLUMNS,
)
