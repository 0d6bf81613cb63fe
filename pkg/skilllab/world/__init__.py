"""
Planar dual-arm simulator, skill library and scripted experts
"""

from .skills import (
    Arm, SkillId, LongTask, Stage, TaskSpec, stages, parse_skill,
    SKILLS, SKILL_INDEX, K_L, K_R, K_D, LEFT_CLASSES, RIGHT_CLASSES,
)
from .sim import (
    ArmAction, ObjectState, Trackers, WorldState, OBJECT_IDS, OBS_DIM,
    reset, step, observe, score, max_score, progress_rate, is_success,
    current_stage, skill_holds, drop_is_terminal, proprio, other_arm_mask,
)
from .experts import expert_action, expert_joint_action
