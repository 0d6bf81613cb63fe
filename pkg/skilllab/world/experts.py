"""
Scripted expert controllers

Every skill is a stateless waypoint controller: the waypoint is read off the
current state, the command is k_p times the offset, scaled down so no component
exceeds one. Single-arm experts draw independent Gaussian noise per arm. Dual
experts share a synchronisation multiplier between the arms and add a coupling
correction toward the partner, so their joint actions carry mutual information
at a fixed state.
"""
import math
from typing import Optional, Tuple

import numpy as np

from skilllab.config import WorldConfig
from skilllab.errors import ConfigError
from skilllab.world.sim import (
    BAR_HALF, BAR_LIFT_Y, BAR_SHAKE_Y, DRAWER_CLOSED_Y, DRAWER_OPEN_Y, DRAWER_RAIL, HOME,
    ArmAction, WorldState, dist, skill_holds, stow_spot, current_stage,
)
from skilllab.world.skills import Arm, SkillId, Stage, TaskSpec

OPEN, CLOSED = -1.0, 1.0
SYNC_CLIP = 1.5

_PICK = {SkillId.L1: "A", SkillId.L2: "B", SkillId.L3: "C"}
_BAR_SKILLS = (SkillId.D1, SkillId.D2, SkillId.D3, SkillId.D4)
_HANDLES = {
    "bar": {Arm.LEFT: "BAR_L", Arm.RIGHT: "BAR_R"},
    "drawer": {Arm.LEFT: "DRW_L", Arm.RIGHT: "DRW_R"},
}
_SPAN = {"bar": 2.0 * BAR_HALF, "drawer": DRAWER_RAIL["DRW_R"] - DRAWER_RAIL["DRW_L"]}


def _toward(ee, goal, k_p: float, cap: float = 1.0) -> np.ndarray:
    v = k_p * (np.asarray(goal, dtype=np.float64) - np.asarray(ee, dtype=np.float64))
    top = float(np.max(np.abs(v)))
    if top > cap:
        v = v * (cap / top)
    return v


def _cmd(v, grip: float) -> Tuple[float, float, float]:
    return float(v[0]), float(v[1]), grip


def _home(state: WorldState, arm: Arm, cfg: WorldConfig):
    return _cmd(_toward(state.ee(arm), HOME[arm], cfg.k_p), OPEN)


# ---------------------------------------------------------------------------
# single-arm skills

def _carry(state: WorldState, arm: Arm, obj_id: str, dest, done: bool, cfg: WorldConfig):
    """Approach with an open gripper, grasp, carry to dest, release, go home."""
    ee = state.ee(arm)
    obj = state.obj(obj_id)
    held = state.holding(arm)
    if held is not None and held.id != obj_id:
        return 0.0, 0.0, OPEN
    if obj is None or done:
        return _home(state, arm, cfg)
    if obj.held_by is arm:
        if dist(ee, dest) <= cfg.place_tolerance:
            return 0.0, 0.0, OPEN
        return _cmd(_toward(ee, dest, cfg.k_p), CLOSED)
    if obj.held_by is not None:
        return 0.0, 0.0, OPEN
    grip = CLOSED if dist(ee, obj.position) <= 0.5 * cfg.grasp_radius else OPEN
    return _cmd(_toward(ee, obj.position, cfg.k_p), grip)


def _pick(state: WorldState, skill: SkillId, cfg: WorldConfig):
    ee = state.ee(Arm.LEFT)
    obj = state.obj(_PICK[skill])
    if obj is None:
        return _home(state, Arm.LEFT, cfg)
    if obj.held_by is Arm.LEFT:
        return _cmd(_toward(ee, (ee[0], cfg.lift_height), cfg.k_p), CLOSED)
    held = state.holding(Arm.LEFT)
    if held is not None:
        return 0.0, 0.0, OPEN
    grip = CLOSED if dist(ee, obj.position) <= 0.5 * cfg.grasp_radius else OPEN
    return _cmd(_toward(ee, obj.position, cfg.k_p), grip)


def _orbit(state: WorldState, cfg: WorldConfig):
    ee = state.ee(Arm.RIGHT)
    target = state.obj("TARGET").position
    dx, dy = ee[0] - target[0], ee[1] - target[1]
    r = math.hypot(dx, dy)
    theta = math.atan2(dy, dx) if r > 1e-9 else -math.pi / 2.0
    if abs(r - cfg.orbit_radius) > cfg.orbit_band:
        goal = (target[0] + cfg.orbit_radius * math.cos(theta),
                target[1] + cfg.orbit_radius * math.sin(theta))
    else:
        ahead = theta + cfg.orbit_lead
        goal = (target[0] + cfg.orbit_radius * math.cos(ahead),
                target[1] + cfg.orbit_radius * math.sin(ahead))
    return _cmd(_toward(ee, goal, cfg.k_p), OPEN)


def _single(state: WorldState, skill: SkillId, cfg: WorldConfig):
    if skill in _PICK:
        return _pick(state, skill, cfg)
    if skill in (SkillId.R1, SkillId.R2, SkillId.R3) and state.obj("TARGET") is None:
        return _home(state, Arm.RIGHT, cfg)
    if skill is SkillId.R1:
        return _cmd(_toward(state.right_ee, state.obj("TARGET").position, cfg.k_p), OPEN)
    if skill is SkillId.R2:
        return _orbit(state, cfg)
    if skill is SkillId.R3:
        ee, target = state.right_ee, state.obj("TARGET").position
        grip = CLOSED if dist(ee, target) <= 0.5 * cfg.grasp_radius else OPEN
        return _cmd(_toward(ee, target, cfg.k_p), grip)

    done = skill_holds(state, skill, cfg)
    if skill is SkillId.L4:
        slot = state.obj("SLOT_L")
        return _carry(state, Arm.LEFT, "A", slot.position if slot else HOME[Arm.LEFT], done, cfg)
    if skill is SkillId.R4:
        slot = state.obj("SLOT_R")
        return _carry(state, Arm.RIGHT, "B", slot.position if slot else HOME[Arm.RIGHT], done, cfg)
    drawer_y = state.trackers.drawer_y
    if skill is SkillId.L5:
        return _carry(state, Arm.LEFT, "A", stow_spot("A", drawer_y), done, cfg)
    if skill is SkillId.L6:
        return _carry(state, Arm.LEFT, "B", stow_spot("B", drawer_y), done, cfg)
    if skill is SkillId.R5:
        mark = state.obj("MARK")
        return _carry(state, Arm.RIGHT, "B", mark.position if mark else HOME[Arm.RIGHT], done, cfg)
    raise ConfigError(f"no expert for skill {skill.value}")


# ---------------------------------------------------------------------------
# dual-arm skills

def _dual_goal(state: WorldState, skill: SkillId, arm: Arm):
    """Waypoint of one arm's handle once both arms hold it."""
    ee = state.ee(arm)
    side = -1.0 if arm is Arm.LEFT else 1.0
    mark = state.obj("MARK")
    if skill is SkillId.D1:
        return (ee[0], BAR_LIFT_Y)
    if skill is SkillId.D2:
        return (ee[0], BAR_SHAKE_Y)
    if skill in (SkillId.D3, SkillId.D4):
        return (mark.position[0] + side * BAR_HALF, mark.position[1])
    rail = DRAWER_RAIL[_HANDLES["drawer"][arm]]
    return (rail, DRAWER_OPEN_Y if skill is SkillId.D5 else DRAWER_CLOSED_Y)


def _dual(state: WorldState, skill: SkillId, arm: Arm, shared: np.ndarray, cfg: WorldConfig):
    body = "bar" if skill in _BAR_SKILLS else "drawer"
    own_id, other_id = _HANDLES[body][arm], _HANDLES[body][arm.other]
    own, other = state.obj(own_id), state.obj(other_id)
    ee = state.ee(arm)
    if own is None or other is None:
        return _home(state, arm, cfg)
    if skill in (SkillId.D4, SkillId.D5, SkillId.D6) and skill_holds(state, skill, cfg):
        return _home(state, arm, cfg)

    if own.held_by is not arm:
        held = state.holding(arm)
        if held is not None:
            return 0.0, 0.0, OPEN
        grip = CLOSED if dist(ee, own.position) <= 0.5 * cfg.grasp_radius else OPEN
        return _cmd(_toward(ee, own.position, cfg.k_p), grip)
    if other.held_by is not arm.other:
        return 0.0, 0.0, CLOSED

    sync = 1.0 + cfg.sync_jitter * float(np.clip(shared[1], -SYNC_CLIP, SYNC_CLIP))
    goal = _dual_goal(state, skill, arm)
    if skill is SkillId.D4:
        partner_goal = _dual_goal(state, skill, arm.other)
        if dist(ee, goal) <= cfg.place_tolerance \
                and dist(state.ee(arm.other), partner_goal) <= cfg.place_tolerance:
            return 0.0, 0.0, OPEN
    v = _toward(ee, goal, cfg.k_p, cap=cfg.dual_speed_cap) * sync
    if skill is SkillId.D2 and abs(ee[1] - BAR_SHAKE_Y) <= 0.05:
        side = -1.0 if arm is Arm.LEFT else 1.0
        v[0] = cfg.shake_jitter * float(np.clip(shared[0], -SYNC_CLIP, SYNC_CLIP)) \
            + 0.5 * cfg.k_p * (side * BAR_HALF - ee[0])

    # coupling toward the partner's handle
    other_ee = state.ee(arm.other)
    offset = _SPAN[body] if arm is Arm.LEFT else -_SPAN[body]
    v[0] += cfg.coupling_gain * ((other_ee[0] - offset) - ee[0])
    v[1] += cfg.coupling_gain * (other_ee[1] - ee[1])
    return _cmd(v, CLOSED)


# ---------------------------------------------------------------------------
# public entry points

def _noisy(cmd, noise: np.ndarray, sigma: float) -> ArmAction:
    dx, dy, grip = cmd
    return ArmAction(dx + sigma * float(noise[0]), dy + sigma * float(noise[1]), grip + sigma * float(noise[2]))


def _act(state: WorldState, skill: SkillId, arm: Arm, shared: np.ndarray, noise: np.ndarray,
         cfg: WorldConfig) -> ArmAction:
    if skill is SkillId.IDLE:
        return _noisy((0.0, 0.0, OPEN), noise, cfg.sigma_idle)
    if not skill.is_dual and skill.arm is not arm:
        raise ConfigError(f"skill {skill.value} cannot run on the {arm.name.lower()} arm")
    if skill.is_dual:
        cmd = _dual(state, skill, arm, shared, cfg)
    else:
        cmd = _single(state, skill, cfg)
    return _noisy(cmd, noise, cfg.sigma_action)


def expert_action(state: WorldState, skill: SkillId, arm: Arm, rng: np.random.Generator,
                  cfg: WorldConfig = WorldConfig(), shared: Optional[np.ndarray] = None) -> ArmAction:
    """
    Action of the scripted expert for one arm.

    Parameters:
    -----------
    state : WorldState
        Current state
    skill : SkillId
        Skill to execute; must belong to the arm unless it is IDLE or dual
    arm : Arm
        Which arm is acting
    rng : numpy.random.Generator
        Noise source
    cfg : WorldConfig
        Gains and noise levels
    shared : array of shape (2,), optional
        Synchronisation draw shared with the partner arm in dual skills;
        drawn from rng when omitted

    Returns:
    --------
    ArmAction (unclamped; ``step`` clamps)
    """
    if shared is None:
        shared = rng.standard_normal(2)
    return _act(state, skill, arm, shared, rng.standard_normal(3), cfg)


def expert_joint_action(state: WorldState, task: TaskSpec, rng: np.random.Generator,
                        cfg: WorldConfig = WorldConfig()) -> Tuple[ArmAction, ArmAction, Stage]:
    """Both arms' expert actions for the current stage of a task, plus that stage."""
    _, stage = current_stage(state, task, cfg)
    shared = rng.standard_normal(2)
    noise_l = rng.standard_normal(3)
    noise_r = rng.standard_normal(3)
    a_l = _act(state, stage.left, Arm.LEFT, shared, noise_l, cfg)
    a_r = _act(state, stage.right, Arm.RIGHT, shared, noise_r, cfg)
    return a_l, a_r, stage
