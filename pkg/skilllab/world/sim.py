"""
Planar dual-arm simulator

Two point end-effectors with velocity control move in the box x in [-1, 1],
y in [0, 1]. Grippers attach free objects within the grasp radius, held objects
follow their end-effector, and two-handle bodies (the bar and the drawer) couple
the arms: a bar whose handles tilt or stretch beyond the threshold is dropped, a
drawer handle pulled off its rail slips free.

All functions are pure: ``step`` returns a new state and never mutates its input.
"""
import math
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np

from skilllab.config import WorldConfig
from skilllab.errors import ConfigError
from skilllab.world.skills import Arm, LongTask, SkillId, Stage, TaskSpec, SKILL_SCENE, stages

Vec = Tuple[float, float]

X_RANGE = (-1.0, 1.0)
Y_RANGE = (0.0, 1.0)

OBJECT_IDS: Tuple[str, ...] = (
    "A", "B", "C", "TARGET", "MARK",
    "BAR_L", "BAR_R", "SLOT_L", "SLOT_R", "DRW_L", "DRW_R",
)
OBJECT_KINDS = {
    "A": "pickable", "B": "pickable", "C": "pickable",
    "TARGET": "target", "MARK": "target",
    "BAR_L": "bar", "BAR_R": "bar",
    "SLOT_L": "rack-slot", "SLOT_R": "rack-slot",
    "DRW_L": "drawer", "DRW_R": "drawer",
}
GRASPABLE = ("pickable", "bar", "drawer")

HOME = {Arm.LEFT: (-0.5, 0.1), Arm.RIGHT: (0.5, 0.1)}

BAR_REST_Y = 0.2
BAR_HALF = 0.3
BAR_LIFT_Y = 0.7
BAR_SHAKE_Y = 0.55
SLOT_OFFSET = 0.1
DRAWER_RAIL = {"DRW_L": -0.15, "DRW_R": 0.15}
DRAWER_OPEN_Y = 0.25
DRAWER_CLOSED_Y = 0.45
DRAWER_SLACK = 0.03
INTERIOR_DY = 0.12
INTERIOR_HALF = (0.1, 0.06)
STOW_DX = 0.05

# observation layout
OBS_EE = {Arm.LEFT: slice(0, 2), Arm.RIGHT: slice(2, 4)}
OBS_GRIP = {Arm.LEFT: 4, Arm.RIGHT: 5}
OBS_OBJECTS = 6
OBS_HELD = OBS_OBJECTS + 2 * len(OBJECT_IDS)
OBS_DROPPED = OBS_HELD + len(OBJECT_IDS)
OBS_DIM = OBS_DROPPED + 1


@dataclass(frozen=True)
class ObjectState:
    id: str
    kind: str
    position: Vec
    held_by: Optional[Arm] = None


@dataclass(frozen=True)
class Trackers:
    """Progress bookkeeping read by the success predicates."""
    touched: bool = False
    orbit_angle: float = 0.0
    orbit_last: Optional[float] = None
    press_streak: int = 0
    press_best: int = 0
    shake_sign: int = 0
    shake_reversals: int = 0
    drawer_y: float = DRAWER_CLOSED_Y
    drawer_opened: bool = False
    relocated: bool = False
    achieved: FrozenSet[SkillId] = frozenset()


@dataclass(frozen=True)
class WorldState:
    scene: str
    left_ee: Vec
    right_ee: Vec
    left_grip: bool
    right_grip: bool
    objects: Tuple[ObjectState, ...]
    bar_dropped: bool = False
    step_index: int = 0
    trackers: Trackers = field(default_factory=Trackers)

    def ee(self, arm: Arm) -> Vec:
        return self.left_ee if arm is Arm.LEFT else self.right_ee

    def grip(self, arm: Arm) -> bool:
        return self.left_grip if arm is Arm.LEFT else self.right_grip

    def obj(self, obj_id: str) -> Optional[ObjectState]:
        for o in self.objects:
            if o.id == obj_id:
                return o
        return None

    def holding(self, arm: Arm) -> Optional[ObjectState]:
        for o in self.objects:
            if o.held_by is arm:
                return o
        return None


@dataclass(frozen=True)
class ArmAction:
    """Velocity command in units of v_max plus a gripper command (closed iff > 0)."""
    dx: float = 0.0
    dy: float = 0.0
    grip: float = -1.0

    def clamped(self) -> "ArmAction":
        return ArmAction(*(float(np.clip(v, -1.0, 1.0)) for v in (self.dx, self.dy, self.grip)))

    def to_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.grip], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "ArmAction":
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        return cls(float(v[0]), float(v[1]), float(v[2]))


def dist(p: Vec, q: Vec) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def _clamp_point(p) -> Vec:
    return (float(np.clip(p[0], *X_RANGE)), float(np.clip(p[1], *Y_RANGE)))


# ---------------------------------------------------------------------------
# reset

def _uniform(rng, lo, hi) -> float:
    return float(rng.uniform(lo, hi))


def _spread(rng, n, x_range, y_range, min_sep=0.15, tries=1000) -> List[Vec]:
    """Sample n points in a box with pairwise separation at least min_sep."""
    for _ in range(tries):
        pts = [(_uniform(rng, *x_range), _uniform(rng, *y_range)) for _ in range(n)]
        if all(dist(p, q) >= min_sep for i, p in enumerate(pts) for q in pts[i + 1:]):
            return pts
    raise ConfigError("could not place objects with the required separation")


def _obj(obj_id: str, pos: Vec) -> ObjectState:
    return ObjectState(obj_id, OBJECT_KINDS[obj_id], (float(pos[0]), float(pos[1])))


def interior_center(drawer_y: float) -> Vec:
    return (0.0, drawer_y + INTERIOR_DY)


def stow_spot(item_id: str, drawer_y: float) -> Vec:
    cx, cy = interior_center(drawer_y)
    return (cx - STOW_DX, cy) if item_id == "A" else (cx + STOW_DX, cy)


def _scene_tabletop(rng) -> Dict[str, Vec]:
    a, b, c = _spread(rng, 3, (-0.9, -0.2), (0.25, 0.6))
    target = (_uniform(rng, 0.35, 0.75), _uniform(rng, 0.35, 0.65))
    return {"A": a, "B": b, "C": c, "TARGET": target}


def _scene_bar(rng) -> Dict[str, Vec]:
    x0 = _uniform(rng, -0.1, 0.1)
    mark = (_uniform(rng, -0.2, 0.2), _uniform(rng, 0.55, 0.75))
    return {"BAR_L": (x0 - BAR_HALF, BAR_REST_Y), "BAR_R": (x0 + BAR_HALF, BAR_REST_Y), "MARK": mark}


def _scene_tubes(rng) -> Dict[str, Vec]:
    x0 = _uniform(rng, -0.05, 0.05)
    return {
        "A": (_uniform(rng, -0.85, -0.55), _uniform(rng, 0.45, 0.8)),
        "B": (_uniform(rng, 0.55, 0.85), _uniform(rng, 0.45, 0.8)),
        "BAR_L": (x0 - BAR_HALF, BAR_REST_Y), "BAR_R": (x0 + BAR_HALF, BAR_REST_Y),
        "SLOT_L": (x0 - SLOT_OFFSET, BAR_REST_Y), "SLOT_R": (x0 + SLOT_OFFSET, BAR_REST_Y),
        "MARK": (_uniform(rng, -0.1, 0.1), _uniform(rng, 0.6, 0.75)),
    }


def _scene_collect(rng) -> Dict[str, Vec]:
    return {
        "A": (_uniform(rng, -0.85, -0.5), _uniform(rng, 0.55, 0.8)),
        "B": (_uniform(rng, 0.5, 0.85), _uniform(rng, 0.8, 0.92)),
        "DRW_L": (DRAWER_RAIL["DRW_L"], DRAWER_CLOSED_Y),
        "DRW_R": (DRAWER_RAIL["DRW_R"], DRAWER_CLOSED_Y),
        "MARK": (_uniform(rng, 0.05, 0.2), _uniform(rng, 0.72, 0.8)),
    }


_SCENES = {
    "tabletop": _scene_tabletop,
    "bar": _scene_bar,
    "tubes": _scene_tubes,
    "collect": _scene_collect,
}

_EE_Y = {"tabletop": (0.02, 0.15), "bar": (0.02, 0.12), "tubes": (0.02, 0.12), "collect": (0.02, 0.12)}


def _preconditions(positions: Dict[str, Vec], task: TaskSpec) -> Trackers:
    """Put the scene into the state a constituent skill starts from."""
    trackers = Trackers()
    if task.kind == "long":
        return trackers
    skills = set(task.skills)
    if SkillId.D4 in skills:
        positions["A"] = positions["SLOT_L"]
        positions["B"] = positions["SLOT_R"]
    if skills & {SkillId.L5, SkillId.R5, SkillId.L6, SkillId.D6}:
        for h, x in DRAWER_RAIL.items():
            positions[h] = (x, DRAWER_OPEN_Y)
        trackers = replace(trackers, drawer_y=DRAWER_OPEN_Y, drawer_opened=True)
    if SkillId.L6 in skills:
        positions["A"] = stow_spot("A", DRAWER_OPEN_Y)
        positions["B"] = positions["MARK"]
        trackers = replace(trackers, relocated=True)
    if SkillId.D6 in skills:
        positions["A"] = stow_spot("A", DRAWER_OPEN_Y)
        positions["B"] = stow_spot("B", DRAWER_OPEN_Y)
        trackers = replace(trackers, relocated=True)
    return trackers


def reset(task: TaskSpec, seed: int) -> WorldState:
    """
    Sample the initial state of a task

    Parameters:
    -----------
    task : TaskSpec
        Task whose scene and preconditions are instantiated
    seed : int
        Episode seed; the same (task, seed) always gives the same state

    Returns:
    --------
    WorldState with objects placed in the zones the scene requires
    """
    if not isinstance(task, TaskSpec):
        raise ConfigError(f"reset expects a TaskSpec, got {type(task).__name__}")
    scene = task.scene
    if scene not in _SCENES:
        raise ConfigError(f"unknown scene '{scene}'")
    rng = np.random.default_rng([int(seed), int(task.layout_seed)])
    positions = _SCENES[scene](rng)
    y_lo, y_hi = _EE_Y[scene]
    left = (_uniform(rng, -0.8, -0.2), _uniform(rng, y_lo, y_hi))
    right = (_uniform(rng, 0.2, 0.8), _uniform(rng, y_lo, y_hi))
    trackers = _preconditions(positions, task)
    objects = tuple(_obj(i, positions[i]) for i in OBJECT_IDS if i in positions)
    return WorldState(scene, left, right, False, False, objects, trackers=trackers)


# ---------------------------------------------------------------------------
# step

class _Work:
    """Mutable scratch copy of a state used inside ``step``."""

    def __init__(self, state: WorldState):
        self.scene = state.scene
        self.ee = {Arm.LEFT: state.left_ee, Arm.RIGHT: state.right_ee}
        self.grip = {Arm.LEFT: state.left_grip, Arm.RIGHT: state.right_grip}
        self.pos = {o.id: o.position for o in state.objects}
        self.held = {o.id: o.held_by for o in state.objects}
        self.bar_dropped = state.bar_dropped
        self.drawer_y = state.trackers.drawer_y

    def holding(self, arm: Arm) -> Optional[str]:
        for k, v in self.held.items():
            if v is arm:
                return k
        return None

    def freeze(self, state: WorldState, trackers: Trackers) -> WorldState:
        objects = tuple(
            ObjectState(o.id, o.kind, self.pos[o.id], self.held[o.id]) for o in state.objects
        )
        return WorldState(
            self.scene, self.ee[Arm.LEFT], self.ee[Arm.RIGHT],
            self.grip[Arm.LEFT], self.grip[Arm.RIGHT], objects,
            self.bar_dropped, state.step_index + 1, trackers,
        )


def _bar_center(pos: Dict[str, Vec]) -> Optional[Vec]:
    if "BAR_L" not in pos:
        return None
    (xl, yl), (xr, yr) = pos["BAR_L"], pos["BAR_R"]
    return ((xl + xr) / 2.0, (yl + yr) / 2.0)


def _in_interior(p: Vec, drawer_y: float) -> bool:
    cx, cy = interior_center(drawer_y)
    return abs(p[0] - cx) <= INTERIOR_HALF[0] and abs(p[1] - cy) <= INTERIOR_HALF[1]


def _update_bar(w: _Work, cfg: WorldConfig) -> None:
    if "BAR_L" not in w.pos:
        return
    held = [h for h in ("BAR_L", "BAR_R") if w.held[h] is not None]
    if not held:
        return
    (xl, yl), (xr, yr) = w.pos["BAR_L"], w.pos["BAR_R"]
    tilt = abs(yl - yr)
    stretch = abs((xr - xl) - 2.0 * BAR_HALF)
    if tilt <= cfg.tilt_threshold and stretch <= cfg.tilt_threshold:
        return
    # only a bar carried by both arms off the table can be dropped;
    # otherwise the offending grasp slips and the bar stays on the table
    if len(held) == 2 and min(yl, yr) > BAR_REST_Y + 1e-9:
        w.bar_dropped = True
    for h in held:
        w.held[h] = None
        w.pos[h] = (w.pos[h][0], BAR_REST_Y)


def _update_drawer(w: _Work, cfg: WorldConfig) -> None:
    if "DRW_L" not in w.pos:
        return
    held = [h for h in ("DRW_L", "DRW_R") if w.held[h] is not None]
    slip = any(abs(w.pos[h][0] - DRAWER_RAIL[h]) > cfg.grasp_radius for h in held)
    new_y = w.drawer_y
    if len(held) == 2:
        yl, yr = w.pos["DRW_L"][1], w.pos["DRW_R"][1]
        mean_y = (yl + yr) / 2.0
        if abs(yl - yr) > cfg.tilt_threshold:
            slip = True
        if mean_y < DRAWER_OPEN_Y - cfg.grasp_radius or mean_y > DRAWER_CLOSED_Y + cfg.grasp_radius:
            slip = True
        if not slip:
            new_y = float(np.clip(mean_y, DRAWER_OPEN_Y, DRAWER_CLOSED_Y))
    elif len(held) == 1:
        if abs(w.pos[held[0]][1] - w.drawer_y) > cfg.tilt_threshold:
            slip = True
    if slip:
        for h in held:
            w.held[h] = None
    w.drawer_y = new_y
    for h in ("DRW_L", "DRW_R"):
        if w.held[h] is None:
            w.pos[h] = (DRAWER_RAIL[h], new_y)


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def step(state: WorldState, a_L: ArmAction, a_R: ArmAction, cfg: WorldConfig = WorldConfig()) -> WorldState:
    """
    Advance the world by one control step.

    Actions are clamped to [-1, 1] per component and integrated with speed v_max.
    Dynamics are total: every input produces a valid next state.
    """
    w = _Work(state)
    old_center = _bar_center(w.pos)
    old_drawer_y = w.drawer_y

    # riders are decided on the pre-step configuration
    seated = {}
    for tube, slot in (("A", "SLOT_L"), ("B", "SLOT_R")):
        if tube in w.pos and slot in w.pos and w.held[tube] is None \
                and dist(w.pos[tube], w.pos[slot]) <= cfg.target_tolerance:
            seated[tube] = slot
    in_drawer = []
    if "DRW_L" in w.pos:
        in_drawer = [i for i in ("A", "B") if i in w.pos and w.held[i] is None
                     and _in_interior(w.pos[i], old_drawer_y)]

    for arm, action in ((Arm.LEFT, a_L), (Arm.RIGHT, a_R)):
        act = action.clamped()
        x, y = w.ee[arm]
        w.ee[arm] = _clamp_point((x + cfg.v_max * act.dx, y + cfg.v_max * act.dy))
        w.grip[arm] = act.grip > 0.0

    for arm in (Arm.LEFT, Arm.RIGHT):
        if not w.grip[arm]:
            for k, v in w.held.items():
                if v is arm:
                    w.held[k] = None
    for k, v in w.held.items():
        if v is not None:
            w.pos[k] = w.ee[v]
    for arm in (Arm.LEFT, Arm.RIGHT):
        if not w.grip[arm] or w.holding(arm) is not None:
            continue
        candidates = [
            (dist(w.ee[arm], w.pos[k]), k) for k in w.pos
            if OBJECT_KINDS[k] in GRASPABLE and w.held[k] is None
            and dist(w.ee[arm], w.pos[k]) <= cfg.grasp_radius
        ]
        if candidates:
            _, k = min(candidates)
            w.held[k] = arm
            w.pos[k] = w.ee[arm]

    _update_bar(w, cfg)
    _update_drawer(w, cfg)

    center = _bar_center(w.pos)
    if "SLOT_L" in w.pos and center is not None:
        w.pos["SLOT_L"] = (center[0] - SLOT_OFFSET, center[1])
        w.pos["SLOT_R"] = (center[0] + SLOT_OFFSET, center[1])
        dx, dy = center[0] - old_center[0], center[1] - old_center[1]
        for tube in seated:
            if w.held[tube] is None:
                px, py = w.pos[tube]
                w.pos[tube] = _clamp_point((px + dx, py + dy))
    if in_drawer and w.drawer_y != old_drawer_y:
        for item in in_drawer:
            if w.held[item] is None:
                px, py = w.pos[item]
                w.pos[item] = (px, py + (w.drawer_y - old_drawer_y))

    trackers = _update_trackers(state.trackers, w, old_center, cfg)
    new_state = w.freeze(state, trackers)
    achieved = set(trackers.achieved)
    for skill, scene in SKILL_SCENE.items():
        if scene == new_state.scene and skill not in achieved and skill_holds(new_state, skill, cfg):
            achieved.add(skill)
    if len(achieved) != len(trackers.achieved):
        new_state = replace(new_state, trackers=replace(trackers, achieved=frozenset(achieved)))
    return new_state


def _update_trackers(t: Trackers, w: _Work, old_center: Optional[Vec], cfg: WorldConfig) -> Trackers:
    changes = {}
    if "TARGET" in w.pos:
        ee = w.ee[Arm.RIGHT]
        target = w.pos["TARGET"]
        d = dist(ee, target)
        if d <= cfg.grasp_radius and not w.grip[Arm.RIGHT]:
            changes["touched"] = True
        if d <= cfg.grasp_radius and w.grip[Arm.RIGHT]:
            streak = t.press_streak + 1
        else:
            streak = 0
        changes["press_streak"] = streak
        changes["press_best"] = max(t.press_best, streak)
        if abs(d - cfg.orbit_radius) <= cfg.orbit_band:
            theta = math.atan2(ee[1] - target[1], ee[0] - target[0])
            if t.orbit_last is not None:
                changes["orbit_angle"] = t.orbit_angle + _wrap(theta - t.orbit_last)
            changes["orbit_last"] = theta
        else:
            changes["orbit_last"] = None
    center = _bar_center(w.pos)
    if center is not None and old_center is not None and w.held["BAR_L"] is Arm.LEFT \
            and w.held["BAR_R"] is Arm.RIGHT and center[1] >= 0.4:
        dxc = center[0] - old_center[0]
        if abs(dxc) > 0.004:
            sign = 1 if dxc > 0 else -1
            if t.shake_sign != 0 and sign != t.shake_sign:
                changes["shake_reversals"] = t.shake_reversals + 1
            changes["shake_sign"] = sign
    if "DRW_L" in w.pos:
        changes["drawer_y"] = w.drawer_y
        if w.drawer_y <= DRAWER_OPEN_Y + DRAWER_SLACK:
            changes["drawer_opened"] = True
        if "MARK" in w.pos and "B" in w.pos and w.held["B"] is None \
                and dist(w.pos["B"], w.pos["MARK"]) <= cfg.target_tolerance:
            changes["relocated"] = True
    return replace(t, **changes) if changes else t


# ---------------------------------------------------------------------------
# predicates and scoring

_PICK_OBJECT = {SkillId.L1: "A", SkillId.L2: "B", SkillId.L3: "C"}


def _near(state: WorldState, a: str, b: str, tol: float) -> bool:
    oa, ob = state.obj(a), state.obj(b)
    return oa is not None and ob is not None and dist(oa.position, ob.position) <= tol


def _free(state: WorldState, obj_id: str) -> bool:
    o = state.obj(obj_id)
    return o is not None and o.held_by is None


def bar_center(state: WorldState) -> Optional[Vec]:
    return _bar_center({o.id: o.position for o in state.objects})


def in_drawer(state: WorldState, item_id: str) -> bool:
    o = state.obj(item_id)
    return (o is not None and o.held_by is None and state.obj("DRW_L") is not None
            and _in_interior(o.position, state.trackers.drawer_y))


def drawer_closed(state: WorldState) -> bool:
    t = state.trackers
    return state.obj("DRW_L") is not None and t.drawer_opened \
        and t.drawer_y >= DRAWER_CLOSED_Y - DRAWER_SLACK


def _bar_held(state: WorldState) -> bool:
    bl, br = state.obj("BAR_L"), state.obj("BAR_R")
    return bl is not None and bl.held_by is Arm.LEFT and br.held_by is Arm.RIGHT


def skill_holds(state: WorldState, skill: SkillId, cfg: WorldConfig = WorldConfig()) -> bool:
    """Whether the success predicate of a skill is satisfied in this state."""
    t = state.trackers
    tol = cfg.target_tolerance
    if skill in _PICK_OBJECT:
        o = state.obj(_PICK_OBJECT[skill])
        return o is not None and o.held_by is Arm.LEFT and o.position[1] >= cfg.lift_height - tol
    if skill is SkillId.L4:
        return _free(state, "A") and _near(state, "A", "SLOT_L", tol)
    if skill is SkillId.R4:
        return _free(state, "B") and _near(state, "B", "SLOT_R", tol)
    if skill is SkillId.L5:
        return in_drawer(state, "A")
    if skill is SkillId.L6:
        return in_drawer(state, "B")
    if skill is SkillId.R5:
        return _free(state, "B") and _near(state, "B", "MARK", tol)
    if skill is SkillId.R1:
        return t.touched
    if skill is SkillId.R2:
        return abs(t.orbit_angle) >= 2.0 * math.pi
    if skill is SkillId.R3:
        return t.press_best >= cfg.press_steps
    if skill is SkillId.D1:
        c = bar_center(state)
        return not state.bar_dropped and _bar_held(state) and c[1] >= BAR_LIFT_Y - tol
    if skill is SkillId.D2:
        return not state.bar_dropped and t.shake_reversals >= cfg.shake_reversals
    if skill in (SkillId.D3, SkillId.D4):
        c, mark = bar_center(state), state.obj("MARK")
        if state.bar_dropped or c is None or mark is None or dist(c, mark.position) > tol:
            return False
        if skill is SkillId.D3:
            return _bar_held(state)
        return state.obj("BAR_L").held_by is None and state.obj("BAR_R").held_by is None
    if skill is SkillId.D5:
        return state.obj("DRW_L") is not None and t.drawer_y <= DRAWER_OPEN_Y + DRAWER_SLACK
    if skill is SkillId.D6:
        return drawer_closed(state)
    return False


def skill_done(state: WorldState, skill: SkillId, cfg: WorldConfig = WorldConfig()) -> bool:
    """Latched or currently satisfied."""
    if skill is SkillId.IDLE:
        return True
    return skill in state.trackers.achieved or skill_holds(state, skill, cfg)


def current_stage(state: WorldState, task: TaskSpec, cfg: WorldConfig = WorldConfig()) -> Tuple[int, Stage]:
    """First unfinished stage of the task (the last one once everything is done)."""
    plan = stages(task)
    if task.kind != "long":
        return 0, plan[0]
    for i, stage in enumerate(plan):
        if not (skill_done(state, stage.left, cfg) and skill_done(state, stage.right, cfg)):
            return i, stage
    return len(plan) - 1, plan[-1]


def max_score(task: TaskSpec) -> int:
    if task.kind == "pair":
        return sum(1 for s in task.instruction if s is not SkillId.IDLE)
    if task.kind == "dual":
        return 1
    return 3 if task.instruction is LongTask.TUBES else 5


def score(state: WorldState, task: TaskSpec, cfg: WorldConfig = WorldConfig()) -> int:
    """
    Progress achieved so far

    Pair tasks score one point per achieved arm subgoal, dual tasks one point for
    the skill, TUBES one per transferred tube plus one for the placed rack, and
    COLLECT one each for opening, relocating, each stowed item and closing.
    """
    achieved = state.trackers.achieved
    if task.kind == "pair":
        return sum(1 for s in task.instruction if s is not SkillId.IDLE and s in achieved)
    if task.kind == "dual":
        return int(task.instruction in achieved)
    t = state.trackers
    if task.instruction is LongTask.TUBES:
        return int(skill_holds(state, SkillId.L4, cfg)) + int(skill_holds(state, SkillId.R4, cfg)) \
            + int(skill_holds(state, SkillId.D4, cfg))
    return (int(t.drawer_opened) + int(t.relocated) + int(in_drawer(state, "A"))
            + int(in_drawer(state, "B")) + int(drawer_closed(state)))


def progress_rate(state: WorldState, task: TaskSpec, cfg: WorldConfig = WorldConfig()) -> float:
    top = max_score(task)
    return score(state, task, cfg) / top if top else 0.0


def is_success(state: WorldState, task: TaskSpec, cfg: WorldConfig = WorldConfig()) -> bool:
    return score(state, task, cfg) >= max_score(task)


def drop_is_terminal(task: TaskSpec) -> bool:
    return task.scene in ("bar", "tubes")


# ---------------------------------------------------------------------------
# observation

def _norm_y(y: float) -> float:
    return 2.0 * y - 1.0


def observe(state: WorldState, task: Optional[TaskSpec] = None) -> np.ndarray:
    """
    Fixed-layout observation vector.

    The layout does not depend on the task: [left_ee, right_ee, grips, object
    positions in OBJECT_IDS order (absent objects zero), held flags, bar_dropped].
    x is already in [-1, 1]; y in [0, 1] maps to 2y - 1; flags are 0/1.
    """
    obs = np.zeros(OBS_DIM, dtype=np.float64)
    obs[OBS_EE[Arm.LEFT]] = (state.left_ee[0], _norm_y(state.left_ee[1]))
    obs[OBS_EE[Arm.RIGHT]] = (state.right_ee[0], _norm_y(state.right_ee[1]))
    obs[OBS_GRIP[Arm.LEFT]] = float(state.left_grip)
    obs[OBS_GRIP[Arm.RIGHT]] = float(state.right_grip)
    by_id = {o.id: o for o in state.objects}
    for i, obj_id in enumerate(OBJECT_IDS):
        o = by_id.get(obj_id)
        if o is None:
            continue
        obs[OBS_OBJECTS + 2 * i] = o.position[0]
        obs[OBS_OBJECTS + 2 * i + 1] = _norm_y(o.position[1])
        obs[OBS_HELD + i] = float(o.held_by is not None)
    obs[OBS_DROPPED] = float(state.bar_dropped)
    return obs


def proprio(obs: np.ndarray, arm: Arm) -> np.ndarray:
    """Own end-effector and gripper slots of one arm, batched or single."""
    ee = obs[..., OBS_EE[arm]]
    grip = obs[..., OBS_GRIP[arm]:OBS_GRIP[arm] + 1]
    return np.concatenate([ee, grip], axis=-1)


def other_arm_mask(arm: Arm) -> np.ndarray:
    """Observation mask that zeroes the other arm's proprioception."""
    mask = np.ones(OBS_DIM, dtype=np.float64)
    other = arm.other
    mask[OBS_EE[other]] = 0.0
    mask[OBS_GRIP[other]] = 0.0
    return mask
