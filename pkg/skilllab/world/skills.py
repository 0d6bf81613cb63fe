"""
Skill library, task specifications and stage planning

A task is either a pairing of one left-arm and one right-arm skill, a single
dual-arm skill executed by both arms, or a named long-horizon task that expands
into a list of stages.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple, Union

from skilllab.errors import ConfigError


class Arm(str, Enum):
    LEFT = "L"
    RIGHT = "R"

    @property
    def other(self) -> "Arm":
        return Arm.RIGHT if self is Arm.LEFT else Arm.LEFT


class SkillId(str, Enum):
    IDLE = "IDLE"
    # left arm
    L1 = "L1"   # pick A
    L2 = "L2"   # pick B
    L3 = "L3"   # pick C
    L4 = "L4"   # tube A into left rack slot
    L5 = "L5"   # stow item A in the drawer
    L6 = "L6"   # stow item B (from the hand-over mark) in the drawer
    # right arm
    R1 = "R1"   # tap
    R2 = "R2"   # orbit
    R3 = "R3"   # press-hold
    R4 = "R4"   # tube B into right rack slot
    R5 = "R5"   # relocate item B to the hand-over mark
    # both arms
    D1 = "D1"   # lift bar
    D2 = "D2"   # shake
    D3 = "D3"   # align bar with mark
    D4 = "D4"   # place rack onto the other rack
    D5 = "D5"   # open drawer
    D6 = "D6"   # close drawer

    @property
    def is_dual(self) -> bool:
        return self.value.startswith("D")

    @property
    def arm(self) -> Optional[Arm]:
        if self.value.startswith("L"):
            return Arm.LEFT
        if self.value.startswith("R"):
            return Arm.RIGHT
        return None


class LongTask(str, Enum):
    TUBES = "TUBES"
    COLLECT = "COLLECT"


SKILLS: Tuple[SkillId, ...] = tuple(SkillId)
SKILL_INDEX = {s: i for i, s in enumerate(SKILLS)}

K_L = (SkillId.L1, SkillId.L2, SkillId.L3)
K_R = (SkillId.R1, SkillId.R2, SkillId.R3)
K_D = (SkillId.D1, SkillId.D2, SkillId.D3)

LEFT_SKILLS = tuple(s for s in SKILLS if s.arm is Arm.LEFT)
RIGHT_SKILLS = tuple(s for s in SKILLS if s.arm is Arm.RIGHT)
DUAL_SKILLS = tuple(s for s in SKILLS if s.is_dual)

# classes of the selector heads
LEFT_CLASSES: Tuple[SkillId, ...] = (SkillId.IDLE,) + LEFT_SKILLS + DUAL_SKILLS
RIGHT_CLASSES: Tuple[SkillId, ...] = (SkillId.IDLE,) + RIGHT_SKILLS + DUAL_SKILLS

SKILL_SCENE = {
    SkillId.L1: "tabletop", SkillId.L2: "tabletop", SkillId.L3: "tabletop",
    SkillId.R1: "tabletop", SkillId.R2: "tabletop", SkillId.R3: "tabletop",
    SkillId.D1: "bar", SkillId.D2: "bar", SkillId.D3: "bar",
    SkillId.L4: "tubes", SkillId.R4: "tubes", SkillId.D4: "tubes",
    SkillId.L5: "collect", SkillId.L6: "collect", SkillId.R5: "collect",
    SkillId.D5: "collect", SkillId.D6: "collect",
}

LONG_SCENE = {LongTask.TUBES: "tubes", LongTask.COLLECT: "collect"}


def parse_skill(name: str) -> SkillId:
    try:
        return SkillId(name.strip().upper())
    except ValueError as e:
        raise ConfigError(f"unknown skill '{name}'") from e


@dataclass(frozen=True)
class Stage:
    """One stage of a task: the instruction pair handed to the policy."""
    left: SkillId
    right: SkillId

    @property
    def is_dual(self) -> bool:
        return self.left.is_dual

    @property
    def prior(self) -> int:
        return 1 if self.is_dual else 0


Instruction = Union[Tuple[SkillId, SkillId], SkillId, LongTask]


@dataclass(frozen=True)
class TaskSpec:
    """
    What the robot is asked to do.

    Parameters:
    -----------
    instruction : tuple of SkillId, SkillId or LongTask
        A (left, right) pair, one dual skill, or a long-horizon task name
    layout_seed : int
        Mixed into the reset seed so distinct layouts can share episode seeds
    horizon : int or None
        Step budget; None picks the configured default for the task kind
    schedule : str
        'parallel' or 'sequential' stage expansion for long-horizon tasks
    """
    instruction: Instruction
    layout_seed: int = 0
    horizon: Optional[int] = None
    schedule: str = "parallel"

    def __post_init__(self):
        ins = self.instruction
        if isinstance(ins, tuple):
            if len(ins) != 2 or not all(isinstance(s, SkillId) for s in ins):
                raise ConfigError(f"pair instruction must hold two skills, got {ins!r}")
            left, right = ins
            if left is not SkillId.IDLE and left.arm is not Arm.LEFT:
                raise ConfigError(f"{left.value} is not a left-arm skill")
            if right is not SkillId.IDLE and right.arm is not Arm.RIGHT:
                raise ConfigError(f"{right.value} is not a right-arm skill")
            scenes = {SKILL_SCENE[s] for s in ins if s is not SkillId.IDLE}
            if len(scenes) > 1:
                raise ConfigError(f"skills {left.value} and {right.value} live in different scenes")
        elif isinstance(ins, SkillId):
            if not ins.is_dual:
                raise ConfigError(f"single-skill instruction must be dual, got {ins.value}")
        elif not isinstance(ins, LongTask):
            raise ConfigError(f"unknown task instruction {ins!r}")
        if self.schedule not in ("parallel", "sequential"):
            raise ConfigError(f"unknown schedule '{self.schedule}'")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")

    @classmethod
    def pair(cls, left: SkillId, right: SkillId, **kw) -> "TaskSpec":
        return cls((SkillId(left), SkillId(right)), **kw)

    @classmethod
    def dual(cls, skill: SkillId, **kw) -> "TaskSpec":
        return cls(SkillId(skill), **kw)

    @classmethod
    def long(cls, name: Union[str, LongTask], **kw) -> "TaskSpec":
        try:
            return cls(LongTask(str(getattr(name, 'value', name)).upper()), **kw)
        except ValueError as e:
            raise ConfigError(f"unknown task name '{name}'") from e

    @classmethod
    def parse(cls, text: str, **kw) -> "TaskSpec":
        """Parse 'pair:L1,IDLE', 'dual:D1' or 'long:TUBES' (also bare 'TUBES')."""
        kind, _, rest = text.partition(':')
        kind = kind.strip().lower()
        if not rest:
            return cls.long(kind, **kw)
        if kind == 'pair':
            parts = rest.split(',')
            if len(parts) != 2:
                raise ConfigError(f"pair task needs two skills, got '{rest}'")
            return cls.pair(parse_skill(parts[0]), parse_skill(parts[1]), **kw)
        if kind == 'dual':
            return cls.dual(parse_skill(rest), **kw)
        if kind == 'long':
            return cls.long(rest, **kw)
        raise ConfigError(f"unknown task kind '{kind}' in '{text}'")

    @property
    def kind(self) -> str:
        if isinstance(self.instruction, tuple):
            return "pair"
        if isinstance(self.instruction, LongTask):
            return "long"
        return "dual"

    @property
    def scene(self) -> str:
        ins = self.instruction
        if isinstance(ins, LongTask):
            return LONG_SCENE[ins]
        skills = ins if isinstance(ins, tuple) else (ins,)
        active = [s for s in skills if s is not SkillId.IDLE]
        return SKILL_SCENE[active[0]] if active else "tabletop"

    @property
    def skills(self) -> Tuple[SkillId, ...]:
        """Distinct non-IDLE skills the task exercises."""
        seen = []
        for stage in stages(self):
            for s in (stage.left, stage.right):
                if s is not SkillId.IDLE and s not in seen:
                    seen.append(s)
        return tuple(seen)

    def resolved_horizon(self, world_cfg) -> int:
        if self.horizon is not None:
            return self.horizon
        return world_cfg.horizon_long if self.kind == "long" else world_cfg.horizon_single

    def label(self) -> str:
        ins = self.instruction
        if isinstance(ins, tuple):
            return f"pair:{ins[0].value},{ins[1].value}"
        if isinstance(ins, LongTask):
            return f"long:{ins.value}"
        return f"dual:{ins.value}"


_LONG_STAGES = {
    LongTask.TUBES: [
        Stage(SkillId.L4, SkillId.R4),
        Stage(SkillId.D4, SkillId.D4),
    ],
    LongTask.COLLECT: [
        Stage(SkillId.D5, SkillId.D5),
        Stage(SkillId.L5, SkillId.R5),
        Stage(SkillId.L6, SkillId.IDLE),
        Stage(SkillId.D6, SkillId.D6),
    ],
}


def stages(task: TaskSpec) -> List[Stage]:
    """Expand a task into its stage list under the task's schedule."""
    ins = task.instruction
    if isinstance(ins, tuple):
        return [Stage(*ins)]
    if isinstance(ins, SkillId):
        return [Stage(ins, ins)]
    plan = _LONG_STAGES[ins]
    if task.schedule == "parallel":
        return list(plan)
    serial = []
    for stage in plan:
        if (not stage.is_dual and stage.left is not SkillId.IDLE
                and stage.right is not SkillId.IDLE):
            serial.append(Stage(stage.left, SkillId.IDLE))
            serial.append(Stage(SkillId.IDLE, stage.right))
        else:
            serial.append(stage)
    return serial
