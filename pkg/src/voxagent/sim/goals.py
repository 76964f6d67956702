"""Goal-condition evaluation and episode metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..hlc import TaskSpec, TaskType
from .world import ObjectInstance, WorldState

LAMPS = ("FloorLamp", "DeskLamp")
_STATE_FOR = {
    TaskType.HEAT_AND_PLACE: "hot",
    TaskType.COOL_AND_PLACE: "cold",
    TaskType.CLEAN_AND_PLACE: "clean",
}


@dataclass
class EpisodeMetrics:
    success: bool
    goal_condition_rate: float
    steps: int
    satisfied: int = 0
    total: int = 0
    subgoal_outcomes: list = field(default_factory=list)

    def __post_init__(self):
        if self.success and self.goal_condition_rate != 1.0:
            raise ValueError("success implies every goal condition holds")


def _parent_cls(world: WorldState, o: ObjectInstance) -> str | None:
    if o.contained_in is None:
        return None
    return world.objects[o.contained_in].cls


def _instance_checks(task: TaskSpec, world: WorldState, o: ObjectInstance) -> list[bool]:
    t = task.task_type
    if t is TaskType.EXAMINE:
        lamp_on = any(x.toggled for x in world.objects.values() if x.cls in LAMPS)
        checks = [world.held == o.id, lamp_on]
    elif t is TaskType.STACK_AND_PLACE:
        inner = any(world.objects[c].cls == task.intermediate_class for c in o.contents)
        checks = [inner, _parent_cls(world, o) == task.receptacle_class]
    else:
        checks = [_parent_cls(world, o) == task.receptacle_class]
        if t in _STATE_FOR:
            checks.append(getattr(o, _STATE_FOR[t]))
    if task.sliced:
        checks.append(o.sliced)
    return checks


def goal_conditions(task: TaskSpec, world: WorldState) -> tuple[int, int]:
    """(satisfied, total) for the instance of the task object that satisfies the most conditions."""
    cands = [o for oid, o in sorted(world.objects.items()) if o.cls == task.object_class]
    if task.task_type is TaskType.PICK_TWO_AND_PLACE:
        ok = [o for o in cands if _parent_cls(world, o) == task.receptacle_class and (o.sliced or not task.sliced)]
        total = 3 if task.sliced else 2
        sat = min(len(ok), 2)
        if task.sliced:
            sat += any(o.sliced for o in cands)
        return sat, total
    total = len(_instance_checks(task, world, cands[0])) if cands else (2 if task.task_type is TaskType.EXAMINE else 1)
    best = max((sum(_instance_checks(task, world, o)) for o in cands), default=0)
    return best, total
