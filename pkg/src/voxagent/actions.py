"""Environment actions shared by the simulator and the controllers."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import SubgoalType


class NavAction(enum.Enum):
    MOVE_AHEAD = "MoveAhead"
    ROTATE_LEFT = "RotateLeft"
    ROTATE_RIGHT = "RotateRight"
    LOOK_UP = "LookUp"
    LOOK_DOWN = "LookDown"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class Interaction:
    stype: SubgoalType
    mask: np.ndarray  # [H, W] binary

    def __post_init__(self):
        if self.stype is SubgoalType.STOP:
            raise ValueError("Stop is not an environment action")

    def __str__(self):
        return f"{self.stype.label}[{int(np.count_nonzero(self.mask))}px]"


EnvAction = NavAction | Interaction


class LlcSignal(enum.Enum):
    PASS = "Pass"
    FAIL = "Fail"


PASS = LlcSignal.PASS
FAIL = LlcSignal.FAIL
