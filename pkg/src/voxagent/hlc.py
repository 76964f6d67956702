"""High-level controller: instruction parsing, subgoal templates, instance grounding."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import yaml
from scipy import ndimage

from .core import (
    PRESENCE_THRESHOLD,
    GridConfig,
    Pose,
    StateRepr,
    Subgoal,
    SubgoalType,
    empty_history,
    update_history_tensor,
)


class TaskType(enum.Enum):
    EXAMINE = "Examine"
    PICK_AND_PLACE = "PickAndPlace"
    STACK_AND_PLACE = "StackAndPlace"
    CLEAN_AND_PLACE = "CleanAndPlace"
    COOL_AND_PLACE = "CoolAndPlace"
    HEAT_AND_PLACE = "HeatAndPlace"
    PICK_TWO_AND_PLACE = "PickTwoAndPlace"


@dataclass(frozen=True)
class TaskSpec:
    task_type: TaskType
    object_class: str
    receptacle_class: str | None = None
    intermediate_class: str | None = None
    sliced: bool = False

    def __post_init__(self):
        if self.task_type is not TaskType.EXAMINE and self.receptacle_class is None:
            raise ValueError(f"{self.task_type.value} needs a receptacle")
        if (self.task_type is TaskType.STACK_AND_PLACE) != (self.intermediate_class is not None):
            raise ValueError("intermediate_class is required for, and only for, StackAndPlace")

    def classes(self) -> list[str]:
        return [c for c in (self.object_class, self.receptacle_class, self.intermediate_class) if c]

    def validate(self, grid: GridConfig) -> "TaskSpec":
        for c in self.classes():
            if c not in grid.class_names:
                raise UnknownClass(c)
        return self

    def __str__(self):
        args = ", ".join(self.classes())
        return f"{'Sliced' if self.sliced else ''}{self.task_type.value}({args})"


class UnparseableInstruction(ValueError):
    def __init__(self, text: str, position: int):
        self.text = text
        self.position = position
        super().__init__(f"cannot parse instruction at char {position}: {text[position:]!r}")


class UnknownClass(ValueError):
    def __init__(self, token: str):
        self.token = token
        super().__init__(f"unknown object class {token!r}")


def _camel_split(name: str) -> str:
    return re.sub(r"(?<=[a-z])(?=[A-Z])|(?<=[A-Z])(?=[A-Z][a-z])", " ", name).lower()


class Vocabulary:
    """Phrase -> class lookup plus alternate classes for retries."""

    def __init__(self, class_names: Sequence[str], synonyms: dict[str, list[str]], alternates: dict[str, list[str]]):
        self.class_names = tuple(class_names)
        self.canonical: dict[str, str] = {}
        self.lookup: dict[str, str] = {}
        for name in self.class_names:
            phrases = list(synonyms.get(name, [])) + [_camel_split(name), name.lower()]
            self.canonical[name] = phrases[0]
            for p in phrases:
                self.lookup.setdefault(" ".join(p.lower().split()), name)
        self.alternates = {k: list(v) for k, v in alternates.items()}

    @classmethod
    def load(cls, class_names: Sequence[str], path: str | Path | None = None) -> "Vocabulary":
        if path is None:
            text = resources.files("voxagent.data").joinpath("vocab.yaml").read_text()
        else:
            text = Path(path).read_text()
        data = yaml.safe_load(text) or {}
        return cls(class_names, data.get("synonyms", {}), data.get("alternates", {}))

    def resolve(self, phrase: str, plural: bool = False) -> str:
        phrase = " ".join(phrase.split())
        tries = [phrase]
        if plural:
            tries += [phrase[:-2] if phrase.endswith("es") else phrase, phrase[:-1] if phrase.endswith("s") else phrase]
        for t in tries:
            if t in self.lookup:
                return self.lookup[t]
        raise UnknownClass(phrase)

    def alternate(self, name: str) -> str | None:
        alts = [a for a in self.alternates.get(name, []) if a in self.class_names]
        return alts[0] if alts else None


# Grammar elements: ("lit", {words}), ("opt", word), ("np", slot), ("state",)
_DET = {"a", "an", "the"}
_PREP = {"in", "on", "into", "onto"}
_PATTERNS = [
    (TaskType.EXAMINE, [("lit", {"examine", "inspect"}), ("lit", _DET), ("opt", "sliced"), ("np", "o"),
                        ("lit", {"under", "with", "by"}), ("lit", {"the"}), ("lit", {"lamp", "light"})]),
    (TaskType.PICK_TWO_AND_PLACE, [("lit", {"put"}), ("lit", {"two"}), ("opt", "sliced"), ("np", "o"),
                                   ("lit", _PREP), ("lit", _DET), ("np", "r")]),
    (TaskType.STACK_AND_PLACE, [("lit", {"put"}), ("lit", _DET), ("opt", "sliced"), ("np", "o"),
                                ("lit", {"with"}), ("lit", _DET), ("np", "o2"), ("lit", {"in"}), ("lit", {"it"}),
                                ("lit", _PREP), ("lit", _DET), ("np", "r")]),
    (None, [("lit", {"put"}), ("lit", _DET), ("state",), ("opt", "sliced"), ("np", "o"),
            ("lit", _PREP), ("lit", _DET), ("np", "r")]),
    (TaskType.PICK_AND_PLACE, [("lit", {"put"}), ("lit", _DET), ("opt", "sliced"), ("np", "o"),
                               ("lit", _PREP), ("lit", _DET), ("np", "r")]),
]
_STATES = {"clean": TaskType.CLEAN_AND_PLACE, "hot": TaskType.HEAT_AND_PLACE,
           "warm": TaskType.HEAT_AND_PLACE, "cold": TaskType.COOL_AND_PLACE,
           "chilled": TaskType.COOL_AND_PLACE}


def _match(pattern, tokens, i=0, k=0, binds=None):
    """Backtracking matcher. Returns (bindings or None, furthest token index reached)."""
    binds = {} if binds is None else binds
    if k == len(pattern):
        return (binds if i == len(tokens) else None), i
    kind = pattern[k][0]
    if kind == "lit":
        if i < len(tokens) and tokens[i] in pattern[k][1]:
            return _match(pattern, tokens, i + 1, k + 1, binds)
        return None, i
    if kind == "state":
        if i < len(tokens) and tokens[i] in _STATES:
            return _match(pattern, tokens, i + 1, k + 1, {**binds, "state": tokens[i]})
        return None, i
    if kind == "opt":
        best = i
        if i < len(tokens) and tokens[i] == pattern[k][1]:
            got, far = _match(pattern, tokens, i + 1, k + 1, {**binds, pattern[k][1]: True})
            if got is not None:
                return got, far
            best = max(best, far)
        got, far = _match(pattern, tokens, i, k + 1, binds)
        return got, max(best, far)
    # noun phrase: one or more tokens, shortest first
    best = i
    for j in range(i + 1, len(tokens) + 1):
        got, far = _match(pattern, tokens, j, k + 1, {**binds, pattern[k][1]: tokens[i:j]})
        if got is not None:
            return got, far
        best = max(best, far)
    return None, best


def parse_instruction(text: str, vocab: Vocabulary) -> TaskSpec:
    spans = [(m.group(0).lower(), m.start()) for m in re.finditer(r"[A-Za-z0-9]+", text)]
    tokens = [t for t, _ in spans]
    furthest = 0
    for task_type, pattern in _PATTERNS:
        binds, far = _match(pattern, tokens)
        if binds is None:
            furthest = max(furthest, far)
            continue
        if task_type is None:
            task_type = _STATES[binds["state"]]
        plural = task_type is TaskType.PICK_TWO_AND_PLACE
        obj = vocab.resolve(" ".join(binds["o"]), plural=plural)
        recep = vocab.resolve(" ".join(binds["r"])) if "r" in binds else None
        inner = vocab.resolve(" ".join(binds["o2"])) if "o2" in binds else None
        return TaskSpec(task_type, obj, recep, inner, sliced=bool(binds.get("sliced")))
    pos = spans[furthest][1] if furthest < len(spans) else len(text)
    raise UnparseableInstruction(text, pos)


def render_instruction(task: TaskSpec, vocab: Vocabulary) -> str:
    """Canonical phrasing; parse_instruction inverts it."""
    o = ("sliced " if task.sliced else "") + vocab.canonical[task.object_class]
    r = vocab.canonical.get(task.receptacle_class or "", "")
    t = task.task_type
    if t is TaskType.EXAMINE:
        return f"examine {_article(o)} {o} under the lamp"
    if t is TaskType.PICK_TWO_AND_PLACE:
        return f"put two {o}s in the {r}"
    if t is TaskType.STACK_AND_PLACE:
        o2 = vocab.canonical[task.intermediate_class]
        return f"put {_article(o)} {o} with {_article(o2)} {o2} in it in the {r}"
    state = {TaskType.CLEAN_AND_PLACE: "clean ", TaskType.HEAT_AND_PLACE: "hot ",
             TaskType.COOL_AND_PLACE: "cold "}.get(t, "")
    head = state + o
    return f"put {_article(head)} {head} in the {r}"


def _article(phrase: str) -> str:
    return "an" if phrase[:1] in "aeiou" else "a"


def load_templates(path: str | Path | None = None) -> dict:
    if path is None:
        text = resources.files("voxagent.data").joinpath("templates.yaml").read_text()
    else:
        text = Path(path).read_text()
    data = yaml.safe_load(text)
    parsed = {}
    for name, steps in data["templates"].items():
        parsed[TaskType(name)] = [_parse_step(s) for s in steps]
    parsed["sliced_prefix"] = [_parse_step(s) for s in data.get("sliced_prefix", [])]
    for t, steps in parsed.items():
        if t != "sliced_prefix" and (not steps or steps[-1][0] is not SubgoalType.STOP):
            raise ValueError(f"template {t} must end with Stop")
    return parsed


def _parse_step(step: str):
    parts = step.split()
    stype = SubgoalType.from_label(parts[0])
    return stype, (parts[1] if len(parts) > 1 else None)


_DEFAULT_TEMPLATES: dict | None = None


def plan_subgoals(task: TaskSpec, templates: dict | None = None) -> list[tuple[SubgoalType, str | None]]:
    global _DEFAULT_TEMPLATES
    if templates is None:
        if _DEFAULT_TEMPLATES is None:
            _DEFAULT_TEMPLATES = load_templates()
        templates = _DEFAULT_TEMPLATES
    fill = {"{o}": task.object_class, "{r}": task.receptacle_class, "{o2}": task.intermediate_class}
    steps = list(templates[task.task_type])
    if task.sliced:
        steps = list(templates["sliced_prefix"]) + steps
    return [(st, fill.get(arg, arg)) for st, arg in steps]


_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


def select_instance_mask(
    sem: np.ndarray,
    arg_class: int,
    history_tensor: np.ndarray,
    stype: SubgoalType,
    pose: Pose,
    exclude: np.ndarray | None = None,
) -> np.ndarray:
    """Binary 3D mask of one instance of `arg_class`, or all zeros.

    Candidates are 6-connected components of voxels above the presence
    threshold. Components whose top-down footprint was already the target of
    an interaction of this type (or lies in `exclude`) are skipped; the
    nearest remaining component to the agent wins. If the history rules out
    every component the history is ignored; `exclude` is never relaxed.
    """
    out = np.zeros(sem.shape[:3], dtype=np.float32)
    cand = sem[..., arg_class] > PRESENCE_THRESHOLD
    if not cand.any():
        return out
    labels, n = ndimage.label(cand, structure=_SIX_CONNECTED)
    used = history_tensor[int(stype)] > 0
    banned = np.zeros_like(used) if exclude is None else np.asarray(exclude, dtype=bool)
    agent = np.array([pose.x + 0.5, pose.y + 0.5])
    comps = []
    for lbl in range(1, n + 1):
        vox = np.argwhere(labels == lbl)  # lexicographically sorted
        if banned[vox[:, 0], vox[:, 1]].any():
            continue
        d = float(np.hypot(*(vox[:, :2].mean(axis=0) + 0.5 - agent)))
        fresh = not used[vox[:, 0], vox[:, 1]].any()
        comps.append((d, int(vox[0, 0]), int(vox[0, 1]), lbl, fresh))
    # Only when every instance has already been used this way (a second Open of
    # the one fridge) is a used instance allowed again.
    pool = [c for c in comps if c[4]] or comps
    if pool:
        out[labels == min(pool)[3]] = 1.0
    return out


class SubgoalPolicy(Protocol):
    def next(self, task: TaskSpec, state: StateRepr, history: list[tuple[Subgoal, bool]], rng) -> Subgoal: ...


def history_tensor_from(history: list[tuple[Subgoal, bool]], grid: GridConfig) -> np.ndarray:
    h = empty_history(grid)
    for g, ok in history:
        if ok and not g.is_stop:
            h = update_history_tensor(h, g)
    return h


class TemplatePolicy:
    """Deterministic baseline policy: walk the task template, retrying failures.

    A failed step is re-emitted up to `retry_budget` times, then tried once
    with the argument's alternate class, then the episode is stopped.
    """

    def __init__(self, grid: GridConfig, vocab: Vocabulary, templates: dict | None = None, retry_budget: int = 3):
        self.grid = grid
        self.vocab = vocab
        self.templates = templates
        self.retry_budget = retry_budget

    def step_for(self, task: TaskSpec, history: list[tuple[Subgoal, bool]]):
        plan = plan_subgoals(task, self.templates)
        k = sum(1 for _, ok in history if ok)
        if k >= len(plan):
            return SubgoalType.STOP, None
        stype, arg = plan[k]
        fails = 0
        for _, ok in reversed(history):
            if ok:
                break
            fails += 1
        if fails <= self.retry_budget:
            return stype, arg
        if fails == self.retry_budget + 1 and arg is not None:
            alt = self.vocab.alternate(arg)
            if alt is not None:
                return stype, alt
        return SubgoalType.STOP, None

    def next(self, task: TaskSpec, state: StateRepr, history: list[tuple[Subgoal, bool]], rng=None) -> Subgoal:
        stype, arg = self.step_for(task, history)
        if stype is SubgoalType.STOP:
            return Subgoal.stop(self.grid)
        arg_idx = self.grid.class_index(arg)
        mask = self.ground(task, state, history, stype, arg_idx)
        return Subgoal(stype, arg_idx, mask)

    def ground(self, task: TaskSpec, state: StateRepr, history, stype: SubgoalType, arg_idx: int) -> np.ndarray:
        h = history_tensor_from(history, self.grid)
        exclude = None
        if stype is SubgoalType.PICKUP and task.receptacle_class is not None:
            # leave objects alone once they have been delivered to the goal receptacle
            goal_r = self.grid.class_index(task.receptacle_class)
            delivered = [g for g, ok in history if ok and g.stype is SubgoalType.PUT and g.arg_class == goal_r]
            if delivered:
                exclude = np.zeros((self.grid.dims_x, self.grid.dims_y), dtype=bool)
                for g in delivered:
                    exclude |= (g.mask > PRESENCE_THRESHOLD).any(axis=2)
        return select_instance_mask(state.semantic, arg_idx, h, stype, state.pose, exclude=exclude)
