from pathlib import Path

import numpy as np
import pytest

from voxagent.core import GridConfig
from voxagent.hlc import Vocabulary
from voxagent.sim import load_scene, reference_scenes

# criterion name -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def grid():
    return GridConfig.from_table()


@pytest.fixture(scope="session")
def small_grid(grid):
    return grid.with_dims(8, 8, 6)


@pytest.fixture(scope="session")
def vocab(grid):
    return Vocabulary.load(grid.class_names)


@pytest.fixture(scope="session")
def scenes():
    return {p.stem: p for p in reference_scenes()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ROOM = """
grid 10 10 8 0.25
floor 0 0 0 9 9 0
wall 0 0 1 9 0 6
wall 0 9 1 9 9 6
wall 0 0 1 0 9 6
wall 9 0 1 9 9 6
object table1 DiningTable 5 6 1 7 7 3
object apple1 Apple 6 6 4 in=table1
object counter1 CounterTop 1 6 1 2 8 3
agent 4 3 N 30
task PickAndPlace object=Apple receptacle=CounterTop
"""


@pytest.fixture
def room(grid):
    return load_scene(ROOM, grid=grid, name="room")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


def data_path(*parts) -> Path:
    return Path(__file__).parent.joinpath(*parts)
