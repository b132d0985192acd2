"""Deterministic Karel grid world: state, percepts, action semantics, random
map generation, the map text format, and the resumable program interpreter.

Maps are wall-enclosed; the crashable flag decides whether invalid primitive
actions (blocked moves, marker over/underflow) are silent no-ops or end the
episode.  Episodes are pure functions of their inputs.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

from . import _exec, dsl

MARKER_CAP = 10


class Direction(IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))

_AGENT_CHARS = {"^": Direction.NORTH, ">": Direction.EAST,
                "v": Direction.SOUTH, "<": Direction.WEST}
_CHARS_BY_DIR = {d: ch for ch, d in _AGENT_CHARS.items()}


class InvalidConfig(ValueError):
    pass


@dataclass
class WorldState:
    """Grid state: walls, marker counts, agent pose, crash flag, and an
    ``extra`` payload for task attachments (goal cells, stair band, ...).

    Treat instances as values: episode execution always works on a copy.
    """

    walls: np.ndarray          # uint8, 1 = wall
    markers: np.ndarray        # int16, 0..MARKER_CAP
    agent_row: int
    agent_col: int
    agent_dir: Direction
    crashed: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.walls.shape[0]

    @property
    def width(self) -> int:
        return self.walls.shape[1]

    def copy(self) -> "WorldState":
        return WorldState(self.walls.copy(), self.markers.copy(),
                          self.agent_row, self.agent_col, self.agent_dir,
                          self.crashed, copy.deepcopy(self.extra))

    def validate(self) -> None:
        h, w = self.walls.shape
        if self.markers.shape != (h, w):
            raise ValueError("marker grid shape mismatch")
        if not (self.walls[0, :].all() and self.walls[-1, :].all()
                and self.walls[:, 0].all() and self.walls[:, -1].all()):
            raise ValueError("map border must be walls")
        if not (0 <= self.agent_row < h and 0 <= self.agent_col < w):
            raise ValueError("agent out of bounds")
        if self.walls[self.agent_row, self.agent_col]:
            raise ValueError("agent inside a wall")
        if self.markers.min() < 0 or self.markers.max() > MARKER_CAP:
            raise ValueError(f"marker counts must lie in 0..{MARKER_CAP}")


def _cell_clear(w: WorldState, r: int, c: int) -> bool:
    if not (0 <= r < w.height and 0 <= c < w.width):
        return False
    if w.walls[r, c]:
        return False
    virtual = w.extra.get("virtual_walls")
    if virtual is not None and virtual[r, c]:
        return False
    return True


def perceive(w: WorldState, percept: dsl.Percept) -> bool:
    """Evaluate one Boolean percept.  Clearness checks honor task virtual
    walls published under ``extra["virtual_walls"]``."""
    if percept is dsl.Percept.MARKERS_PRESENT:
        return bool(w.markers[w.agent_row, w.agent_col] > 0)
    if percept is dsl.Percept.NO_MARKERS_PRESENT:
        return bool(w.markers[w.agent_row, w.agent_col] == 0)
    if percept is dsl.Percept.FRONT_IS_CLEAR:
        d = w.agent_dir
    elif percept is dsl.Percept.LEFT_IS_CLEAR:
        d = Direction((w.agent_dir + 3) % 4)
    else:
        d = Direction((w.agent_dir + 1) % 4)
    dr, dc = DELTAS[d]
    return _cell_clear(w, w.agent_row + dr, w.agent_col + dc)


def apply_action(w: WorldState, a: dsl.Action, crashable: bool = False) -> WorldState:
    """One primitive action on a copy of w.

    An invalid action (blocked move, put at the marker cap, pick on an empty
    cell) leaves the state unchanged in standard mode and sets ``crashed``
    in crashable mode.
    """
    out = w.copy()
    valid = True
    if a is dsl.Action.MOVE:
        dr, dc = DELTAS[w.agent_dir]
        nr, nc = w.agent_row + dr, w.agent_col + dc
        if _cell_clear(w, nr, nc):
            out.agent_row, out.agent_col = nr, nc
        else:
            valid = False
    elif a is dsl.Action.TURN_LEFT:
        out.agent_dir = Direction((w.agent_dir + 3) % 4)
    elif a is dsl.Action.TURN_RIGHT:
        out.agent_dir = Direction((w.agent_dir + 1) % 4)
    elif a is dsl.Action.PUT_MARKER:
        if w.markers[w.agent_row, w.agent_col] < MARKER_CAP:
            out.markers[w.agent_row, w.agent_col] += 1
        else:
            valid = False
    else:
        if w.markers[w.agent_row, w.agent_col] > 0:
            out.markers[w.agent_row, w.agent_col] -= 1
        else:
            valid = False
    if not valid and crashable:
        out.crashed = True
    return out


# ---------------------------------------------------------------------------
# episodes

@dataclass(frozen=True)
class ExecLimits:
    max_actions: int = 10_000
    max_ticks: int = 1_000_000

    def __post_init__(self):
        if self.max_actions < 1:
            raise ValueError("max_actions must be >= 1")
        if self.max_ticks < self.max_actions:
            raise ValueError("max_ticks must be >= max_actions")


DEFAULT_LIMITS = ExecLimits()


class Terminal(Enum):
    PROGRAM_ENDED = "ProgramEnded"
    ACTION_TIMEOUT = "ActionTimeout"
    TICK_TIMEOUT = "TickTimeout"
    CRASHED = "Crashed"
    TASK_TERMINATED = "TaskTerminated"


_TERMINALS = tuple(Terminal)


@dataclass
class Trajectory:
    """Attempted-action sequence of one episode, in execution order.

    ``actions`` holds int8 codes in ``dsl.ACTIONS`` order; invalid no-op
    attempts are recorded too and count against the action limit.
    """

    actions: np.ndarray
    terminal: Terminal

    def to_actions(self) -> list:
        return [dsl.ACTIONS[i] for i in self.actions]

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class TaskBinding:
    """Episode hooks for the executor: task code plus scratch state.

    ``aux`` is a per-cell scratch grid (stair band, harvested flags, snake
    body, ...), ``state`` the int64 task-state vector, ``blocks`` whether
    aux==1 cells block movement and perception.  After an episode,
    ``reward`` holds the accumulated event rewards.
    """

    task_id: int
    aux: np.ndarray
    state: np.ndarray
    rng_state: np.ndarray
    blocks: bool
    queue_rows: np.ndarray = None
    queue_cols: np.ndarray = None
    reward: float = 0.0

    def __post_init__(self):
        if self.queue_rows is None:
            self.queue_rows = np.zeros(64, dtype=np.int32)
        if self.queue_cols is None:
            self.queue_cols = np.zeros(64, dtype=np.int32)


_NO_AUX = np.zeros((1, 1), dtype=np.uint8)
_NO_QUEUE = np.zeros(64, dtype=np.int32)


def run_episode(program: dsl.Program, world: WorldState,
                limits: ExecLimits = DEFAULT_LIMITS, crashable: bool = False,
                task: TaskBinding | None = None, compiled=None):
    """Run program from world until program end, a limit, a crash, or task
    termination.  Returns (Trajectory, final WorldState); the inputs are
    not modified.

    ``compiled`` short-circuits program compilation when the caller runs
    the same program over many states.
    """
    # the episode owns its grids; extra is never mutated, so share it
    w = WorldState(world.walls.copy(), world.markers.copy(), world.agent_row,
                   world.agent_col, world.agent_dir, world.crashed, world.extra)
    if compiled is None:
        compiled = _exec.compile_program(program)
    agent = np.array([w.agent_row, w.agent_col, int(w.agent_dir)], dtype=np.int64)
    actions_out = np.empty(limits.max_actions, dtype=np.int8)
    while_last = np.full(max(compiled.n_whiles, 1), -1, dtype=np.int64)
    rstack = np.zeros(compiled.n_repeats + 1, dtype=np.int32)
    if task is None:
        task_id = _exec.T_NONE
        aux = _NO_AUX
        tstate = np.zeros(_exec.TS_SIZE, dtype=np.int64)
        trng = np.zeros(1, dtype=np.uint64)
        blocks = False
        qr = qc = _NO_QUEUE
    else:
        task_id = task.task_id
        aux = task.aux
        tstate = task.state
        trng = task.rng_state
        blocks = task.blocks
        qr = task.queue_rows
        qc = task.queue_cols
    n_act, term_code, reward = _exec.run_core(
        compiled.code, w.walls, w.markers, agent, crashable,
        limits.max_actions, limits.max_ticks, actions_out, while_last,
        rstack, task_id, aux, tstate, trng, blocks, qr, qc)
    if task is not None:
        task.reward = reward
    w.agent_row = int(agent[0])
    w.agent_col = int(agent[1])
    w.agent_dir = Direction(int(agent[2]))
    w.crashed = term_code == _exec.TERM_CRASH
    traj = Trajectory(actions_out[:n_act].copy(), _TERMINALS[term_code])
    return traj, w


# ---------------------------------------------------------------------------
# random maps

def random_world(rng: np.random.Generator, height: int = 8, width: int = 8,
                 wall_density: float = 0.1, marker_density: float = 0.1,
                 max_attempts: int = 100) -> WorldState:
    """Wall-enclosed map with Bernoulli interior walls and 0/1 markers, and
    the agent on a uniform clear cell facing a uniform direction."""
    if height < 3 or width < 3:
        raise InvalidConfig("maps need at least one interior cell")
    for density in (wall_density, marker_density):
        if not 0.0 <= density <= 1.0:
            raise InvalidConfig("densities must lie in [0, 1]")
    if wall_density >= 1.0:
        raise InvalidConfig("wall density 1 leaves no clear cell")
    for _ in range(max_attempts):
        walls = np.zeros((height, width), dtype=np.uint8)
        walls[0, :] = walls[-1, :] = 1
        walls[:, 0] = walls[:, -1] = 1
        interior = rng.random((height - 2, width - 2))
        walls[1:-1, 1:-1] = interior < wall_density
        clear = np.argwhere(walls == 0)
        if len(clear) == 0:
            continue
        markers = np.zeros((height, width), dtype=np.int16)
        marks = rng.random((height - 2, width - 2)) < marker_density
        markers[1:-1, 1:-1] = marks.astype(np.int16)
        markers[walls == 1] = 0
        r, c = clear[rng.integers(len(clear))]
        return WorldState(walls, markers, int(r), int(c),
                          Direction(int(rng.integers(4))))
    raise InvalidConfig("could not place an agent; map keeps filling up")


# ---------------------------------------------------------------------------
# map text format

_MARKER_CHARS = {i: str(i) for i in range(1, 10)}
_MARKER_CHARS[10] = "A"


def parse_map(text: str) -> WorldState:
    """Map text: first line "H W", then H rows of W characters.

    ``#`` wall, ``.`` empty, digits and ``A`` marker counts, ``^>v<`` the
    agent (with direction) on an empty cell.
    """
    lines = [line for line in text.splitlines() if line.strip()]
    h, w = (int(x) for x in lines[0].split())
    rows = lines[1:]
    if len(rows) != h or any(len(row) != w for row in rows):
        raise ValueError(f"expected {h} rows of {w} characters")
    walls = np.zeros((h, w), dtype=np.uint8)
    markers = np.zeros((h, w), dtype=np.int16)
    agent = None
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch == "#":
                walls[r, c] = 1
            elif ch == ".":
                pass
            elif ch in _AGENT_CHARS:
                if agent is not None:
                    raise ValueError("more than one agent")
                agent = (r, c, _AGENT_CHARS[ch])
            elif ch == "A":
                markers[r, c] = 10
            elif ch.isdigit() and ch != "0":
                markers[r, c] = int(ch)
            else:
                raise ValueError(f"bad map character {ch!r} at {(r, c)}")
    if agent is None:
        raise ValueError("map has no agent")
    world = WorldState(walls, markers, agent[0], agent[1], agent[2])
    world.validate()
    return world


def format_map(w: WorldState) -> str:
    """Inverse of parse_map.  Markers under the agent are not representable
    and render as the agent character."""
    lines = [f"{w.height} {w.width}"]
    for r in range(w.height):
        row = []
        for c in range(w.width):
            if (r, c) == (w.agent_row, w.agent_col):
                row.append(_CHARS_BY_DIR[Direction(w.agent_dir)])
            elif w.walls[r, c]:
                row.append("#")
            elif w.markers[r, c] > 0:
                row.append(_MARKER_CHARS[int(w.markers[r, c])])
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# golden-trajectory fixtures

def golden_record(program: dsl.Program, world: WorldState,
                  trajectory: Trajectory) -> str:
    """One JSON line: {program, map, actions[], terminal}."""
    return json.dumps({
        "program": dsl.print_program(program),
        "map": format_map(world),
        "actions": [a.value for a in trajectory.to_actions()],
        "terminal": trajectory.terminal.value,
    }, sort_keys=True)


def check_golden(line: str, limits: ExecLimits = DEFAULT_LIMITS) -> bool:
    """Re-run a golden record; True iff the trajectory reproduces."""
    rec = json.loads(line)
    program = dsl.parse_program(rec["program"])
    world = parse_map(rec["map"])
    traj, _ = run_episode(program, world, limits)
    return ([a.value for a in traj.to_actions()] == rec["actions"]
            and traj.terminal.value == rec["terminal"])
