"""The ten benchmark tasks: seeded initial-state distributions, per-episode
reward accounting, termination rules, and program evaluation.

Every task accrues return monotonically within an episode (ratios of
achieved units over total units, or one-off goal rewards), so ending an
episode early can never increase its return.  StairClimber is the one task
with a negative outcome: leaving the stair band (or crashing, in the
crashable variant) scores -1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _exec, dsl, karel
from .karel import Direction, ExecLimits, WorldState

TASK_NAMES = ("stairclimber", "maze", "topoff", "fourcorners", "harvester",
              "cleanhouse", "doorkey", "onestroke", "seeder", "snake")

_TASK_SIZES = {
    "stairclimber": (12, 12),
    "maze": (8, 8),
    "topoff": (12, 12),
    "fourcorners": (12, 12),
    "harvester": (8, 8),
    "cleanhouse": (14, 22),
    "doorkey": (8, 8),
    "onestroke": (8, 8),
    "seeder": (8, 8),
    "snake": (8, 8),
}

_TASK_IDS = {
    "stairclimber": _exec.T_STAIR,
    "maze": _exec.T_MAZE,
    "topoff": _exec.T_TOPOFF,
    "fourcorners": _exec.T_CORNERS,
    "harvester": _exec.T_HARVEST,
    "cleanhouse": _exec.T_CLEAN,
    "doorkey": _exec.T_DOORKEY,
    "onestroke": _exec.T_ONESTROKE,
    "seeder": _exec.T_SEEDER,
    "snake": _exec.T_SNAKE,
}

# tasks whose return is achieved units / total units
_COUNTING = {"topoff", "fourcorners", "harvester", "cleanhouse", "onestroke",
             "seeder", "snake"}

SNAKE_TARGET = 20


@dataclass(frozen=True)
class TaskSpec:
    name: str
    height: int
    width: int
    crashable: bool = False


@dataclass(frozen=True)
class EpisodeResult:
    ret: float
    steps: int
    terminal: karel.Terminal


def make_task(name: str, crashable: bool = False) -> TaskSpec:
    if name not in _TASK_SIZES:
        raise ValueError(f"unknown task {name!r}; choose from {TASK_NAMES}")
    h, w = _TASK_SIZES[name]
    return TaskSpec(name, h, w, crashable)


def _empty_world(h: int, w: int) -> tuple:
    walls = np.zeros((h, w), dtype=np.uint8)
    walls[0, :] = walls[-1, :] = 1
    walls[:, 0] = walls[:, -1] = 1
    markers = np.zeros((h, w), dtype=np.int16)
    return walls, markers


# ---------------------------------------------------------------------------
# initial-state distributions

def _init_stairclimber(rng) -> WorldState:
    h = w = 12
    walls, markers = _empty_world(h, w)
    for c in range(1, 11):
        walls[12 - c:11, c] = 1
    # the walkable band: each stair tread plus the cell above it
    path = []
    for c in range(1, 11):
        path.append((11 - c, c))
        if 10 - c >= 1:
            path.append((10 - c, c))
    band = np.zeros((h, w), dtype=np.uint8)
    for r, c in path:
        band[r, c] = 1
    i = int(rng.integers(0, len(path) - 1))
    j = int(rng.integers(i + 1, len(path)))
    markers[path[j]] = 1
    ar, ac = path[i]
    return WorldState(walls, markers, ar, ac, Direction.EAST,
                      extra={"goal": path[j], "band": band})


def _init_maze(rng) -> WorldState:
    h = w = 8
    walls = np.ones((h, w), dtype=np.uint8)
    markers = np.zeros((h, w), dtype=np.int16)
    # depth-first backtracker over the odd-coordinate cell lattice
    cells = [(r, c) for r in range(1, h - 1, 2) for c in range(1, w - 1, 2)]
    start = cells[int(rng.integers(len(cells)))]
    walls[start] = 0
    stack = [start]
    while stack:
        r, c = stack[-1]
        options = []
        for dr, dc in ((-2, 0), (2, 0), (0, -2), (0, 2)):
            nr, nc = r + dr, c + dc
            if 1 <= nr <= h - 2 and 1 <= nc <= w - 2 and walls[nr, nc]:
                options.append((nr, nc))
        if options:
            nr, nc = options[int(rng.integers(len(options)))]
            walls[(r + nr) // 2, (c + nc) // 2] = 0
            walls[nr, nc] = 0
            stack.append((nr, nc))
        else:
            stack.pop()
    clear = np.argwhere(walls == 0)
    pick = rng.permutation(len(clear))
    ar, ac = (int(x) for x in clear[pick[0]])
    gr, gc = (int(x) for x in clear[pick[1]])
    markers[gr, gc] = 1
    return WorldState(walls, markers, ar, ac,
                      Direction(int(rng.integers(4))),
                      extra={"goal": (gr, gc)})


def _init_topoff(rng) -> WorldState:
    h = w = 12
    walls, markers = _empty_world(h, w)
    while True:
        marked = rng.random(10) < 0.5
        if marked.any():
            break
    markers[10, 1:11] = marked.astype(np.int16)
    return WorldState(walls, markers, 10, 1, Direction.EAST)


def _init_fourcorners(rng) -> WorldState:
    h = w = 12
    walls, markers = _empty_world(h, w)
    col = int(rng.integers(1, 11))
    return WorldState(walls, markers, 10, col, Direction.EAST)


def _init_harvester(rng) -> WorldState:
    h = w = 8
    walls, markers = _empty_world(h, w)
    markers[1:7, 1:7] = 1
    col = int(rng.integers(1, 7))
    return WorldState(walls, markers, 6, col, Direction.EAST)


CLEANHOUSE_LAYOUT = """\
14 22
######################
#>........#..........#
#.........#..........#
#.....##..#...####...#
#.....##..#...#......#
#.........#...#..##..#
####.######...#..##..#
#.........#...#......#
#.........#...########
#...####..#..........#
#...#..#..#..........#
#...#..#.............#
#....................#
######################
"""


def _init_cleanhouse(rng) -> WorldState:
    world = karel.parse_map(CLEANHOUSE_LAYOUT)
    walls = world.walls
    candidates = []
    for r in range(1, world.height - 1):
        for c in range(1, world.width - 1):
            if walls[r, c] or (r, c) == (world.agent_row, world.agent_col):
                continue
            if (walls[r - 1, c] or walls[r + 1, c] or walls[r, c - 1]
                    or walls[r, c + 1]):
                candidates.append((r, c))
    chosen = rng.choice(len(candidates), size=10, replace=False)
    for idx in chosen:
        world.markers[candidates[int(idx)]] = 1
    return world


def _init_doorkey(rng) -> WorldState:
    h = w = 8
    walls, markers = _empty_world(h, w)
    walls[1:7, 4] = 1
    door = (int(rng.integers(1, 7)), 4)
    left = [(r, c) for r in range(1, 7) for c in range(1, 4)]
    right = [(r, c) for r in range(1, 7) for c in range(5, 7)]
    key = left[int(rng.integers(len(left)))]
    while True:
        agent = left[int(rng.integers(len(left)))]
        if agent != key:
            break
    goal = right[int(rng.integers(len(right)))]
    markers[key] = 1
    markers[goal] = 1
    return WorldState(walls, markers, agent[0], agent[1],
                      Direction(int(rng.integers(4))),
                      extra={"key": key, "goal": goal, "door": door})


def _init_open_8x8(rng) -> WorldState:
    h = w = 8
    walls, markers = _empty_world(h, w)
    r = int(rng.integers(1, 7))
    c = int(rng.integers(1, 7))
    return WorldState(walls, markers, r, c, Direction(int(rng.integers(4))))


def _init_snake(rng) -> WorldState:
    world = _init_open_8x8(rng)
    while True:
        food = (int(rng.integers(1, 7)), int(rng.integers(1, 7)))
        if food != (world.agent_row, world.agent_col):
            break
    world.markers[food] = 1
    world.extra = {"food": food,
                   "snake_seed": int(rng.integers(1, 2 ** 62))}
    return world


_INITIALIZERS = {
    "stairclimber": _init_stairclimber,
    "maze": _init_maze,
    "topoff": _init_topoff,
    "fourcorners": _init_fourcorners,
    "harvester": _init_harvester,
    "cleanhouse": _init_cleanhouse,
    "doorkey": _init_doorkey,
    "onestroke": _init_open_8x8,
    "seeder": _init_open_8x8,
    "snake": _init_snake,
}


def sample_initial(task: TaskSpec, seed: int, index: int) -> WorldState:
    """Draw the index-th initial state of the task's seeded distribution;
    fixed (task, seed, index) always gives the identical state."""
    rng = np.random.default_rng((_TASK_IDS[task.name], seed, index))
    return _INITIALIZERS[task.name](rng)


def initial_states(task: TaskSpec, seed: int, n: int) -> list:
    return [sample_initial(task, seed, i) for i in range(n)]


# ---------------------------------------------------------------------------
# rollouts

def _make_binding(task: TaskSpec, w: WorldState) -> karel.TaskBinding:
    h, wd = w.walls.shape
    aux = np.zeros((h, wd), dtype=np.uint8)
    tstate = np.zeros(_exec.TS_SIZE, dtype=np.int64)
    trng = np.zeros(1, dtype=np.uint64)
    blocks = False
    name = task.name
    if name == "stairclimber":
        aux[:] = w.extra["band"]
        tstate[_exec.TS_GOAL_R], tstate[_exec.TS_GOAL_C] = w.extra["goal"]
    elif name == "maze":
        tstate[_exec.TS_GOAL_R], tstate[_exec.TS_GOAL_C] = w.extra["goal"]
    elif name in ("topoff", "harvester", "cleanhouse"):
        aux[w.markers > 0] = 1
        tstate[_exec.TS_TOTAL] = int((w.markers > 0).sum())
    elif name == "fourcorners":
        tstate[_exec.TS_TOTAL] = 4
    elif name == "doorkey":
        tstate[_exec.TS_KEY_R], tstate[_exec.TS_KEY_C] = w.extra["key"]
        tstate[_exec.TS_GOAL_R], tstate[_exec.TS_GOAL_C] = w.extra["goal"]
        tstate[_exec.TS_DOOR_R], tstate[_exec.TS_DOOR_C] = w.extra["door"]
    elif name == "onestroke":
        aux[w.agent_row, w.agent_col] = 1
        tstate[_exec.TS_PROG] = 1
        tstate[_exec.TS_TOTAL] = int((w.walls == 0).sum())
        blocks = True
    elif name == "seeder":
        tstate[_exec.TS_TOTAL] = int((w.walls == 0).sum())
    elif name == "snake":
        aux[w.agent_row, w.agent_col] = 1
        tstate[_exec.TS_TOTAL] = SNAKE_TARGET
        tstate[_exec.TS_LEN] = 1
        tstate[_exec.TS_QH] = 1
        tstate[_exec.TS_FOOD_R], tstate[_exec.TS_FOOD_C] = w.extra["food"]
        trng[0] = w.extra["snake_seed"]
        blocks = True
    binding = karel.TaskBinding(_TASK_IDS[name], aux, tstate, trng, blocks)
    if name == "snake":
        binding.queue_rows[0] = w.agent_row
        binding.queue_cols[0] = w.agent_col
    return binding


def rollout(task: TaskSpec, program: dsl.Program, s0: WorldState,
            limits: ExecLimits = karel.DEFAULT_LIMITS,
            compiled=None) -> EpisodeResult:
    """One episode of program on s0 under the task's rewards."""
    binding = _make_binding(task, s0)
    traj, _ = karel.run_episode(program, s0, limits, task.crashable, binding,
                                compiled=compiled)
    if task.name in _COUNTING:
        ret = binding.state[_exec.TS_PROG] / binding.state[_exec.TS_TOTAL]
    else:
        ret = binding.reward
    return EpisodeResult(float(ret), len(traj), traj.terminal)


class Evaluator:
    """Scores programs as the mean return over a fixed state set.

    The states are packed into batch arrays once, and each call runs all
    episodes inside a single jitted loop over reused work buffers -- the
    fast path for search, where one candidate is scored over the whole
    set.  Instances are not thread-safe; give each worker its own.
    """

    def __init__(self, task: TaskSpec, states,
                 limits: ExecLimits = karel.DEFAULT_LIMITS):
        if not states:
            raise ValueError("need at least one initial state")
        self.task = task
        self.limits = limits
        h, w = states[0].walls.shape
        n = len(states)
        self._walls = np.empty((n, h, w), dtype=np.uint8)
        self._markers = np.empty((n, h, w), dtype=np.int16)
        self._aux = np.empty((n, h, w), dtype=np.uint8)
        self._agents = np.empty((n, 3), dtype=np.int64)
        self._tstate = np.empty((n, _exec.TS_SIZE), dtype=np.int64)
        self._trng = np.empty(n, dtype=np.uint64)
        self._qr = np.empty((n, 64), dtype=np.int32)
        self._qc = np.empty((n, 64), dtype=np.int32)
        for i, s0 in enumerate(states):
            if s0.walls.shape != (h, w):
                raise ValueError("states must share one grid size")
            binding = _make_binding(task, s0)
            self._walls[i] = s0.walls
            self._markers[i] = s0.markers
            self._aux[i] = binding.aux
            self._agents[i] = (s0.agent_row, s0.agent_col, int(s0.agent_dir))
            self._tstate[i] = binding.state
            self._trng[i] = binding.rng_state[0]
            self._qr[i] = binding.queue_rows
            self._qc[i] = binding.queue_cols
        self._blocks = _make_binding(task, states[0]).blocks
        self._counting = task.name in _COUNTING
        self._work_walls = np.empty((h, w), dtype=np.uint8)
        self._work_markers = np.empty((h, w), dtype=np.int16)
        self._work_aux = np.empty((h, w), dtype=np.uint8)
        self._actions = np.empty(limits.max_actions, dtype=np.int8)
        self._rets = np.empty(n, dtype=np.float64)

    def __call__(self, program: dsl.Program) -> float:
        compiled = _exec.compile_program(program)
        while_last = np.empty(max(compiled.n_whiles, 1), dtype=np.int64)
        rstack = np.zeros(compiled.n_repeats + 1, dtype=np.int32)
        total = _exec.eval_batch(
            compiled.code, self._walls, self._markers, self._agents,
            self._aux, self._tstate, self._trng, self._qr, self._qc,
            self.task.crashable, self.limits.max_actions,
            self.limits.max_ticks, _TASK_IDS[self.task.name], self._blocks,
            self._counting, self._work_walls, self._work_markers,
            self._work_aux, self._actions, while_last, rstack, self._rets)
        return total / len(self._rets)

    def per_state(self) -> np.ndarray:
        """Returns of the most recent call, in state order."""
        return self._rets.copy()


def evaluate(task: TaskSpec, program: dsl.Program, states,
             limits: ExecLimits = karel.DEFAULT_LIMITS) -> float:
    """Mean rollout return over a nonempty state set."""
    return Evaluator(task, states, limits)(program)
