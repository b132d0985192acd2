"""Bytecode compiler and the jitted episode executor.

Programs compile to a flat instruction array driven by an explicit machine:
a program counter plus a repeat-counter stack, so execution is resumable
after every action and never recurses.  Task semantics run inline in the
executor, keyed by a small integer, with per-task scratch kept in one aux
grid and a flat int64 state vector.  This keeps the whole episode loop
inside one nopython function.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numba import njit

from . import dsl

# opcodes; rows are (op, arg1, arg2, target, extra)
OP_HALT = 0
OP_ACT = 1
OP_JMP = 2
OP_TEST = 3
OP_WTEST = 4
OP_RPUSH = 5
OP_RTEST = 6

# actions / percepts follow dsl enum declaration order
A_MOVE, A_TURN_LEFT, A_TURN_RIGHT, A_PUT, A_PICK = range(5)
P_FRONT, P_LEFT, P_RIGHT, P_MARKERS, P_NO_MARKERS = range(5)

# terminal codes
TERM_END = 0
TERM_ACTION = 1
TERM_TICK = 2
TERM_CRASH = 3
TERM_TASK = 4

# task codes
T_NONE = 0
T_STAIR = 1
T_MAZE = 2
T_TOPOFF = 3
T_CORNERS = 4
T_HARVEST = 5
T_CLEAN = 6
T_DOORKEY = 7
T_ONESTROKE = 8
T_SEEDER = 9
T_SNAKE = 10

# task state vector slots
TS_TOTAL = 0      # units that make up a full return
TS_PROG = 1       # units achieved so far (monotone)
TS_KEY = 2
TS_GOAL_R = 3
TS_GOAL_C = 4
TS_FOOD_R = 5
TS_FOOD_C = 6
TS_LEN = 7        # snake target length
TS_DOOR_R = 8
TS_DOOR_C = 9
TS_CORNERS = 10   # bitmask of corners that have held exactly one marker
TS_QH = 11        # snake body ring-buffer head
TS_QT = 12        # snake body ring-buffer tail
TS_KEY_R = 13
TS_KEY_C = 14
TS_SIZE = 16

MARKER_CAP = 10

_DR = np.array([-1, 0, 1, 0], dtype=np.int64)  # N E S W
_DC = np.array([0, 1, 0, -1], dtype=np.int64)


class Compiled:
    __slots__ = ("code", "n_whiles", "n_repeats")

    def __init__(self, code, n_whiles, n_repeats):
        self.code = code
        self.n_whiles = n_whiles
        self.n_repeats = n_repeats


def _emit(stmt, code, counts):
    if isinstance(stmt, dsl.Act):
        code.append([OP_ACT, dsl.ACTION_INDEX[stmt.action], 0, 0, 0])
    elif isinstance(stmt, dsl.Seq):
        _emit(stmt.first, code, counts)
        _emit(stmt.second, code, counts)
    elif isinstance(stmt, dsl.If):
        test = len(code)
        code.append([OP_TEST, dsl.PERCEPT_INDEX[stmt.cond.percept],
                     int(stmt.cond.negated), 0, 0])
        _emit(stmt.body, code, counts)
        code[test][3] = len(code)
    elif isinstance(stmt, dsl.IfElse):
        test = len(code)
        code.append([OP_TEST, dsl.PERCEPT_INDEX[stmt.cond.percept],
                     int(stmt.cond.negated), 0, 0])
        _emit(stmt.then_body, code, counts)
        jmp = len(code)
        code.append([OP_JMP, 0, 0, 0, 0])
        code[test][3] = len(code)
        _emit(stmt.else_body, code, counts)
        code[jmp][3] = len(code)
    elif isinstance(stmt, dsl.While):
        loop_id = counts[0]
        counts[0] += 1
        head = len(code)
        code.append([OP_WTEST, dsl.PERCEPT_INDEX[stmt.cond.percept],
                     int(stmt.cond.negated), 0, loop_id])
        _emit(stmt.body, code, counts)
        code.append([OP_JMP, 0, 0, head, 0])
        code[head][3] = len(code)
    elif isinstance(stmt, dsl.Repeat):
        counts[1] += 1
        code.append([OP_RPUSH, stmt.count, 0, 0, 0])
        head = len(code)
        code.append([OP_RTEST, 0, 0, 0, 0])
        _emit(stmt.body, code, counts)
        code.append([OP_JMP, 0, 0, head, 0])
        code[head][3] = len(code)
    else:
        raise TypeError(f"not a statement: {stmt!r}")


@lru_cache(maxsize=8192)
def compile_program(program: dsl.Program) -> Compiled:
    code = []
    counts = [0, 0]
    _emit(program.body, code, counts)
    code.append([OP_HALT, 0, 0, 0, 0])
    return Compiled(np.array(code, dtype=np.int32), counts[0], counts[1])


@njit(cache=True, nogil=True, inline="always")
def _next_u64(x):
    x ^= x << np.uint64(13)
    x ^= x >> np.uint64(7)
    x ^= x << np.uint64(17)
    return x


@njit(cache=True, nogil=True, inline="always")
def _is_clear(walls, aux, blocks, h, w, r, c):
    if r < 0 or r >= h or c < 0 or c >= w:
        return False
    if walls[r, c] != 0:
        return False
    if blocks and aux[r, c] == 1:
        return False
    return True


@njit(cache=True, nogil=True)
def run_core(code, walls, markers, agent, crashable, max_actions, max_ticks,
             actions_out, while_last, rstack, task_id, aux, tstate, trng,
             blocks, qr, qc):
    """Execute one episode; returns (n_actions, terminal, reward).

    ``agent`` is (row, col, dir) and is updated in place, as are the grids
    and task scratch.  ``reward`` carries only the non-counting rewards
    (goal events and the stair fall); counting tasks report through
    ``tstate[TS_PROG] / tstate[TS_TOTAL]``.
    """
    h, w = walls.shape
    r = agent[0]
    c = agent[1]
    d = agent[2]
    pc = 0
    ticks = 0
    n_act = 0
    rsp = 0
    reward = 0.0
    terminal = TERM_END
    while True:
        if ticks >= max_ticks:
            terminal = TERM_TICK
            break
        ticks += 1
        op = code[pc, 0]
        if op == OP_ACT:
            if n_act >= max_actions:
                terminal = TERM_ACTION
                break
            act = code[pc, 1]
            actions_out[n_act] = act
            n_act += 1
            valid = True
            if act == A_MOVE:
                nr = r + _DR[d]
                nc = c + _DC[d]
                if nr < 0 or nr >= h or nc < 0 or nc >= w or walls[nr, nc] != 0:
                    valid = False
                elif blocks and aux[nr, nc] == 1:
                    # ran into a task obstacle (snake body, spent cell)
                    terminal = TERM_TASK
                    break
                else:
                    r = nr
                    c = nc
                    if task_id == T_STAIR:
                        if aux[r, c] == 0:
                            reward -= 1.0
                            terminal = TERM_TASK
                            break
                        if r == tstate[TS_GOAL_R] and c == tstate[TS_GOAL_C]:
                            reward += 1.0
                            terminal = TERM_TASK
                            break
                    elif task_id == T_MAZE:
                        if r == tstate[TS_GOAL_R] and c == tstate[TS_GOAL_C]:
                            reward += 1.0
                            terminal = TERM_TASK
                            break
                    elif task_id == T_DOORKEY:
                        if (tstate[TS_KEY] == 1 and r == tstate[TS_GOAL_R]
                                and c == tstate[TS_GOAL_C]):
                            reward += 0.5
                            terminal = TERM_TASK
                            break
                    elif task_id == T_ONESTROKE:
                        if aux[r, c] == 0:
                            aux[r, c] = 1
                            tstate[TS_PROG] += 1
                            if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                terminal = TERM_TASK
                                break
                    elif task_id == T_SNAKE:
                        qh = tstate[TS_QH]
                        qr[qh & 63] = r
                        qc[qh & 63] = c
                        tstate[TS_QH] = qh + 1
                        aux[r, c] = 1
                        # grow before trimming so the tail stays put on the
                        # collection tick
                        ate = (r == tstate[TS_FOOD_R] and c == tstate[TS_FOOD_C])
                        if ate:
                            tstate[TS_PROG] += 1
                            if markers[r, c] > 0:
                                markers[r, c] -= 1
                            if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                terminal = TERM_TASK
                                break
                            tstate[TS_LEN] += 1
                        while tstate[TS_QH] - tstate[TS_QT] > tstate[TS_LEN]:
                            qt = tstate[TS_QT]
                            aux[qr[qt & 63], qc[qt & 63]] = 0
                            tstate[TS_QT] = qt + 1
                        if ate:
                            # respawn the food on a uniform free cell
                            free = 0
                            for rr in range(h):
                                for cc in range(w):
                                    if walls[rr, cc] == 0 and aux[rr, cc] == 0:
                                        free += 1
                            if free == 0:
                                tstate[TS_FOOD_R] = -1
                                tstate[TS_FOOD_C] = -1
                            else:
                                s = _next_u64(trng[0])
                                trng[0] = s
                                k = np.int64(s % np.uint64(free))
                                for rr in range(h):
                                    for cc in range(w):
                                        if walls[rr, cc] == 0 and aux[rr, cc] == 0:
                                            if k == 0:
                                                tstate[TS_FOOD_R] = rr
                                                tstate[TS_FOOD_C] = cc
                                                if markers[rr, cc] < MARKER_CAP:
                                                    markers[rr, cc] += 1
                                            k -= 1
            elif act == A_TURN_LEFT:
                d = (d + 3) % 4
            elif act == A_TURN_RIGHT:
                d = (d + 1) % 4
            elif act == A_PUT:
                if markers[r, c] < MARKER_CAP:
                    markers[r, c] += 1
                    if task_id == T_SEEDER:
                        if aux[r, c] == 0:
                            aux[r, c] = 1
                            tstate[TS_PROG] += 1
                            if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                terminal = TERM_TASK
                                break
                    elif task_id == T_TOPOFF:
                        if aux[r, c] == 1 and markers[r, c] == 2:
                            aux[r, c] = 2
                            tstate[TS_PROG] += 1
                            if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                terminal = TERM_TASK
                                break
                    elif task_id == T_CORNERS:
                        if markers[r, c] == 1:
                            bit = -1
                            if r == 1 and c == 1:
                                bit = 0
                            elif r == 1 and c == w - 2:
                                bit = 1
                            elif r == h - 2 and c == 1:
                                bit = 2
                            elif r == h - 2 and c == w - 2:
                                bit = 3
                            if bit >= 0 and tstate[TS_CORNERS] & (1 << bit) == 0:
                                tstate[TS_CORNERS] |= 1 << bit
                                tstate[TS_PROG] += 1
                                if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                    terminal = TERM_TASK
                                    break
                else:
                    valid = False
            else:  # A_PICK
                if markers[r, c] > 0:
                    markers[r, c] -= 1
                    if task_id == T_HARVEST or task_id == T_CLEAN:
                        if aux[r, c] == 1:
                            aux[r, c] = 2
                            tstate[TS_PROG] += 1
                            if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                terminal = TERM_TASK
                                break
                    elif task_id == T_DOORKEY:
                        if (tstate[TS_KEY] == 0 and r == tstate[TS_KEY_R]
                                and c == tstate[TS_KEY_C]):
                            tstate[TS_KEY] = 1
                            reward += 0.5
                            walls[tstate[TS_DOOR_R], tstate[TS_DOOR_C]] = 0
                    elif task_id == T_TOPOFF:
                        if aux[r, c] == 1 and markers[r, c] == 2:
                            aux[r, c] = 2
                            tstate[TS_PROG] += 1
                            if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                terminal = TERM_TASK
                                break
                    elif task_id == T_CORNERS:
                        if markers[r, c] == 1:
                            bit = -1
                            if r == 1 and c == 1:
                                bit = 0
                            elif r == 1 and c == w - 2:
                                bit = 1
                            elif r == h - 2 and c == 1:
                                bit = 2
                            elif r == h - 2 and c == w - 2:
                                bit = 3
                            if bit >= 0 and tstate[TS_CORNERS] & (1 << bit) == 0:
                                tstate[TS_CORNERS] |= 1 << bit
                                tstate[TS_PROG] += 1
                                if tstate[TS_PROG] == tstate[TS_TOTAL]:
                                    terminal = TERM_TASK
                                    break
                else:
                    valid = False
            if not valid and crashable:
                terminal = TERM_CRASH
                if task_id == T_STAIR:
                    reward = -1.0
                break
            pc += 1
        elif op == OP_TEST or op == OP_WTEST:
            if op == OP_WTEST:
                loop_id = code[pc, 4]
                if while_last[loop_id] == n_act:
                    # a full loop pass without any action cannot change
                    # state: the program is spinning, forever
                    terminal = TERM_TICK
                    break
                while_last[loop_id] = n_act
            pid = code[pc, 1]
            if pid == P_MARKERS:
                v = markers[r, c] > 0
            elif pid == P_NO_MARKERS:
                v = markers[r, c] == 0
            else:
                if pid == P_FRONT:
                    td = d
                elif pid == P_LEFT:
                    td = (d + 3) % 4
                else:
                    td = (d + 1) % 4
                v = _is_clear(walls, aux, blocks, h, w, r + _DR[td], c + _DC[td])
            if code[pc, 2] == 1:
                v = not v
            if v:
                pc += 1
            else:
                if op == OP_WTEST:
                    while_last[code[pc, 4]] = -1
                pc = code[pc, 3]
        elif op == OP_JMP:
            pc = code[pc, 3]
        elif op == OP_RPUSH:
            rstack[rsp] = code[pc, 1]
            rsp += 1
            pc += 1
        elif op == OP_RTEST:
            if rstack[rsp - 1] == 0:
                rsp -= 1
                pc = code[pc, 3]
            else:
                rstack[rsp - 1] -= 1
                pc += 1
        else:  # OP_HALT
            break
    agent[0] = r
    agent[1] = c
    agent[2] = d
    return n_act, terminal, reward


@njit(cache=True, nogil=True)
def eval_batch(code, walls3, markers3, agents2, aux3, tstate2, trng1, qr2,
               qc2, crashable, max_actions, max_ticks, task_id, blocks,
               counting, work_walls, work_markers, work_aux, actions_buf,
               while_last, rstack, rets_out):
    """Run one program over a packed batch of initial states, reusing the
    work buffers; fills per-state returns and reports their sum."""
    n = walls3.shape[0]
    agent = np.empty(3, dtype=np.int64)
    tstate = np.empty(TS_SIZE, dtype=np.int64)
    trng = np.empty(1, dtype=np.uint64)
    qr = np.empty(64, dtype=np.int32)
    qc = np.empty(64, dtype=np.int32)
    total = 0.0
    for i in range(n):
        work_walls[:, :] = walls3[i]
        work_markers[:, :] = markers3[i]
        work_aux[:, :] = aux3[i]
        agent[:] = agents2[i]
        tstate[:] = tstate2[i]
        trng[0] = trng1[i]
        qr[:] = qr2[i]
        qc[:] = qc2[i]
        while_last[:] = -1
        for j in range(rstack.shape[0]):
            rstack[j] = 0
        _, _, reward = run_core(code, work_walls, work_markers, agent,
                                crashable, max_actions, max_ticks,
                                actions_buf, while_last, rstack, task_id,
                                work_aux, tstate, trng, blocks, qr, qc)
        if counting:
            ret = tstate[TS_PROG] / tstate[TS_TOTAL]
        else:
            ret = reward
        rets_out[i] = ret
        total += ret
    return total
