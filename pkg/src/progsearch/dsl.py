"""Karel DSL core: abstract syntax, token-text parsing and printing,
structural measures, and a constrained probabilistic program sampler.

Programs are immutable trees over five actions and five Boolean percepts.
The one-line token format looks like::

    DEF run m( WHILE c( frontIsClear c) w( move w) m)

Statement chaining is a binary ``Seq`` node internally, but parsing and
printing flatten chains, and :func:`equals` compares programs after
left-normalizing chains, so chain associativity is never observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

import numpy as np

REPEAT_MAX = 19


class Action(Enum):
    MOVE = "move"
    TURN_LEFT = "turnLeft"
    TURN_RIGHT = "turnRight"
    PUT_MARKER = "putMarker"
    PICK_MARKER = "pickMarker"


class Percept(Enum):
    FRONT_IS_CLEAR = "frontIsClear"
    LEFT_IS_CLEAR = "leftIsClear"
    RIGHT_IS_CLEAR = "rightIsClear"
    MARKERS_PRESENT = "markersPresent"
    NO_MARKERS_PRESENT = "noMarkersPresent"


ACTIONS = tuple(Action)
PERCEPTS = tuple(Percept)
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}
PERCEPT_INDEX = {h: i for i, h in enumerate(PERCEPTS)}
_ACTION_BY_TOKEN = {a.value: a for a in ACTIONS}
_PERCEPT_BY_TOKEN = {h.value: h for h in PERCEPTS}


@dataclass(frozen=True)
class Cond:
    percept: Percept
    negated: bool = False


@dataclass(frozen=True)
class Act:
    action: Action


@dataclass(frozen=True)
class While:
    cond: Cond
    body: "Stmt"


@dataclass(frozen=True)
class If:
    cond: Cond
    body: "Stmt"


@dataclass(frozen=True)
class IfElse:
    cond: Cond
    then_body: "Stmt"
    else_body: "Stmt"


@dataclass(frozen=True)
class Repeat:
    count: int
    body: "Stmt"

    def __post_init__(self):
        if not 0 <= self.count <= REPEAT_MAX:
            raise ValueError(f"repeat count {self.count} outside 0..{REPEAT_MAX}")


@dataclass(frozen=True)
class Seq:
    first: "Stmt"
    second: "Stmt"


Stmt = Union[While, If, IfElse, Repeat, Seq, Act]

CONTROL_NODES = (While, If, IfElse, Repeat)


@dataclass(frozen=True)
class Program:
    body: Stmt


# ---------------------------------------------------------------------------
# printing

def _cond_tokens(cond: Cond, out: list):
    if cond.negated:
        out.append("not(")
        out.append(cond.percept.value)
        out.append(")")
    else:
        out.append(cond.percept.value)


def _stmt_tokens(stmt: Stmt, out: list):
    if isinstance(stmt, Act):
        out.append(stmt.action.value)
    elif isinstance(stmt, Seq):
        _stmt_tokens(stmt.first, out)
        _stmt_tokens(stmt.second, out)
    elif isinstance(stmt, While):
        out.append("WHILE")
        out.append("c(")
        _cond_tokens(stmt.cond, out)
        out.append("c)")
        out.append("w(")
        _stmt_tokens(stmt.body, out)
        out.append("w)")
    elif isinstance(stmt, If):
        out.append("IF")
        out.append("c(")
        _cond_tokens(stmt.cond, out)
        out.append("c)")
        out.append("i(")
        _stmt_tokens(stmt.body, out)
        out.append("i)")
    elif isinstance(stmt, IfElse):
        out.append("IFELSE")
        out.append("c(")
        _cond_tokens(stmt.cond, out)
        out.append("c)")
        out.append("i(")
        _stmt_tokens(stmt.then_body, out)
        out.append("i)")
        out.append("ELSE")
        out.append("e(")
        _stmt_tokens(stmt.else_body, out)
        out.append("e)")
    elif isinstance(stmt, Repeat):
        out.append("REPEAT")
        out.append(f"R={stmt.count}")
        out.append("r(")
        _stmt_tokens(stmt.body, out)
        out.append("r)")
    else:
        raise TypeError(f"not a statement: {stmt!r}")


def program_tokens(p: Program) -> list:
    out = ["DEF", "run", "m("]
    _stmt_tokens(p.body, out)
    out.append("m)")
    return out


def print_program(p: Program) -> str:
    """Canonical single-space token text of a program."""
    return " ".join(program_tokens(p))


# ---------------------------------------------------------------------------
# parsing

class ParseError(ValueError):
    """Malformed token text.  Carries the failing token index and the set of
    token kinds that would have been accepted there."""

    def __init__(self, position: int, expected, found):
        self.position = position
        self.expected = frozenset(expected)
        self.found = found
        super().__init__(
            f"at token {position}: expected one of {sorted(self.expected)}, "
            f"found {found!r}"
        )


_STMT_STARTERS = {"WHILE", "IF", "IFELSE", "REPEAT"} | set(_ACTION_BY_TOKEN)


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, *expected):
        tok = self.peek()
        if tok is None or (expected and tok not in expected):
            raise ParseError(self.pos, expected or {"<token>"}, tok)
        self.pos += 1
        return tok

    def parse_program(self):
        self.take("DEF")
        self.take("run")
        self.take("m(")
        body = self.parse_chain("m)")
        self.take("m)")
        if self.pos != len(self.tokens):
            raise ParseError(self.pos, {"<end of program>"}, self.peek())
        return Program(body)

    def parse_chain(self, closer):
        """One statement block; chained statements fold left into Seq."""
        stmt = self.parse_stmt()
        while self.peek() in _STMT_STARTERS:
            stmt = Seq(stmt, self.parse_stmt())
        if self.peek() != closer:
            raise ParseError(self.pos, _STMT_STARTERS | {closer}, self.peek())
        return stmt

    def parse_stmt(self):
        tok = self.peek()
        if tok in _ACTION_BY_TOKEN:
            self.pos += 1
            return Act(_ACTION_BY_TOKEN[tok])
        if tok == "WHILE":
            self.pos += 1
            cond = self.parse_cond()
            self.take("w(")
            body = self.parse_chain("w)")
            self.take("w)")
            return While(cond, body)
        if tok == "IF":
            self.pos += 1
            cond = self.parse_cond()
            self.take("i(")
            body = self.parse_chain("i)")
            self.take("i)")
            return If(cond, body)
        if tok == "IFELSE":
            self.pos += 1
            cond = self.parse_cond()
            self.take("i(")
            then_body = self.parse_chain("i)")
            self.take("i)")
            self.take("ELSE")
            self.take("e(")
            else_body = self.parse_chain("e)")
            self.take("e)")
            return IfElse(cond, then_body, else_body)
        if tok == "REPEAT":
            self.pos += 1
            count = self.parse_count()
            self.take("r(")
            body = self.parse_chain("r)")
            self.take("r)")
            return Repeat(count, body)
        raise ParseError(self.pos, _STMT_STARTERS, tok)

    def parse_cond(self):
        self.take("c(")
        tok = self.peek()
        if tok == "not(":
            self.pos += 1
            percept = self.parse_percept()
            self.take(")")
            cond = Cond(percept, negated=True)
        else:
            cond = Cond(self.parse_percept())
        self.take("c)")
        return cond

    def parse_percept(self):
        tok = self.peek()
        if tok not in _PERCEPT_BY_TOKEN:
            raise ParseError(self.pos, set(_PERCEPT_BY_TOKEN), tok)
        self.pos += 1
        return _PERCEPT_BY_TOKEN[tok]

    def parse_count(self):
        tok = self.peek()
        if tok is None or not tok.startswith("R="):
            raise ParseError(self.pos, {"R=<n>"}, tok)
        try:
            count = int(tok[2:])
        except ValueError:
            raise ParseError(self.pos, {"R=<n>"}, tok) from None
        if not 0 <= count <= REPEAT_MAX:
            raise ParseError(self.pos, {f"R=0..R={REPEAT_MAX}"}, tok)
        self.pos += 1
        return count


def parse_program(text: str) -> Program:
    """Parse token text into a Program.  Chains fold left-associatively."""
    return _Parser(text.split()).parse_program()


# ---------------------------------------------------------------------------
# structural measures and constraints

def depth(p: Program) -> int:
    """Maximum nesting of control constructs on any path; Seq is transparent."""
    return _stmt_depth(p.body)


def _stmt_depth(stmt: Stmt) -> int:
    if isinstance(stmt, Act):
        return 0
    if isinstance(stmt, Seq):
        return max(_stmt_depth(stmt.first), _stmt_depth(stmt.second))
    if isinstance(stmt, IfElse):
        return 1 + max(_stmt_depth(stmt.then_body), _stmt_depth(stmt.else_body))
    return 1 + _stmt_depth(stmt.body)


def chain_width(p: Program) -> int:
    """Largest number of statements in any single flattened block."""
    return _stmt_chain(p.body)


def flatten_chain(stmt: Stmt) -> list:
    """Left-to-right list of the non-Seq statements of one block."""
    if isinstance(stmt, Seq):
        return flatten_chain(stmt.first) + flatten_chain(stmt.second)
    return [stmt]


def _stmt_chain(stmt: Stmt) -> int:
    block = flatten_chain(stmt)
    widest = len(block)
    for item in block:
        if isinstance(item, (While, If, Repeat)):
            widest = max(widest, _stmt_chain(item.body))
        elif isinstance(item, IfElse):
            widest = max(widest, _stmt_chain(item.then_body),
                         _stmt_chain(item.else_body))
    return widest


def token_length(p: Program) -> int:
    return len(program_tokens(p))


@dataclass(frozen=True)
class GenConstraints:
    """Size limits defining the feasible program set."""

    max_nesting_depth: int = 4
    max_chain_per_block: int = 6
    max_token_length: int = 45

    def __post_init__(self):
        for name in ("max_nesting_depth", "max_chain_per_block", "max_token_length"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


DEFAULT_CONSTRAINTS = GenConstraints()


@dataclass(frozen=True)
class DepthViolation:
    value: int


@dataclass(frozen=True)
class ChainViolation:
    value: int


@dataclass(frozen=True)
class LengthViolation:
    value: int


def check_constraints(p: Program, c: GenConstraints = DEFAULT_CONSTRAINTS) -> list:
    """Empty list iff p is inside the feasible set defined by c."""
    violations = []
    d = depth(p)
    if d > c.max_nesting_depth:
        violations.append(DepthViolation(d))
    w = chain_width(p)
    if w > c.max_chain_per_block:
        violations.append(ChainViolation(w))
    n = token_length(p)
    if n > c.max_token_length:
        violations.append(LengthViolation(n))
    return violations


# ---------------------------------------------------------------------------
# equality (after left-normalizing chains)

def _normalize(stmt: Stmt) -> Stmt:
    if isinstance(stmt, Act):
        return stmt
    if isinstance(stmt, While):
        return While(stmt.cond, _normalize(stmt.body))
    if isinstance(stmt, If):
        return If(stmt.cond, _normalize(stmt.body))
    if isinstance(stmt, IfElse):
        return IfElse(stmt.cond, _normalize(stmt.then_body),
                      _normalize(stmt.else_body))
    if isinstance(stmt, Repeat):
        return Repeat(stmt.count, _normalize(stmt.body))
    items = [_normalize(s) for s in flatten_chain(stmt)]
    acc = items[0]
    for item in items[1:]:
        acc = Seq(acc, item)
    return acc


def equals(p: Program, q: Program) -> bool:
    """Structural equality modulo Seq associativity; agrees with equality of
    canonical printed text."""
    return _normalize(p.body) == _normalize(q.body)


# ---------------------------------------------------------------------------
# probabilistic grammar

_STMT_KINDS = ("while", "if", "ifelse", "repeat", "seq", "act")


def _cumulative(weights):
    total = 0.0
    out = []
    for w in weights:
        if w < 0:
            raise ValueError("negative weight")
        total += w
        out.append(total)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {total}, expected 1.0")
    out[-1] = 1.0
    return tuple(out)


def _pick(rng, cum):
    x = rng.random()
    for i, edge in enumerate(cum):
        if x < edge:
            return i
    return len(cum) - 1


@dataclass(frozen=True)
class GrammarProbs:
    """Production-rule weights of the probabilistic grammar.

    Statement weights follow ``("while", "if", "ifelse", "repeat", "seq",
    "act")``; percept and action weights follow declaration order of the
    enums; repeat counts are uniform over 0..19 by default.
    """

    stmt_weights: tuple = (0.15, 0.08, 0.04, 0.03, 0.5, 0.2)
    negated_prob: float = 0.1
    percept_weights: tuple = (0.5, 0.15, 0.15, 0.1, 0.1)
    action_weights: tuple = (0.5, 0.15, 0.15, 0.1, 0.1)
    count_weights: tuple = (1 / (REPEAT_MAX + 1),) * (REPEAT_MAX + 1)

    _stmt_cum: tuple = field(init=False, repr=False, compare=False, default=())
    _stmt_flat_cum: tuple = field(init=False, repr=False, compare=False, default=())
    _percept_cum: tuple = field(init=False, repr=False, compare=False, default=())
    _action_cum: tuple = field(init=False, repr=False, compare=False, default=())
    _count_cum: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if len(self.stmt_weights) != len(_STMT_KINDS):
            raise ValueError("need one weight per statement rule")
        if not 0.0 <= self.negated_prob <= 1.0:
            raise ValueError("negated_prob outside [0, 1]")
        object.__setattr__(self, "_stmt_cum", _cumulative(self.stmt_weights))
        # restriction to non-control rules, renormalized; used once the
        # nesting budget of the current position is exhausted
        seq_w = self.stmt_weights[4]
        act_w = self.stmt_weights[5]
        flat = seq_w + act_w
        if flat <= 0:
            raise ValueError("seq and act weights cannot both be zero")
        object.__setattr__(
            self, "_stmt_flat_cum",
            (0.0, 0.0, 0.0, 0.0, seq_w / flat, 1.0))
        object.__setattr__(self, "_percept_cum", _cumulative(self.percept_weights))
        object.__setattr__(self, "_action_cum", _cumulative(self.action_weights))
        object.__setattr__(self, "_count_cum", _cumulative(self.count_weights))

    def sample_stmt_kind(self, rng, allow_control: bool = True) -> str:
        cum = self._stmt_cum if allow_control else self._stmt_flat_cum
        return _STMT_KINDS[_pick(rng, cum)]

    def sample_negated(self, rng) -> bool:
        return rng.random() < self.negated_prob

    def sample_percept(self, rng) -> Percept:
        return PERCEPTS[_pick(rng, self._percept_cum)]

    def sample_action(self, rng) -> Action:
        return ACTIONS[_pick(rng, self._action_cum)]

    def sample_count(self, rng) -> int:
        return _pick(rng, self._count_cum)

    def sample_cond(self, rng) -> Cond:
        negated = self.sample_negated(rng)
        return Cond(self.sample_percept(rng), negated)


DEFAULT_PROBS = GrammarProbs()


# ---------------------------------------------------------------------------
# sampler

class SamplingBudgetExceeded(RuntimeError):
    """Rejection sampling failed too many times in a row; the constraints are
    (almost certainly) unsatisfiable together."""


class _Reject(Exception):
    """Internal: the current expansion can no longer satisfy the constraints."""


class _Expansion:
    __slots__ = ("rng", "probs", "constraints", "tokens")

    def __init__(self, rng, probs, constraints, spent=0):
        self.rng = rng
        self.probs = probs
        self.constraints = constraints
        self.tokens = spent

    def spend(self, n):
        self.tokens += n
        if self.tokens > self.constraints.max_token_length:
            raise _Reject


def _expand_cond(ctx) -> Cond:
    cond = ctx.probs.sample_cond(ctx.rng)
    ctx.spend(3 if cond.negated else 1)
    return cond


def _expand_stmt(ctx, depth_left, block) -> Stmt:
    """Top-down, left-to-right expansion of one statement.

    ``block`` holds the running width of the enclosing flattened block, so
    oversize chains abort the whole attempt; control rules are dropped from
    the draw once ``depth_left`` is exhausted; token overflow aborts.
    """
    kind = ctx.probs.sample_stmt_kind(ctx.rng, allow_control=depth_left > 0)
    if kind == "seq":
        block[0] += 1
        if block[0] > ctx.constraints.max_chain_per_block:
            raise _Reject
        first = _expand_stmt(ctx, depth_left, block)
        return Seq(first, _expand_stmt(ctx, depth_left, block))
    if kind == "act":
        ctx.spend(1)
        return Act(ctx.probs.sample_action(ctx.rng))
    if kind == "while":
        ctx.spend(5)
        cond = _expand_cond(ctx)
        return While(cond, _expand_stmt(ctx, depth_left - 1, [1]))
    if kind == "if":
        ctx.spend(5)
        cond = _expand_cond(ctx)
        return If(cond, _expand_stmt(ctx, depth_left - 1, [1]))
    if kind == "ifelse":
        ctx.spend(8)
        cond = _expand_cond(ctx)
        then_body = _expand_stmt(ctx, depth_left - 1, [1])
        return IfElse(cond, then_body, _expand_stmt(ctx, depth_left - 1, [1]))
    ctx.spend(4)
    count = ctx.probs.sample_count(ctx.rng)
    return Repeat(count, _expand_stmt(ctx, depth_left - 1, [1]))


def sample_program(rng: np.random.Generator,
                   probs: GrammarProbs = DEFAULT_PROBS,
                   constraints: GenConstraints = DEFAULT_CONSTRAINTS,
                   max_rejections: int = 10_000) -> Program:
    """Draw a program from the probabilistic grammar, rejecting draws that
    leave the feasible set until one fits."""
    for _ in range(max_rejections):
        ctx = _Expansion(rng, probs, constraints)
        try:
            ctx.spend(4)  # DEF run m( m)
            body = _expand_stmt(ctx, constraints.max_nesting_depth, [1])
        except _Reject:
            continue
        return Program(body)
    raise SamplingBudgetExceeded(
        f"{max_rejections} consecutive rejections; constraints look unsatisfiable")
