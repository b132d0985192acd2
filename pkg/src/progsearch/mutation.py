"""Neighborhood function over the programmatic space: single-point subtree
regeneration with constraint rejection.

A mutation picks a uniform AST node, then a uniform child slot of that node
(statement, condition, percept, action, or repeat count), and regrows the
slot from the probabilistic grammar.  The result may equal the input; such
identity mutations are legal and are what the identity-rate metric measures.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dsl
from .dsl import (
    Act, Cond, GenConstraints, GrammarProbs, If, IfElse, Program, Repeat,
    SamplingBudgetExceeded, Seq, While,
    DEFAULT_CONSTRAINTS, DEFAULT_PROBS, check_constraints, program_tokens,
)


@dataclass(frozen=True)
class NeighborhoodParams:
    k: int
    max_rejections: int = 10_000

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("neighborhood size must be >= 1")


_NODE_SLOTS = {
    Program: ("body",),
    While: ("cond", "body"),
    If: ("cond", "body"),
    IfElse: ("cond", "then_body", "else_body"),
    Repeat: ("count", "body"),
    Seq: ("first", "second"),
    Act: ("action",),
    Cond: ("percept",),
}

_BODY_SLOTS = {"body", "then_body", "else_body"}


@dataclass(frozen=True)
class MutationPoint:
    """A (node, child-slot) pair, addressed by the slot path from the root."""

    path: tuple          # slot names leading to the node
    slot: str            # which child of the node gets regrown
    depth_budget: int    # nesting levels available below a statement slot


def _walk(node, path, control_depth, points, max_depth):
    slots = _NODE_SLOTS[type(node)]
    node_points = []
    for slot in slots:
        # a subtree regrown inside a control construct's body is one nesting
        # level deeper than the construct itself
        if slot in _BODY_SLOTS and isinstance(node, dsl.CONTROL_NODES):
            budget = max_depth - (control_depth + 1)
        else:
            budget = max_depth - control_depth
        node_points.append(MutationPoint(path, slot, budget))
    points.append(node_points)
    for slot in slots:
        child = getattr(node, slot)
        if type(child) in _NODE_SLOTS:
            child_depth = control_depth
            if isinstance(node, dsl.CONTROL_NODES) and slot in _BODY_SLOTS:
                child_depth += 1
            _walk(child, path + (slot,), child_depth, points, max_depth)


def mutation_points(p: Program, constraints: GenConstraints = DEFAULT_CONSTRAINTS):
    """Eligible mutation points grouped per node, in preorder."""
    points = []
    _walk(p, (), 0, points, constraints.max_nesting_depth)
    return points


def choose_point(p: Program, rng: np.random.Generator,
                 constraints: GenConstraints = DEFAULT_CONSTRAINTS) -> MutationPoint:
    """Uniform node first, then uniform slot within the node."""
    grouped = mutation_points(p, constraints)
    node_points = grouped[rng.integers(len(grouped))]
    return node_points[rng.integers(len(node_points))]


def _node_at(root, path):
    node = root
    for slot in path:
        node = getattr(node, slot)
    return node


def _rebuild(node, path, slot, value):
    if not path:
        return replace(node, **{slot: value})
    head, rest = path[0], path[1:]
    return replace(node, **{head: _rebuild(getattr(node, head), rest, slot, value)})


def _subtree_tokens(value) -> int:
    if isinstance(value, Cond):
        return 3 if value.negated else 1
    out = []
    dsl._stmt_tokens(value, out)
    return len(out)


def _regrow(point: MutationPoint, old_value, total_tokens, rng, probs, constraints):
    if point.slot == "count":
        return probs.sample_count(rng)
    if point.slot == "action":
        return probs.sample_action(rng)
    if point.slot == "percept":
        return probs.sample_percept(rng)
    spent = total_tokens - _subtree_tokens(old_value)
    if point.slot == "cond":
        ctx = dsl._Expansion(rng, probs, constraints, spent=spent)
        return dsl._expand_cond(ctx)
    # statement slot: regrow from the grammar with the nesting budget the
    # slot position allows; chain and length overshoot is caught by the
    # whole-program check afterwards
    ctx = dsl._Expansion(rng, probs, constraints, spent=spent)
    return dsl._expand_stmt(ctx, max(point.depth_budget, 0), [1])


def mutate(p: Program, rng: np.random.Generator,
           probs: GrammarProbs = DEFAULT_PROBS,
           constraints: GenConstraints = DEFAULT_CONSTRAINTS,
           max_rejections: int = 10_000) -> Program:
    """One mutation of p; the result satisfies the constraints.

    A failed attempt (token overflow during regrowth, or a constraint
    violation in the rebuilt program) restarts the whole mutation, node
    choice included.
    """
    total_tokens = len(program_tokens(p))
    for _ in range(max_rejections):
        point = choose_point(p, rng, constraints)
        old_value = getattr(_node_at(p, point.path), point.slot)
        try:
            value = _regrow(point, old_value, total_tokens, rng, probs, constraints)
        except dsl._Reject:
            continue
        candidate = _rebuild(p, point.path, point.slot, value)
        if not check_constraints(candidate, constraints):
            return candidate
    raise SamplingBudgetExceeded(
        f"{max_rejections} mutation attempts rejected for {dsl.print_program(p)!r}")


def neighborhood(p: Program, params: NeighborhoodParams, rng: np.random.Generator,
                 probs: GrammarProbs = DEFAULT_PROBS,
                 constraints: GenConstraints = DEFAULT_CONSTRAINTS) -> list:
    """K independent mutation draws; duplicates allowed."""
    return [mutate(p, rng, probs, constraints, params.max_rejections)
            for _ in range(params.k)]


def iterate_mutations(p: Program, n: int, rng: np.random.Generator,
                      probs: GrammarProbs = DEFAULT_PROBS,
                      constraints: GenConstraints = DEFAULT_CONSTRAINTS) -> Program:
    """n-fold composition of mutate; n=0 returns p unchanged."""
    if n < 0:
        raise ValueError("mutation count must be >= 0")
    for _ in range(n):
        p = mutate(p, rng, probs, constraints)
    return p
