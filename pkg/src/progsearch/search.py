"""Hill climbing over a pluggable search space, with evaluation budgets and
restart-on-convergence.

A space is just an initial-candidate sampler plus a K-neighborhood sampler;
the programmatic space wires those to the grammar sampler and the mutation
operator.  One evaluation scores one candidate over the whole fixed set of
initial states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import dsl, mutation, tasks


@dataclass(frozen=True)
class SearchConfig:
    k: int = 250
    budget: int = 1_000_000
    num_states: int = 16
    seed: int = 0
    # optional early exit once the best return reaches this value; a climb
    # at the ceiling cannot improve further, so records are unaffected
    stop_return: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.num_states < 1:
            raise ValueError("num_states must be >= 1")


@dataclass(frozen=True)
class SpaceHandle:
    """init(rng) -> Program; neighbors(program, k, rng) -> list of Programs."""

    init: Callable
    neighbors: Callable


def programmatic_space(probs: dsl.GrammarProbs = dsl.DEFAULT_PROBS,
                       constraints: dsl.GenConstraints = dsl.DEFAULT_CONSTRAINTS,
                       ) -> SpaceHandle:
    def init(rng):
        return dsl.sample_program(rng, probs, constraints)

    def neighbors(program, k, rng):
        return [mutation.mutate(program, rng, probs, constraints)
                for _ in range(k)]

    return SpaceHandle(init, neighbors)


@dataclass
class SearchRecord:
    task: str
    seed: int
    best_program: dsl.Program
    best_return: float
    curve: list               # (evaluations used, best return so far)
    restarts: int
    evaluations: int
    episodes: int
    config: SearchConfig


def _scorer(task, states):
    if callable(task):
        return lambda program: task(program, states)
    return tasks.Evaluator(task, states)


class _Tracker:
    """Budget accounting and the best-so-far curve across climbs."""

    def __init__(self, budget, stop_return):
        self.budget = budget
        self.stop_return = stop_return
        self.best = None
        self.best_g = -math.inf
        self.evals = 0
        self.curve = []

    def record(self, program, g):
        self.evals += 1
        if g > self.best_g:
            self.best = program
            self.best_g = g
            self.curve.append((self.evals, g))

    @property
    def exhausted(self):
        return self.evals >= self.budget

    @property
    def stopped(self):
        return self.stop_return is not None and self.best_g >= self.stop_return


def _climb(space, score, k, rng, tracker, initial=None):
    """One hill climb: evaluate a candidate, then repeatedly scan its full
    K-neighborhood, moving to the best strictly improving neighbor seen in
    the scan.  Returns (local best, its return, converged-naturally)."""
    candidate = space.init(rng) if initial is None else initial
    g = score(candidate)
    tracker.record(candidate, g)
    best, best_g = candidate, g
    while not (tracker.exhausted or tracker.stopped):
        improved = False
        for neighbor in space.neighbors(best, k, rng):
            if tracker.exhausted or tracker.stopped:
                return best, best_g, False
            g = score(neighbor)
            tracker.record(neighbor, g)
            if g > best_g:
                best, best_g = neighbor, g
                improved = True
        if not improved:
            return best, best_g, True
    return best, best_g, False


def hill_climb(space: SpaceHandle, task, states, cfg: SearchConfig,
               rng: np.random.Generator, initial: dsl.Program | None = None):
    """Single climb under cfg's budget; returns (program, return, evals)."""
    tracker = _Tracker(cfg.budget, cfg.stop_return)
    best, best_g, _ = _climb(space, _scorer(task, states), cfg.k, rng,
                             tracker, initial)
    return best, best_g, tracker.evals


def g_search(space: SpaceHandle, task, rho0: dsl.Program, states,
             cfg: SearchConfig, rng: np.random.Generator | None = None) -> float:
    """Best return of one climb started from the given candidate."""
    if rng is None:
        rng = np.random.default_rng((cfg.seed, 0x6733))
    _, best_g, _ = hill_climb(space, task, states, cfg, rng, initial=rho0)
    return best_g


def search_with_restarts(space: SpaceHandle, task, cfg: SearchConfig,
                         rng: np.random.Generator | None = None,
                         states=None) -> SearchRecord:
    """Climb, restart from a fresh candidate on convergence, repeat until
    the evaluation budget is spent; the state set is fixed once per record."""
    if rng is None:
        rng = np.random.default_rng((cfg.seed, 0x5EA))
    if states is None:
        states = tasks.initial_states(task, cfg.seed, cfg.num_states)
    score = _scorer(task, states)
    tracker = _Tracker(cfg.budget, cfg.stop_return)
    climbs = 0
    while not (tracker.exhausted or tracker.stopped):
        _climb(space, score, cfg.k, rng, tracker)
        climbs += 1
    curve = list(tracker.curve)
    if not curve or curve[-1][0] != tracker.evals:
        curve.append((tracker.evals, tracker.best_g))
    name = task.name if hasattr(task, "name") else str(task)
    return SearchRecord(
        task=name, seed=cfg.seed, best_program=tracker.best,
        best_return=tracker.best_g, curve=curve, restarts=climbs - 1,
        evaluations=tracker.evals, episodes=tracker.evals * len(states),
        config=cfg)


def record_to_json(record: SearchRecord) -> str:
    cfg = record.config
    return json.dumps({
        "task": record.task,
        "seed": record.seed,
        "best_return": record.best_return,
        "best_program": dsl.print_program(record.best_program),
        "restarts": record.restarts,
        "evaluations": record.evaluations,
        "episodes": record.episodes,
        "k": cfg.k,
        "budget": cfg.budget,
        "num_states": cfg.num_states,
        "stop_return": cfg.stop_return,
        "curve": [[e, g] for e, g in record.curve],
    }, sort_keys=True)


def curve_rows(record: SearchRecord) -> list:
    """(evaluations, episodes, best_return) rows of the step curve."""
    per_eval = record.episodes // max(record.evaluations, 1)
    return [(e, e * per_eval, g) for e, g in record.curve]
