"""Search-space topology metrics: trajectory similarity, behavior-similarity
and identity-rate of the mutation neighborhood, and the convergence rate of
randomly initialized hill climbs.

Estimators derive one sub-seed per sample from the caller's generator, so a
parallel evaluation order would reproduce the serial results exactly.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import dsl, karel, mutation, search


@dataclass(frozen=True)
class MetricEstimate:
    mean: float
    ci_low: float
    ci_high: float
    n: int

    def __post_init__(self):
        if not (self.ci_low - 1e-12 <= self.mean <= self.ci_high + 1e-12):
            raise ValueError("confidence interval does not cover the mean")


def mean_ci(values) -> MetricEstimate:
    """Normal-approximation 95% interval for a sample mean."""
    arr = np.asarray(values, dtype=np.float64)
    n = len(arr)
    m = float(arr.mean())
    if n < 2:
        return MetricEstimate(m, m, m, n)
    half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(n)
    return MetricEstimate(m, m - half, m + half, n)


def rate_ci(successes: int, n: int) -> MetricEstimate:
    """Wilson 95% interval for a binomial rate."""
    if n == 0:
        raise ValueError("rate over zero samples")
    z = 1.96
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return MetricEstimate(p, max(0.0, center - half),
                          min(1.0, center + half), n)


# ---------------------------------------------------------------------------
# trajectory similarity

def rho_similarity(t: karel.Trajectory, t2: karel.Trajectory) -> float:
    """Length of the longest common action prefix over the longer length;
    two empty trajectories are identical (1.0), a single empty one shares
    nothing (0.0)."""
    a = np.asarray(t.actions if hasattr(t, "actions") else t)
    b = np.asarray(t2.actions if hasattr(t2, "actions") else t2)
    longer = max(len(a), len(b))
    if longer == 0:
        return 1.0
    shorter = min(len(a), len(b))
    if shorter == 0:
        return 0.0
    diff = a[:shorter] != b[:shorter]
    prefix = int(np.argmax(diff)) if diff.any() else shorter
    return prefix / longer


DEFAULT_MAP_CONFIG = {"height": 8, "width": 8,
                      "wall_density": 0.1, "marker_density": 0.1}


def metric_worlds(rng: np.random.Generator, n: int,
                  **overrides) -> list:
    """Task-free random maps used as the shared state set of the behavior
    metrics."""
    cfg = dict(DEFAULT_MAP_CONFIG)
    cfg.update(overrides)
    return [karel.random_world(rng, **cfg) for _ in range(n)]


# ---------------------------------------------------------------------------
# mutation-path metrics

def behavior_similarity(n_mut: int, n_programs: int, states, rng,
                        probs: dsl.GrammarProbs = dsl.DEFAULT_PROBS,
                        constraints: dsl.GenConstraints = dsl.DEFAULT_CONSTRAINTS,
                        limits: karel.ExecLimits = karel.DEFAULT_LIMITS,
                        ) -> MetricEstimate:
    """Monte-Carlo estimate of the expected trajectory similarity between a
    grammar-sampled program and its n_mut-fold mutant, over shared states."""
    if n_mut < 1:
        raise ValueError("n_mut must be >= 1")
    master = int(rng.integers(2 ** 63))
    samples = []
    for i in range(n_programs):
        sub = np.random.default_rng((master, i))
        p0 = dsl.sample_program(sub, probs, constraints)
        pn = mutation.iterate_mutations(p0, n_mut, sub, probs, constraints)
        if dsl.equals(p0, pn):
            samples.append(1.0)
            continue
        total = 0.0
        for s0 in states:
            t0, _ = karel.run_episode(p0, s0, limits)
            tn, _ = karel.run_episode(pn, s0, limits)
            total += rho_similarity(t0, tn)
        samples.append(total / len(states))
    return mean_ci(samples)


def identity_rate(n_mut: int, n_programs: int, rng,
                  probs: dsl.GrammarProbs = dsl.DEFAULT_PROBS,
                  constraints: dsl.GenConstraints = dsl.DEFAULT_CONSTRAINTS,
                  ) -> MetricEstimate:
    """Probability that an n_mut-step mutation path returns its start
    program; the indicator does not depend on any state."""
    if n_mut < 1:
        raise ValueError("n_mut must be >= 1")
    master = int(rng.integers(2 ** 63))
    hits = 0
    for i in range(n_programs):
        sub = np.random.default_rng((master, i))
        p0 = dsl.sample_program(sub, probs, constraints)
        pn = mutation.iterate_mutations(p0, n_mut, sub, probs, constraints)
        if dsl.equals(p0, pn):
            hits += 1
    return rate_ci(hits, n_programs)


# ---------------------------------------------------------------------------
# convergence rate

@dataclass
class ConvergenceCurve:
    task: str
    k: int
    g_targets: tuple
    rates: list               # MetricEstimate per target
    search_returns: np.ndarray

    def __post_init__(self):
        means = [r.mean for r in self.rates]
        if any(b > a + 1e-12 for a, b in zip(means, means[1:])):
            raise ValueError("convergence curve must be nonincreasing")


def convergence_rate(task, k: int, n_inits: int, states, g_targets, rng,
                     budget: int = 10 ** 6, stop_at: float | None = 1.0,
                     workers: int = 1,
                     probs: dsl.GrammarProbs = dsl.DEFAULT_PROBS,
                     constraints: dsl.GenConstraints = dsl.DEFAULT_CONSTRAINTS,
                     ) -> ConvergenceCurve:
    """Fraction of randomly initialized hill climbs whose best return
    reaches each target, one climb per sampled initial candidate.

    ``stop_at`` cuts a climb short once its best return hits the task
    ceiling; the climb's result cannot change past that point, so the
    curve is unaffected.  Each climb runs on its own (masterSeed, index)
    substream, so any worker count produces identical results.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    targets = tuple(float(t) for t in g_targets)
    if any(t < 0.0 or t > 1.0 for t in targets):
        raise ValueError("targets must lie in [0, 1]")
    if sorted(targets) != list(targets):
        raise ValueError("targets must be nondecreasing")
    space = search.programmatic_space(probs, constraints)
    cfg = search.SearchConfig(k=k, budget=budget,
                              num_states=max(len(states), 1), seed=0,
                              stop_return=stop_at)
    master = int(rng.integers(2 ** 63))

    def climb(i):
        sub = np.random.default_rng((master, i))
        rho0 = dsl.sample_program(sub, probs, constraints)
        return search.g_search(space, task, rho0, states, cfg, sub)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(climb, range(n_inits)))
    else:
        values = [climb(i) for i in range(n_inits)]
    returns = np.array(values, dtype=np.float64)
    rates = [rate_ci(int((returns >= t).sum()), n_inits) for t in targets]
    name = task.name if hasattr(task, "name") else str(task)
    return ConvergenceCurve(name, k, targets, rates, returns)
