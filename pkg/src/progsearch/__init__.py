"""Search over Karel programmatic policies: the DSL, a deterministic grid
world, the full task suite, hill climbing, and topology metrics."""

__version__ = "0.1.0"

from .dsl import (  # noqa: F401
    Action, Percept, Cond, Act, While, If, IfElse, Repeat, Seq, Program,
    GenConstraints, GrammarProbs, DEFAULT_CONSTRAINTS, DEFAULT_PROBS,
    ParseError, SamplingBudgetExceeded,
    parse_program, print_program, sample_program, check_constraints,
    depth, chain_width, token_length, equals,
)
from .mutation import (  # noqa: F401
    NeighborhoodParams, mutate, neighborhood, iterate_mutations,
)
from .karel import (  # noqa: F401
    Direction, WorldState, ExecLimits, Terminal, Trajectory, InvalidConfig,
    perceive, apply_action, run_episode, random_world, parse_map, format_map,
)
from .tasks import (  # noqa: F401
    TASK_NAMES, TaskSpec, EpisodeResult, Evaluator, make_task,
    sample_initial, initial_states, rollout, evaluate,
)
from .search import (  # noqa: F401
    SearchConfig, SearchRecord, SpaceHandle, programmatic_space,
    hill_climb, g_search, search_with_restarts,
)
from .metrics import (  # noqa: F401
    MetricEstimate, ConvergenceCurve, rho_similarity, behavior_similarity,
    identity_rate, convergence_rate, metric_worlds,
)
