"""Experiment driver.

Subcommands: sample | eval | search | metrics.  Every output file starts
with a config header (``# key=value`` lines) so a run can be identified and
replayed; identical seeds reproduce identical bytes.  Worker threads for
the search seed fan-out come from PROGSEARCH_WORKERS (default: cpu count).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, dsl, metrics, mutation, search, tasks


def _header(command: str, params: dict) -> str:
    lines = [f"# progsearch {__version__} {command}"]
    for key in sorted(params):
        lines.append(f"# {key}={params[key]}")
    return "\n".join(lines) + "\n"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        _write_atomic(out, text)


def _constraints(args) -> dsl.GenConstraints:
    return dsl.GenConstraints(args.max_depth, args.max_chain, args.max_tokens)


def _add_constraint_flags(parser):
    parser.add_argument("--max-depth", type=int, default=4)
    parser.add_argument("--max-chain", type=int, default=6)
    parser.add_argument("--max-tokens", type=int, default=45)


def _workers() -> int:
    env = os.environ.get("PROGSEARCH_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _load_config(path: str) -> dict:
    """key=value lines; '#' starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"bad config line {raw.strip()!r} in {path}")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, values: dict) -> None:
    """Install file values as parser defaults, so explicit flags win."""
    for action in parser._actions:
        if action.dest in values:
            raw = values[action.dest]
            if isinstance(action, (argparse._StoreTrueAction,
                                   argparse._StoreFalseAction)):
                default = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                default = action.type(raw)
            else:
                default = raw
            parser.set_defaults(**{action.dest: default})


# ---------------------------------------------------------------------------
# sample

def _rule_frequency_report(seed: int, draws: int = 10_000) -> list:
    """Unconditioned per-category draw frequencies against the configured
    grammar weights (rejection filtering shifts frequencies measured on
    emitted programs, so the report samples the raw rules)."""
    probs = dsl.GrammarProbs()
    rng = np.random.default_rng((seed, 0xF4E9))
    categories = [
        ("statement", dsl._STMT_KINDS, probs.stmt_weights,
         lambda: probs.sample_stmt_kind(rng)),
        ("percept", [h.value for h in dsl.PERCEPTS], probs.percept_weights,
         lambda: probs.sample_percept(rng).value),
        ("action", [a.value for a in dsl.ACTIONS], probs.action_weights,
         lambda: probs.sample_action(rng).value),
    ]
    lines = [f"# rule frequencies over {draws} draws per category"]
    for name, labels, weights, draw in categories:
        sample = [draw() for _ in range(draws)]
        for label, weight in zip(labels, weights):
            freq = sample.count(label) / draws
            lines.append(f"# {name} {label}: weight={weight} freq={freq:.4f}")
    negs = sum(probs.sample_negated(rng) for _ in range(draws))
    lines.append(f"# condition negated: weight={probs.negated_prob} "
                 f"freq={negs / draws:.4f}")
    counts = [probs.sample_count(rng) for _ in range(draws)]
    spread = max(counts.count(i) for i in range(20)) / draws
    lines.append(f"# repeat counts: uniform 0..19, max bin freq={spread:.4f}")
    return lines


def cmd_sample(args) -> int:
    constraints = _constraints(args)
    rng = np.random.default_rng(args.seed)
    programs = [dsl.sample_program(rng, constraints=constraints)
                for _ in range(args.n)]
    params = {"n": args.n, "seed": args.seed,
              "max_depth": constraints.max_nesting_depth,
              "max_chain": constraints.max_chain_per_block,
              "max_tokens": constraints.max_token_length}
    lines = [dsl.print_program(p) for p in programs]
    if args.stats:
        lines.extend(_rule_frequency_report(args.seed))
    _emit(_header("sample", params) + "\n".join(lines) + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    if args.program_file:
        with open(args.program_file, encoding="utf-8") as fh:
            text = next(line for line in fh
                        if line.strip() and not line.startswith("#")).strip()
    else:
        text = args.program
    program = dsl.parse_program(text)
    task = tasks.make_task(args.task, crashable=args.crashable)
    states = tasks.initial_states(task, args.seed, args.num_states)
    rows = ["state_index,return,steps,terminal"]
    total = 0.0
    for i, s0 in enumerate(states):
        result = tasks.rollout(task, program, s0)
        total += result.ret
        rows.append(f"{i},{result.ret!r},{result.steps},{result.terminal.value}")
    rows.append(f"mean,{total / len(states)!r},,")
    params = {"task": args.task, "seed": args.seed,
              "num_states": args.num_states, "crashable": args.crashable,
              "program": text}
    _emit(_header("eval", params) + "\n".join(rows) + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# search

def _run_seed(task, seed, args):
    cfg = search.SearchConfig(k=args.k, budget=args.budget,
                              num_states=args.num_states, seed=seed,
                              stop_return=args.stop_return)
    space = search.programmatic_space()
    return search.search_with_restarts(space, task, cfg)


def cmd_search(args) -> int:
    task = tasks.make_task(args.task, crashable=args.crashable)
    seeds = list(range(args.seed_base, args.seed_base + args.seeds))
    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        records = list(pool.map(lambda s: _run_seed(task, s, args), seeds))
    params = {"task": args.task, "seeds": args.seeds,
              "seed_base": args.seed_base, "k": args.k,
              "budget": args.budget, "num_states": args.num_states,
              "crashable": args.crashable, "stop_return": args.stop_return}
    header = _header("search", params)

    records_text = header + "".join(
        search.record_to_json(rec) + "\n" for rec in records)
    curve_lines = ["task,seed,evaluations,episodes,best_return"]
    for rec in records:
        for evals, episodes, g in search.curve_rows(rec):
            curve_lines.append(f"{rec.task},{rec.seed},{evals},{episodes},{g!r}")
    curves_text = header + "\n".join(curve_lines) + "\n"

    finals = np.array([rec.best_return for rec in records])
    stderr = (finals.std(ddof=1) / np.sqrt(len(finals))
              if len(finals) > 1 else 0.0)
    agg_lines = ["task,n_seeds,mean_return,std_error",
                 f"{args.task},{len(finals)},{finals.mean()!r},{float(stderr)!r}"]
    agg_text = header + "\n".join(agg_lines) + "\n"

    out_dir = args.out_dir
    _write_atomic(os.path.join(out_dir, f"{args.task}_records.jsonl"),
                  records_text)
    _write_atomic(os.path.join(out_dir, f"{args.task}_curves.csv"), curves_text)
    _write_atomic(os.path.join(out_dir, f"{args.task}_aggregate.csv"), agg_text)
    print(f"{args.task}: mean final return {finals.mean():.4f} "
          f"+- {float(stderr):.4f} over {len(finals)} seeds")
    return 0


# ---------------------------------------------------------------------------
# metrics

def _parse_span(text: str) -> range:
    lo, _, hi = text.partition(":")
    return range(int(lo), int(hi) + 1) if hi else range(1, int(lo) + 1)


def cmd_metrics(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.mode == "behavior":
        span = _parse_span(args.n_mut)
        worlds = metrics.metric_worlds(rng, args.num_states)
        rows = ["n_mutations,mean,ci_low,ci_high,metric"]
        for n_mut in span:
            est = metrics.behavior_similarity(
                n_mut, args.n_programs, worlds,
                np.random.default_rng((args.seed, n_mut)))
            rows.append(f"{n_mut},{est.mean!r},{est.ci_low!r},"
                        f"{est.ci_high!r},behavior_similarity")
        params = {"mode": "behavior", "seed": args.seed,
                  "n_programs": args.n_programs,
                  "num_states": args.num_states, "n_mut": args.n_mut}
    elif args.mode == "identity":
        span = _parse_span(args.n_mut)
        rows = ["n_mutations,mean,ci_low,ci_high,metric"]
        for n_mut in span:
            est = metrics.identity_rate(
                n_mut, args.n_programs, np.random.default_rng((args.seed, n_mut)))
            rows.append(f"{n_mut},{est.mean!r},{est.ci_low!r},"
                        f"{est.ci_high!r},identity_rate")
        params = {"mode": "identity", "seed": args.seed,
                  "n_programs": args.n_programs, "n_mut": args.n_mut}
    else:
        task = tasks.make_task(args.task, crashable=args.crashable)
        states = tasks.initial_states(task, args.seed, args.num_states)
        targets = np.linspace(0.0, 1.0, args.g_points)
        rows = ["task,K,g_target,rate,ci_low,ci_high"]
        for k in (int(x) for x in args.k_list.split(",")):
            curve = metrics.convergence_rate(
                task, k, args.n_inits, states, targets,
                np.random.default_rng((args.seed, k)), budget=args.budget)
            for target, est in zip(curve.g_targets, curve.rates):
                rows.append(f"{args.task},{k},{target!r},{est.mean!r},"
                            f"{est.ci_low!r},{est.ci_high!r}")
        params = {"mode": "convergence", "seed": args.seed,
                  "task": args.task, "k_list": args.k_list,
                  "n_inits": args.n_inits, "num_states": args.num_states,
                  "budget": args.budget, "g_points": args.g_points,
                  "crashable": args.crashable}
    _emit(_header("metrics", params) + "\n".join(rows) + "\n", args.out)
    return 0


# ---------------------------------------------------------------------------

def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="progsearch",
        description="Karel programmatic-policy search and topology metrics",
        epilog="precedence: flags > --config file > built-in defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample programs from the grammar")
    p.add_argument("-n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stats", action="store_true",
                   help="append a leading-statement frequency summary")
    p.add_argument("-o", "--out", default=None)
    _add_constraint_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="evaluate one program on a task")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--program")
    group.add_argument("--program-file")
    p.add_argument("--task", required=True, choices=tasks.TASK_NAMES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-states", type=int, default=16)
    p.add_argument("--crashable", action="store_true")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search", help="hill climbing with restarts")
    p.add_argument("--task", required=True, choices=tasks.TASK_NAMES)
    p.add_argument("--seeds", type=int, default=8,
                   help="number of independent runs")
    p.add_argument("--seed-base", type=int, default=0)
    p.add_argument("--k", type=int, default=250)
    p.add_argument("--budget", type=int, default=10 ** 6)
    p.add_argument("--num-states", type=int, default=16)
    p.add_argument("--crashable", action="store_true")
    p.add_argument("--stop-return", type=float, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("metrics", help="topology metric estimators")
    p.add_argument("mode", choices=("behavior", "identity", "convergence"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-programs", type=int, default=200)
    p.add_argument("--num-states", type=int, default=8)
    p.add_argument("--n-mut", default="1:10",
                   help="mutation-count span, e.g. 1:10")
    p.add_argument("--task", choices=tasks.TASK_NAMES, default="maze")
    p.add_argument("--k-list", default="250")
    p.add_argument("--n-inits", type=int, default=500)
    p.add_argument("--budget", type=int, default=20_000,
                   help="per-climb evaluation cap for convergence mode")
    p.add_argument("--g-points", type=int, default=21)
    p.add_argument("--crashable", action="store_true")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_metrics)

    if config:
        for sub_parser in sub.choices.values():
            _apply_config(sub_parser, config)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config = {}
    try:
        if "--config" in argv:
            at = argv.index("--config")
            if at + 1 >= len(argv):
                raise ValueError("--config needs a file path")
            config = _load_config(argv[at + 1])
            del argv[at:at + 2]
        args = build_parser(config).parse_args(argv)
        return args.func(args)
    except (ValueError, OSError, dsl.SamplingBudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
