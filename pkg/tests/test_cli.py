"""CLI pipelines: outputs are self-describing, replayable byte-for-byte,
and fail loudly on bad configuration."""

import json
import os

import pytest

from progsearch import cli, dsl


def run_cli(*argv):
    return cli.main(list(argv))


def read(path):
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def test_sample_outputs_parse_and_replay(tmp_path):
    out = tmp_path / "programs.txt"
    assert run_cli("sample", "-n", "5", "--seed", "3", "-o", str(out)) == 0
    text = read(out)
    assert text.startswith("# progsearch")
    programs = [line for line in text.splitlines() if not line.startswith("#")]
    assert len(programs) == 5
    for line in programs:
        dsl.parse_program(line)
    again = tmp_path / "again.txt"
    run_cli("sample", "-n", "5", "--seed", "3", "-o", str(again))
    assert read(out).replace("again", "programs") == \
        read(again).replace("again", "programs")


def test_sample_stats_report_near_weights(tmp_path):
    out = tmp_path / "programs.txt"
    run_cli("sample", "-n", "5", "--seed", "1", "--stats", "-o", str(out))
    text = read(out)
    assert "rule frequencies" in text
    for line in text.splitlines():
        if "weight=" in line:
            weight = float(line.split("weight=")[1].split()[0])
            freq = float(line.split("freq=")[1])
            assert abs(freq - weight) <= 0.02


def test_eval_reports_per_state_and_mean(tmp_path):
    out = tmp_path / "eval.csv"
    code = run_cli("eval", "--task", "seeder",
                   "--program", "DEF run m( turnLeft m)",
                   "--seed", "0", "--num-states", "4", "-o", str(out))
    assert code == 0
    lines = [l for l in read(out).splitlines() if not l.startswith("#")]
    assert lines[0] == "state_index,return,steps,terminal"
    assert len(lines) == 6  # header + 4 states + mean
    assert lines[-1].startswith("mean,0.0")


def test_eval_parse_error_exits_nonzero(capsys):
    code = run_cli("eval", "--task", "seeder", "--program", "DEF walk m( m)")
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_eval_program_file(tmp_path):
    source = tmp_path / "prog.txt"
    source.write_text("# comment\nDEF run m( putMarker m)\n")
    out = tmp_path / "eval.csv"
    code = run_cli("eval", "--task", "seeder", "--program-file", str(source),
                   "--num-states", "2", "-o", str(out))
    assert code == 0
    assert "mean," in read(out)


def test_search_writes_records_curves_aggregate(tmp_path):
    out_dir = tmp_path / "results"
    code = run_cli("search", "--task", "seeder", "--seeds", "2",
                   "--k", "5", "--budget", "40", "--num-states", "2",
                   "--out-dir", str(out_dir))
    assert code == 0
    records = read(out_dir / "seeder_records.jsonl")
    body = [json.loads(l) for l in records.splitlines()
            if l and not l.startswith("#")]
    assert [rec["seed"] for rec in body] == [0, 1]
    assert all(rec["evaluations"] == 40 for rec in body)
    curves = read(out_dir / "seeder_curves.csv")
    assert curves.splitlines()[-1].split(",")[0] == "seeder"
    aggregate = read(out_dir / "seeder_aggregate.csv")
    assert "task,n_seeds,mean_return,std_error" in aggregate


def test_search_replay_is_byte_identical(tmp_path):
    args = ("search", "--task", "seeder", "--seeds", "2", "--k", "5",
            "--budget", "40", "--num-states", "2")
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    run_cli(*args, "--out-dir", str(a_dir))
    run_cli(*args, "--out-dir", str(b_dir))
    for name in ("seeder_records.jsonl", "seeder_curves.csv",
                 "seeder_aggregate.csv"):
        assert read(a_dir / name) == read(b_dir / name)


def test_metrics_identity_csv(tmp_path):
    out = tmp_path / "identity.csv"
    code = run_cli("metrics", "identity", "--n-programs", "30",
                   "--n-mut", "1:3", "--seed", "2", "-o", str(out))
    assert code == 0
    lines = [l for l in read(out).splitlines() if not l.startswith("#")]
    assert lines[0] == "n_mutations,mean,ci_low,ci_high,metric"
    assert len(lines) == 4


def test_metrics_behavior_csv(tmp_path):
    out = tmp_path / "behavior.csv"
    code = run_cli("metrics", "behavior", "--n-programs", "10",
                   "--num-states", "2", "--n-mut", "1:2", "--seed", "2",
                   "-o", str(out))
    assert code == 0
    rows = [l for l in read(out).splitlines() if not l.startswith("#")]
    assert rows[0] == "n_mutations,mean,ci_low,ci_high,metric"
    values = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(0.0 <= v <= 1.0 for v in values)


def test_metrics_convergence_csv(tmp_path):
    out = tmp_path / "conv.csv"
    code = run_cli("metrics", "convergence", "--task", "seeder",
                   "--k-list", "2,4", "--n-inits", "5", "--num-states", "2",
                   "--budget", "30", "--g-points", "3", "--seed", "0",
                   "-o", str(out))
    assert code == 0
    rows = [l for l in read(out).splitlines() if not l.startswith("#")]
    assert rows[0] == "task,K,g_target,rate,ci_low,ci_high"
    assert len(rows) == 1 + 2 * 3


def test_metrics_replay_identical(tmp_path):
    args = ("metrics", "identity", "--n-programs", "20", "--n-mut", "1:2",
            "--seed", "5")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli(*args, "-o", str(a))
    run_cli(*args, "-o", str(b))
    assert read(a) == read(b)


def test_config_file_sets_defaults_but_flags_win(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("seed=9\nnum-states=3  # comment\n")
    out = tmp_path / "eval.csv"
    run_cli("eval", "--task", "seeder", "--program", "DEF run m( turnLeft m)",
            "--config", str(config), "-o", str(out))
    text = read(out)
    assert "# seed=9" in text
    assert "# num_states=3" in text
    # an explicit flag overrides the config file
    run_cli("eval", "--task", "seeder", "--program", "DEF run m( turnLeft m)",
            "--config", str(config), "--seed", "4", "-o", str(out))
    assert "# seed=4" in read(out)


def test_missing_config_file_errors(capsys):
    assert run_cli("sample", "--config", "/nonexistent.conf") == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_task_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        run_cli("eval", "--task", "chess", "--program", "DEF run m( move m)")
    assert err.value.code == 2


def test_failed_run_leaves_no_partial_file(tmp_path):
    out = tmp_path / "never.txt"
    code = run_cli("sample", "-n", "3", "--max-tokens", "4", "-o", str(out))
    assert code == 1
    assert not out.exists()
    assert not any(p.name.endswith(".part") for p in tmp_path.iterdir())
