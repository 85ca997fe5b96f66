import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from magex.cli import (
    EXIT_CONFIG,
    EXIT_MISSING,
    EXIT_NUMERIC,
    EXIT_OK,
    ExperimentConfig,
    aggregate_curves,
    apply_override,
    load_experiment,
    main,
)
from magex.envs import ConfigError, read_trajectory
from magex.trainer import EvalReport

ROOT = Path(__file__).resolve().parents[1]
TINY = {
    "name": "tiny",
    "method": "mage_x",
    "env": {"task": "SimpleSpread", "n_agents": 2, "map_size": 2.0, "horizon": 30},
    "train": {"lr": 7e-4, "total_steps": 450, "eval_episodes": 4},
    "seeds": [0],
}


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MAGEX_OUTPUT_ROOT", str(tmp_path / "out"))
    return tmp_path / "out"


def write_cfg(tmp_path, d, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d), encoding="utf-8")
    return p


def test_example_config_parses():
    cfg = load_experiment(ROOT / "configs" / "spread3_desk.yaml")
    assert cfg.env.n_agents == 3 and cfg.env.map_size == 3.0 and cfg.env.horizon == 40
    assert cfg.train.total_steps == 300_000 and cfg.seeds == [0, 1, 2]


def test_missing_required_field_names_it(tmp_path, capsys):
    d = dict(TINY)
    del d["method"]
    assert main(["train", str(write_cfg(tmp_path, d))]) == EXIT_CONFIG
    assert "method" in capsys.readouterr().err


def test_unknown_key_reports_line(tmp_path, capsys):
    p = tmp_path / "bad.yaml"
    p.write_text("name: x\nmethod: mage_x\nenv:\n  task: SimpleSpread\n  n_agents: 2\n  map_size: 2.0\n"
                 "  horizon: 30\n  colour: red\n", encoding="utf-8")
    assert main(["train", str(p)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "colour" in err and "line 8" in err


def test_yaml_syntax_error_is_config_error(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("name: [unclosed\n", encoding="utf-8")
    assert main(["train", str(p)]) == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    assert main(["train", str(tmp_path / "nope.yaml")]) == EXIT_MISSING


def test_bad_arguments_exit_config():
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_override_paths():
    d = {"train": {"lr": 1.0}}
    apply_override(d, "train.total_steps=1000")
    apply_override(d, "env.task=Drone")
    assert d == {"train": {"lr": 1.0, "total_steps": 1000}, "env": {"task": "Drone"}}
    with pytest.raises(ConfigError):
        apply_override(d, "no_equals_sign")


def test_train_writes_artifacts_and_honours_override(tmp_path, out_root):
    p = write_cfg(tmp_path, TINY)
    assert main(["train", str(p), "-q", "--override", "train.total_steps=300"]) == EXIT_OK
    run = out_root / "tiny"
    resolved = yaml.safe_load((run / "config.resolved.yaml").read_text())
    assert resolved["train"]["total_steps"] == 300
    assert resolved["train"]["clip_ratio"] == 0.2  # defaults filled in
    records = [json.loads(x) for x in (run / "seed_0" / "metrics.jsonl").read_text().splitlines()]
    assert [r["round"] for r in records] == [0, 1]
    assert (run / "seed_0" / "checkpoint.npz").exists()
    timing = [json.loads(x) for x in (run / "seed_0" / "timing.jsonl").read_text().splitlines()]
    assert len(timing) == 2 and all(t["wall_clock"] >= 0 for t in timing)


def test_resolved_config_round_trips(tmp_path, out_root):
    p = write_cfg(tmp_path, TINY)
    assert main(["train", str(p), "-q"]) == EXIT_OK
    again = load_experiment(out_root / "tiny" / "config.resolved.yaml")
    assert again.to_dict() == ExperimentConfig.from_dict(TINY).to_dict()


def test_two_runs_give_identical_metrics(tmp_path, out_root):
    a = write_cfg(tmp_path, {**TINY, "output_dir": "a"}, "a.yaml")
    b = write_cfg(tmp_path, {**TINY, "output_dir": "b"}, "b.yaml")
    assert main(["train", str(a), "-q"]) == EXIT_OK
    assert main(["train", str(b), "-q"]) == EXIT_OK
    assert (out_root / "a" / "seed_0" / "metrics.jsonl").read_bytes() == \
        (out_root / "b" / "seed_0" / "metrics.jsonl").read_bytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_abort_exit_code(tmp_path, out_root):
    d = {**TINY, "train": {**TINY["train"], "lr": 1e308, "adam_eps": 1e-300}}
    p = write_cfg(tmp_path, d)
    code = main(["train", str(p), "-q", "--override", "train.total_steps=3000"])
    assert code == EXIT_NUMERIC


def test_planner_cannot_be_trained(tmp_path):
    assert main(["train", str(write_cfg(tmp_path, {**TINY, "method": "ma_astar"}))]) == EXIT_CONFIG


def test_eval_checkpoint_and_report_format(tmp_path, out_root):
    p = write_cfg(tmp_path, TINY)
    assert main(["train", str(p), "-q"]) == EXIT_OK
    ck = out_root / "tiny" / "seed_0" / "checkpoint.npz"
    stem = tmp_path / "report"
    assert main(["eval", str(ck), "--episodes", "5", "--seeds", "0", "1", "--out", str(stem)]) == EXIT_OK
    text = (tmp_path / "report.txt").read_text().strip()
    rep = EvalReport.from_dict(json.loads((tmp_path / "report.json").read_text()))
    assert text == rep.format()
    assert rep.episodes == 5 and rep.seeds == [0, 1]


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", str(tmp_path / "none.npz")]) == EXIT_MISSING


def test_eval_env_mismatch_is_an_error(tmp_path, out_root):
    p = write_cfg(tmp_path, TINY)
    assert main(["train", str(p), "-q", "--override", "train.total_steps=150"]) == EXIT_OK
    ck = out_root / "tiny" / "seed_0" / "checkpoint.npz"
    assert main(["eval", str(ck), "--task", "SimpleSpread", "--n-agents", "3", "--map-size", "2",
                 "--horizon", "30"]) == EXIT_CONFIG


def test_eval_planners(tmp_path, capsys):
    assert main(["eval", "--planner", "random", "--episodes", "10", "--seeds", "0", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("random: success ")
    assert main(["eval", "--planner", "ma_astar", "--episodes", "5", "--seeds", "0"]) == EXIT_OK
    assert "ma_astar: success 1.00 (0.00)" in capsys.readouterr().out
    assert main(["eval", "--planner", "ma_astar", "--task", "PushBall", "--n-agents", "5"]) == EXIT_CONFIG


def write_metrics(path, steps, values):
    path.write_text("".join(json.dumps({"env_steps": s, "success_rate": v}) + "\n" for s, v in zip(steps, values)))
    return path


def test_plotdata_single_file_passthrough(tmp_path, capsys):
    m = write_metrics(tmp_path / "m.jsonl", [150, 300, 450], [0.1, None, 0.5])
    assert main(["plotdata", str(m)]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "env_steps\tsuccess_mean\tsuccess_std\tn"
    assert lines[1:] == ["150\t0.100000\t0.000000\t1", "450\t0.500000\t0.000000\t1"]


def test_plotdata_three_seed_aggregation(tmp_path):
    vals = [[0.2, 0.5, 0.9], [0.4, 0.5, 1.0], [0.0, 0.8, 0.8]]
    files = [str(write_metrics(tmp_path / f"m{k}.jsonl", [150, 300, 450], v)) for k, v in enumerate(vals)]
    out = tmp_path / "curve.tsv"
    assert main(["plotdata", *files, "--out", str(out)]) == EXIT_OK
    rows = [line.split("\t") for line in out.read_text().splitlines()[1:]]
    # hand computation: mean and population std of each column
    expect = [(0.2, np.sqrt(((0.2 - 0.2) ** 2 + (0.4 - 0.2) ** 2 + (0.0 - 0.2) ** 2) / 3)),
              (0.6, np.sqrt((0.1 ** 2 + 0.1 ** 2 + 0.2 ** 2) / 3)),
              (0.9, np.sqrt((0.0 ** 2 + 0.1 ** 2 + 0.1 ** 2) / 3))]
    for row, (m, s) in zip(rows, expect):
        assert float(row[1]) == pytest.approx(m, abs=1e-6)
        assert float(row[2]) == pytest.approx(s, abs=1e-6)
        assert row[3] == "3"


def test_plotdata_resamples_mismatched_grids(tmp_path, capsys):
    a = write_metrics(tmp_path / "a.jsonl", [0, 100, 200, 300], [0.0, 0.2, 0.4, 0.6])
    b = write_metrics(tmp_path / "b.jsonl", [50, 250], [0.0, 1.0])
    assert main(["plotdata", str(a), str(b)]) == EXIT_OK
    captured = capsys.readouterr()
    assert "resampled" in captured.err
    rows = [line.split("\t") for line in captured.out.splitlines()[1:]]
    assert [int(r[0]) for r in rows] == [100, 200]
    assert float(rows[0][1]) == pytest.approx((0.2 + 0.25) / 2)


def test_aggregate_curves_same_grid_is_exact():
    x = np.array([1.0, 2.0])
    steps, mean, std, resampled = aggregate_curves([(x, np.array([1.0, 3.0])), (x, np.array([3.0, 5.0]))])
    assert not resampled and mean.tolist() == [2.0, 4.0] and std.tolist() == [1.0, 1.0]


def test_plotdata_empty_inputs(tmp_path):
    assert main(["plotdata"]) == EXIT_MISSING
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert main(["plotdata", str(empty)]) == EXIT_MISSING
    assert main(["plotdata", str(tmp_path / "missing.jsonl")]) == EXIT_MISSING


def test_plotdata_malformed_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"env_steps": 1, "success_rate": 0.5}\nnot json\n')
    assert main(["plotdata", str(bad)]) == EXIT_CONFIG
    assert "bad.jsonl:2" in capsys.readouterr().err


def test_replay_dumps_trajectory(tmp_path, out_root):
    out = tmp_path / "traj.jsonl"
    assert main(["replay", "--planner", "ma_astar", "--seed", "3", "--out", str(out)]) == EXIT_OK
    header, steps = read_trajectory(out)
    assert header["planner"] == "ma_astar" and len(steps) == header["env"]["horizon"]
    p = write_cfg(tmp_path, TINY)
    assert main(["train", str(p), "-q", "--override", "train.total_steps=150"]) == EXIT_OK
    out2 = tmp_path / "learned.jsonl"
    assert main(["replay", str(out_root / "tiny" / "seed_0" / "checkpoint.npz"), "--out", str(out2)]) == EXIT_OK
    header, steps = read_trajectory(out2)
    assert header["method"] == "mage_x" and len(steps) == 30
