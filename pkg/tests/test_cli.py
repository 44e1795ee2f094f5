import csv
import json

import pytest

from uavlora import io
from uavlora.cli import main

DEFAULT = str(__import__("pathlib").Path(__file__).resolve().parents[1] / "configs" / "default.json")
FAST = ["--override", "world.horizon=4"]


def only_run(root):
    (run,) = root.iterdir()
    return run


def test_validate_config_default_ok(capsys):
    assert main(["validate-config", "--config", DEFAULT]) == 0
    assert "config OK" in capsys.readouterr().out


def test_validate_config_reports_problems(tmp_path, capsys):
    bad = json.loads(open(DEFAULT).read())
    bad["world"]["num_uavs"] = 0
    bad["radio"]["bw_set_khz"] = [200]
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert main(["validate-config", "--config", str(tmp_path / "bad.json")]) != 0
    err = capsys.readouterr().err
    assert "num_uavs" in err and "BW" in err


def test_malformed_config(tmp_path):
    (tmp_path / "x.json").write_text("{not json")
    assert main(["validate-config", "--config", str(tmp_path / "x.json")]) != 0
    assert main(["validate-config", "--override", "world.nope=3"]) != 0


@pytest.mark.parametrize("argv", [["bogus"], ["simulate", "--frobnicate"], []])
def test_usage_errors(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--seed", "3", "--policy", "greedy", "--out", str(tmp_path), *FAST]) == 0
    run = only_run(tmp_path)
    header, records = io.read_trace(run / "trace.jsonl")
    assert header["policy"] == "greedy" and header["version"] == 1
    assert [r["t"] for r in records] == [0, 1, 2, 3]
    assert set(header["fields"]) == set(records[0])
    rows = list(csv.DictReader(open(run / "association.csv")))
    assert len(rows) == 10
    assert (run / "config.json").exists() and run.name.split("-")[2] == "s3"


def test_train_evaluate_export(tmp_path):
    train_root, eval_root, plot_root = tmp_path / "t", tmp_path / "e", tmp_path / "p"
    common = FAST + ["--override", "train.hidden=8", "--override", "train.total_steps=64"]
    assert main(["train", "--seed", "1", "--out", str(train_root), *common]) == 0
    run = only_run(train_root)
    metrics = io.read_metrics(run / "metrics.csv")
    assert len(metrics) == 2
    assert (run / "checkpoints" / "actor_final_0.npz").exists()

    assert main(["evaluate", "--checkpoint", str(run), "--uav-counts", "2", "3", "--out", str(eval_root),
                 *common]) == 0
    ev = only_run(eval_root)
    ed_rows = io.read_table(ev / "ed_sweep.csv")
    assert len(ed_rows) == 6 * 3  # six ED counts x the config's three seeds
    assert sorted({int(r["num_eds"]) for r in ed_rows}) == [10, 20, 40, 60, 80, 100]
    trained = [r for r in ed_rows if r["trained_ee"] != ""]
    assert {int(r["num_eds"]) for r in trained} == {10}  # only the training scenario fits the network
    assert len(io.read_table(ev / "uav_sweep.csv")) == 2 * 3

    assert main(["export-plots", "--runs", str(run), str(ev), "--out", str(plot_root)]) == 0
    plots = only_run(plot_root)
    curve = io.read_table(plots / "reward_curve.csv")
    assert len(curve) == 2 and curve[0]["seed"] == "1"
    bars = io.read_table(plots / "ee_bars_num_eds.csv")
    assert {r["policy"] for r in bars} == {"random", "greedy", "trained"}


def test_evaluate_rejects_missing_checkpoint(tmp_path):
    assert main(["evaluate", "--checkpoint", str(tmp_path / "nothing"), "--out", str(tmp_path / "o"), *FAST]) != 0


def test_oracle_command(tmp_path):
    assert main(["oracle", "--instances", "3", "--num-eds", "3", "--out", str(tmp_path)]) == 0
    rows = io.read_table(only_run(tmp_path) / "oracle.csv")
    assert len(rows) == 3
    for r in rows:
        assert float(r["oracle_ee"]) >= float(r["greedy_ee"]) >= 0
        assert float(r["oracle_ee"]) >= float(r["random_ee"])


def test_oracle_refuses_large_space(tmp_path, capsys):
    assert main(["oracle", "--num-eds", "12", "--instances", "1", "--out", str(tmp_path)]) != 0
    assert "search space" in capsys.readouterr().err
