from __future__ import annotations

import json
import subprocess
import sys

import pytest

from socialgate import sim
from socialgate.cli import load_features, main, save_features


@pytest.fixture(scope="module")
def cli_ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sim.save_suite(sim.benchmark_suite(3, seed=1), root / "bench.json")
    (root / "train.json").write_text(json.dumps({"v": 1, "generate": [
        {"kind": "training", "n": 40, "seed": 5}]}))
    assert main(["sim", "gen", "--suite", str(root / "bench.json"), "--out", str(root / "eps")]) == 0
    assert main(["gbdt", "features", "--suite", str(root / "train.json"),
                 "--out", str(root / "train.csv")]) == 0
    assert main(["gbdt", "train", "--features", str(root / "train.csv"),
                 "--out", str(root / "model.json"), "--rounds", "30"]) == 0
    (root / "run.json").write_text(json.dumps({
        "episodes": ["eps"], "model": "model.json", "mock_root": "eps/mock"}))
    return root


def test_sim_gen_outputs(cli_ws):
    names = sorted(p.name for p in (cli_ws / "eps").iterdir())
    assert "bench000.jsonl" in names and "mock" in names


def test_features_csv_round_trip(cli_ws, tmp_path):
    data = load_features(cli_ws / "train.csv")
    assert data.X.shape == (80, 21)
    save_features(data, tmp_path / "again.csv")
    again = load_features(tmp_path / "again.csv")
    assert (again.X == data.X).all() and (again.y == data.y).all()


def test_features_from_episodes(cli_ws, tmp_path, capsys):
    assert main(["gbdt", "features", "--episodes", str(cli_ws / "eps"),
                 "--out", str(tmp_path / "f.csv")]) == 0
    assert "rows" in capsys.readouterr().out


def test_gbdt_eval(cli_ws, capsys):
    assert main(["gbdt", "eval", "--features", str(cli_ws / "train.csv"),
                 "--model", str(cli_ws / "model.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"accuracy", "precision", "recall", "f1", "roc_auc", "confusion"}


def test_gbdt_train_with_cv(cli_ws, tmp_path):
    assert main(["gbdt", "train", "--features", str(cli_ws / "train.csv"), "--out",
                 str(tmp_path / "m.json"), "--rounds", "10", "--depth", "2", "--cv", "3"]) == 0
    assert (tmp_path / "m.json").exists()


def test_gate_run(cli_ws, tmp_path):
    args = ["gate", "run", "--episode", str(cli_ws / "eps" / "bench000.jsonl"),
            "--model", str(cli_ws / "model.json"), "--out", str(tmp_path / "trig.jsonl"),
            "--overlay", str(tmp_path / "ov.json"), "--dump-traces", str(tmp_path / "tr.csv")]
    assert main(args) == 0
    lines = (tmp_path / "trig.jsonl").read_text().splitlines()
    assert "summary" in json.loads(lines[-1])
    assert json.loads((tmp_path / "ov.json").read_text())["v"] == 1
    header = (tmp_path / "tr.csv").read_text().splitlines()[0]
    assert header.startswith("track_id,window_start,frame,")


def test_pipeline_run_and_compare(cli_ws, tmp_path, capsys):
    a, b = tmp_path / "sc", tmp_path / "crit"
    assert main(["pipeline", "run", "--config", str(cli_ws / "run.json"), "--out", str(a)]) == 0
    assert main(["pipeline", "run", "--config", str(cli_ws / "run.json"), "--out", str(b),
                 "--strategy", "SelfCritique", "-v"]) == 0
    for d in (a, b):
        assert {p.name for p in d.iterdir()} == {"report.json", "report.txt", "decisions.jsonl"}
    capsys.readouterr()
    assert main(["pipeline", "compare", str(a / "report.json"), str(b / "report.json")]) == 0
    out = capsys.readouterr().out
    assert "SelfCritique" in out and "vlm_requests" in out


def test_config_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.json").write_text(json.dumps({"episodes": ["nope"], "x": 1}))
    assert main(["pipeline", "run", "--config", str(tmp_path / "bad.json")]) == 2
    err = capsys.readouterr().err
    assert "nope" in err and "x: unknown field" in err


def test_missing_file_exit_code(tmp_path):
    assert main(["gbdt", "eval", "--features", str(tmp_path / "no.csv"),
                 "--model", str(tmp_path / "no.json")]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "socialgate", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for group in ("sim", "gbdt", "gate", "pipeline"):
        assert group in out
