from __future__ import annotations

import io
import json
from pathlib import Path

import pytest

from socialgate import gbdt, sim
from socialgate.backends import MockBackend
from socialgate.gate import GAZE, GateConfig, run_stage_one
from socialgate.ingest import Episode
from socialgate.orchestrator import Provenance
from socialgate.pipeline import (
    ConfigError,
    MetricsReport,
    RunConfig,
    baseline_distance_only,
    parse_report,
    report_json,
    report_text,
    run_pipeline,
    timing_category,
    write_decisions,
)
from socialgate.sim import Actor, HeadTurn, ScenarioSpec, synthesize

from .oracles import oracle_classifier

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Six benchmark episodes with mock scripts, a trained model and a run config."""
    root = tmp_path_factory.mktemp("ws")
    sim.write_suite(sim.benchmark_suite(6, seed=1), root / "episodes")
    model = gbdt.fit(sim.build_training_set(sim.training_suite(60, seed=5)), gbdt.TrainConfig())
    gbdt.save_model(model, root / "model.json")
    config = {"v": 1, "episodes": ["episodes"], "model": "model.json", "backend": "mock",
              "mock_root": "episodes/mock", "stage_two": {"strategy": "SelfConsistency"}}
    (root / "run.json").write_text(json.dumps(config))
    return root


# -------------------------------------------------------------------- config

def test_config_errors_are_listed_together(tmp_path):
    obj = {"episodes": ["missing.jsonl"], "bogus": 1, "gate": {"threshold": 2.0, "nope": 0},
           "backend": "mock", "stage_two": {"k": 0}}
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(obj, tmp_path)
    text = str(err.value)
    for needle in ("missing.jsonl", "bogus: unknown field", "gate.nope", "threshold",
                   "mock_root: required", "model: give a model file", "stage_two"):
        assert needle in text
    assert len(err.value.problems) >= 7


def test_http_backend_needs_url(tmp_path):
    with pytest.raises(ConfigError, match="http.url"):
        RunConfig.from_dict({"backend": "http"}, tmp_path)
    cfg = RunConfig.from_dict({"backend": "http", "http": {"url": "http://x", "model_id": "m"}})
    assert cfg.http_url == "http://x"


def test_overrides_and_relative_paths(workspace):
    cfg = RunConfig.load(workspace / "run.json", {"stage_two.k": 3, "stage_two.eta": 0.5})
    assert cfg.stage_two.k == 3 and cfg.stage_two.eta == 0.5
    assert Path(cfg.mock_root) == workspace / "episodes" / "mock"


def test_empty_suite_gives_zero_report(tmp_path):
    (tmp_path / "mock").mkdir()
    cfg = RunConfig.from_dict({"mock_root": "mock"}, tmp_path)
    report, decisions = run_pipeline(cfg)
    assert decisions == []
    assert report.episodes == 0 and report.vlm_calls["total"] == 0 and report.vlm_requests == 0
    text = report_text(report)
    assert "vlm_calls         0 (gaze 0, proxemic 0)" in text
    assert "action accuracy     0/0 (0.000)" in text


# ------------------------------------------------------------------ baseline

def _track(traj, script=(), duration=14.0, role="interactor"):
    return ScenarioSpec("b", duration, (Actor("p1", traj, script, role),), 0.01, 3)


def test_baseline_is_late_where_gaze_is_on_time():
    turn = HeadTurn(4.5, "toward", 0.5, 0.6)
    spec = _track(((0.0, 3.5), (3.0, 2.5), (6.0, 2.5), (9.0, 1.2), (10.0, 1.0), (14.0, 1.0)), (turn,))
    ep, gt = synthesize(spec)
    assert float(spec.actors[0].distance(4.5)) == pytest.approx(2.5)
    base = baseline_distance_only(ep)
    assert [round(e.trigger_time, 3) for e in base] == [9.0]
    assert base[0].clip == pytest.approx((9.0, 11.0))
    res = run_stage_one(ep, None, classifier=oracle_classifier(spec))
    first = min(e.trigger_time for e in res.events["p1"])
    assert res.events["p1"][0].kind == GAZE
    assert timing_category(res.events["p1"], 4.5, 0.0, 2.0) == "on_time"
    assert timing_category(base, 4.5, 0.0, 2.0) == "late"
    assert first == 4.0


def test_baseline_no_entry():
    ep, _ = synthesize(_track(((0.0, 3.0), (14.0, 1.5))))
    assert baseline_distance_only(ep) == []


def test_baseline_starting_inside_fires_at_first_frame():
    ep, _ = synthesize(_track(((0.0, 1.0), (14.0, 1.0))))
    base = baseline_distance_only(ep)
    assert [e.trigger_time for e in base] == [0.0]


def test_baseline_empty_episode():
    assert baseline_distance_only(Episode("e", ())) == []


@pytest.mark.parametrize("first,expected", [(None, "missed"), (2.0, "on_time"), (7.9, "on_time"),
                                            (8.0, "late"), (1.9, "late")])
def test_timing_category_window_tolerance(first, expected):
    from socialgate.gate import TriggerEvent
    events = [] if first is None else [TriggerEvent("p", GAZE, first, (0, 1))]
    assert timing_category(events, 5.0, 0.0, 2.0, 1) == expected


# ---------------------------------------------------------------- full runs

def test_requests_match_backend_count(workspace):
    cfg = RunConfig.load(workspace / "run.json")
    backend = MockBackend(cfg.mock_root)
    report, decisions = run_pipeline(cfg, backend=backend)
    assert report.vlm_requests == backend.call_count > 0
    assert report.vlm_calls["total"] == len(decisions)
    assert report.vlm_calls["total"] <= report.budget["exhaustive_calls"]
    assert report.vlm_requests <= report.exhaustive_requests


def test_every_interactant_in_exactly_one_timing_category(workspace):
    cfg = RunConfig.load(workspace / "run.json")
    report, _ = run_pipeline(cfg)
    interactants = 0
    for path in sorted((workspace / "episodes").glob("*.jsonl")):
        from socialgate.ingest import load_episode
        gt = load_episode(path).ground_truth
        interactants += sum(t.role == "interactor" and bool(t.preambles) for t in gt.tracks.values())
    for name in ("two_stage", "distance_only"):
        c = report.comparison[name]
        assert c["on_time"] + c["late"] + c["missed"] == interactants
        assert 0 <= c["on_time_rate"] <= 1


def test_rates_within_unit_interval(workspace):
    report, _ = run_pipeline(RunConfig.load(workspace / "run.json"))
    for v in (report.main_interactant["rate"], report.action["accuracy"],
              *(report.classifier[k] for k in ("accuracy", "precision", "recall", "f1", "roc_auc"))):
        assert 0 <= v <= 1


def test_runs_are_deterministic(workspace):
    cfg = RunConfig.load(workspace / "run.json")
    outs = []
    for _ in range(2):
        report, decisions = run_pipeline(cfg)
        buf = io.StringIO()
        write_decisions(decisions, buf)
        outs.append((report_json(report), buf.getvalue()))
    assert outs[0] == outs[1]


def test_golden_report(workspace):
    report, _ = run_pipeline(RunConfig.load(workspace / "run.json"))
    assert report_json(report) == (GOLDEN / "report_bench6.json").read_text()
    assert report_text(report) == (GOLDEN / "report_bench6.txt").read_text()


def test_critique_strategy_runs(workspace):
    cfg = RunConfig.load(workspace / "run.json", {"stage_two.strategy": "SelfCritique"})
    report, decisions = run_pipeline(cfg)
    assert report.strategy == "SelfCritique"
    assert all(d.provenance is Provenance.ACTION_PROMPT for d in decisions)


def test_backend_failure_degrades_to_gate_default(workspace, tmp_path):
    (tmp_path / "mock").mkdir()
    cfg = RunConfig.load(workspace / "run.json", {"mock_root": str(tmp_path / "mock")})
    report, decisions = run_pipeline(cfg)
    assert decisions and all(d.provenance is Provenance.GATE_DEFAULT for d in decisions)
    assert all(d.action == "Probe" for d in decisions)
    assert report.deferrals["GateDefault"] == len(decisions)


# ----------------------------------------------------------------- rendering

def test_report_round_trip_and_three_decimals():
    report = MetricsReport(episodes=1)
    report.action = {"correct": 2, "total": 3, "accuracy": 2 / 3}
    text = report_json(report)
    assert '"accuracy": 0.667' in text
    back = parse_report(text)
    assert back.action["accuracy"] == 0.667
    assert report_json(back) == text
    assert "2/3 (0.667)" in report_text(report)


def test_report_rejects_foreign_json():
    with pytest.raises(ValueError):
        parse_report(json.dumps({"format": "other", "v": 1}))


def test_gate_config_in_run_config(tmp_path):
    (tmp_path / "m").mkdir()
    cfg = RunConfig.from_dict({"mock_root": "m", "gate": {"personal_zone_m": 1.0}}, tmp_path)
    assert cfg.gate == GateConfig(personal_zone_m=1.0)
