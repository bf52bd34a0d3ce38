"""Replay harness: run both stages over episodes and score them against ground truth.

Counting conventions in the report:

* ``vlm_calls``: trigger events sent to Stage II (one clip inference each);
* ``vlm_requests``: backend requests actually issued (samples, synthesis, action);
* ``exhaustive_calls``: one clip inference per person per window.

Timing categories per ground-truth interactant: ``on_time`` if the earliest
trigger lands within the preamble's window plus or minus one window, ``late``
if the track triggered but not in that span, ``missed`` if it never triggered.
"""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .backends import Backend, BackendError, HttpBackend, MockBackend
from .gate import (
    PROXEMIC,
    CallBudget,
    GateConfig,
    TriggerEvent,
    _zone_entry,
    clip_for,
    run_stage_one,
)
from .features import track_windows
from .gbdt import GbdtModel, Metrics, TrainConfig, evaluate, fit, load_model
from .ingest import Episode, load_episode
from .orchestrator import PROBE, Decision, Provenance, StageTwoConfig, Strategy, run_stage_two
from .sim import NoPreamblesError, build_training_set, labeled_windows, load_suite

logger = logging.getLogger(__name__)

REPORT_FORMAT = "socialgate-report"
REPORT_VERSION = 1
TIMING = ("on_time", "late", "missed")


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid run config:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class RunConfig:
    episodes: tuple[str, ...] = ()
    model: str | None = None
    train_suite: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    gate: GateConfig = field(default_factory=GateConfig)
    stage_two: StageTwoConfig = field(default_factory=StageTwoConfig)
    backend: str = "mock"
    mock_root: str | None = None
    http_url: str | None = None
    http_model: str | None = None
    http_timeout: float = 60.0
    timing_tolerance_windows: int = 1

    @classmethod
    def from_dict(cls, obj: dict, base: str | Path = ".") -> "RunConfig":
        """Build and validate a config; every problem found is reported at once."""
        problems: list[str] = []
        base = Path(base)

        def path(value):
            if value is None:
                return None
            p = Path(value)
            return str(p if p.is_absolute() else base / p)

        def sub(name, klass):
            raw = obj.get(name, {})
            if not isinstance(raw, dict):
                problems.append(f"{name}: expected an object")
                return klass()
            known = {f.name for f in fields(klass)}
            for key in sorted(set(raw) - known):
                problems.append(f"{name}.{key}: unknown field")
            try:
                return klass(**{k: v for k, v in raw.items() if k in known})
            except (TypeError, ValueError) as exc:
                problems.append(f"{name}: {exc}")
                return klass()

        known_top = {"v", "episodes", "model", "train_suite", "train", "gate", "stage_two",
                     "backend", "mock_root", "http", "timing_tolerance_windows"}
        for key in sorted(set(obj) - known_top):
            problems.append(f"{key}: unknown field")
        if obj.get("v", 1) != 1:
            problems.append(f"v: unsupported config version {obj.get('v')!r}")
        episodes = obj.get("episodes", [])
        if isinstance(episodes, str):
            episodes = [episodes]
        episodes = tuple(path(e) for e in episodes)
        for e in episodes:
            if not Path(e).exists():
                problems.append(f"episodes: {e} does not exist")
        model = path(obj.get("model"))
        train_suite = path(obj.get("train_suite"))
        if model is not None and not Path(model).exists() and train_suite is None:
            problems.append(f"model: {model} does not exist and no train_suite is given")
        if model is None and train_suite is None and episodes:
            problems.append("model: give a model file or a train_suite")
        if train_suite is not None and not Path(train_suite).exists():
            problems.append(f"train_suite: {train_suite} does not exist")
        train = sub("train", TrainConfig)
        gate = sub("gate", GateConfig)
        stage_two = sub("stage_two", StageTwoConfig)
        backend = obj.get("backend", "mock")
        mock_root = path(obj.get("mock_root"))
        http = obj.get("http", {}) or {}
        if backend == "mock":
            if mock_root is None:
                problems.append("mock_root: required for the mock backend")
            elif not Path(mock_root).is_dir():
                problems.append(f"mock_root: {mock_root} is not a directory")
        elif backend == "http":
            for key in ("url", "model_id"):
                if not http.get(key):
                    problems.append(f"http.{key}: required for the http backend")
        else:
            problems.append(f"backend: expected 'mock' or 'http', got {backend!r}")
        tol = obj.get("timing_tolerance_windows", 1)
        if not isinstance(tol, int) or tol < 0:
            problems.append("timing_tolerance_windows: expected an integer >= 0")
        if problems:
            raise ConfigError(problems)
        return cls(episodes, model, train_suite, train, gate, stage_two, backend, mock_root,
                   http.get("url"), http.get("model_id"), float(http.get("timeout", 60.0)), tol)

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        with open(path) as fh:
            obj = json.load(fh)
        for dotted, value in (overrides or {}).items():
            node = obj
            *parents, leaf = dotted.split(".")
            for p in parents:
                node = node.setdefault(p, {})
            node[leaf] = value
        return cls.from_dict(obj, Path(path).parent)


def episode_paths(sources: Iterable[str | Path]) -> list[Path]:
    out = []
    for src in sources:
        src = Path(src)
        out += sorted(src.glob("*.jsonl")) if src.is_dir() else [src]
    return out


def make_backend(config: RunConfig) -> Backend:
    if config.backend == "mock":
        return MockBackend(config.mock_root)
    return HttpBackend(config.http_url, config.http_model, config.http_timeout)


def resolve_model(config: RunConfig) -> GbdtModel:
    if config.model is not None and Path(config.model).exists():
        return load_model(config.model)
    logger.info("training a model from %s", config.train_suite)
    return fit(build_training_set(load_suite(config.train_suite)), config.train)


# ------------------------------------------------------------------ baseline

def baseline_distance_only(episode: Episode, config: GateConfig | None = None) -> list[TriggerEvent]:
    """One trigger per personal-zone entry, clip = entry + tail; no classifier."""
    config = config or GateConfig()
    bounds = (episode.start, episode.end)
    events = []
    for tid, wins in (track_windows(episode, config.window_s, config.stride_s)
                      if episode.frames else {}).items():
        for win in wins:
            t = _zone_entry(win, config.personal_zone_m)
            if t is not None:
                events.append(TriggerEvent(tid, PROXEMIC, t, clip_for(PROXEMIC, t, config, bounds),
                                           episode_id=episode.episode_id))
    return sorted(events, key=lambda e: (e.trigger_time, e.track_id))


# ------------------------------------------------------------------- scoring

def timing_category(events: Sequence[TriggerEvent], reference: float, episode_start: float,
                    window_s: float, tolerance_windows: int = 1) -> str:
    if not events:
        return "missed"
    k = int((reference - episode_start) // window_s)
    lo = episode_start + (k - tolerance_windows) * window_s
    hi = episode_start + (k + 1 + tolerance_windows) * window_s
    first = min(e.trigger_time for e in events)
    return "on_time" if lo <= first < hi else "late"


@dataclass
class TimingCounts:
    on_time: int = 0
    late: int = 0
    missed: int = 0

    @property
    def total(self) -> int:
        return self.on_time + self.late + self.missed

    @property
    def on_time_rate(self) -> float:
        return self.on_time / self.total if self.total else 0.0

    def add(self, category: str) -> None:
        setattr(self, category, getattr(self, category) + 1)


@dataclass
class EpisodeScore:
    episode_id: str
    budget: CallBudget
    vlm_requests: int
    two_stage: TimingCounts
    baseline: TimingCounts
    baseline_events: int
    main_hit: int
    main_total: int
    action_correct: int
    action_total: int
    deferrals: Counter
    decisions: list[Decision]


@dataclass
class MetricsReport:
    episodes: int = 0
    classifier: dict = field(default_factory=lambda: {
        "n": 0, "accuracy": 0.0, "precision": 0.0, "recall": 0.0, "f1": 0.0, "roc_auc": 0.0})
    budget: dict = field(default_factory=lambda: CallBudget().as_dict())
    vlm_calls: dict = field(default_factory=lambda: {"gaze": 0, "proxemic": 0, "total": 0})
    vlm_requests: int = 0
    exhaustive_requests: int = 0
    comparison: dict = field(default_factory=dict)
    main_interactant: dict = field(default_factory=lambda: {"hits": 0, "total": 0, "rate": 0.0})
    action: dict = field(default_factory=lambda: {"correct": 0, "total": 0, "accuracy": 0.0})
    deferrals: dict = field(default_factory=lambda: {p.value: 0 for p in Provenance})
    strategy: str = Strategy.SELF_CONSISTENCY.value

    def to_json(self) -> dict:
        return {"format": REPORT_FORMAT, "v": REPORT_VERSION, **asdict(self)}

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        obj = dict(obj)
        if obj.pop("format", REPORT_FORMAT) != REPORT_FORMAT or obj.pop("v", 1) != REPORT_VERSION:
            raise ValueError("not a socialgate report")
        return cls(**obj)


def _rate(num: int, den: int) -> float:
    return num / den if den else 0.0


def _timing_dict(t: TimingCounts, events: int, extra: dict | None = None) -> dict:
    return {"events": events, **asdict(t), "on_time_rate": t.on_time_rate, **(extra or {})}


def _first_action(decisions: Sequence[Decision]) -> str:
    for d in sorted(decisions, key=lambda d: d.event.trigger_time):
        if d.action != PROBE:
            return d.action
    return PROBE


def score_episode(episode: Episode, model: GbdtModel, backend: Backend, config: RunConfig,
                  classifier=None) -> EpisodeScore:
    before = getattr(backend, "call_count", 0)
    stage_one = run_stage_one(episode, model, config.gate, classifier)
    decisions: list[Decision] = []
    for event in stage_one.all_events:
        try:
            decision, _ = run_stage_two(event, backend, config.stage_two)
        except BackendError as exc:
            logger.error("stage II failed for %s/%s at %.2fs: %s", event.episode_id,
                         event.track_id, event.trigger_time, exc)
            decision = Decision(PROBE, "backend unavailable", Provenance.GATE_DEFAULT, event,
                                diagnostic=str(exc))
        decisions.append(decision)
    requests = getattr(backend, "call_count", 0) - before

    baseline = baseline_distance_only(episode, config.gate)
    gt = episode.ground_truth
    two, base = TimingCounts(), TimingCounts()
    main_hit = main_total = correct = total = 0
    if gt is not None:
        w = config.gate.window_s
        for tid, truth in sorted(gt.tracks.items()):
            mine = stage_one.events.get(tid, [])
            if truth.role == "interactor" and truth.preambles:
                ref = truth.preambles[0]
                two.add(timing_category(mine, ref, episode.start, w, config.timing_tolerance_windows))
                base.add(timing_category([e for e in baseline if e.track_id == tid], ref,
                                         episode.start, w, config.timing_tolerance_windows))
            if truth.action is not None:
                total += 1
                predicted = _first_action([d for d in decisions if d.event.track_id == tid])
                correct += predicted == truth.action
        if gt.main_interactant is not None:
            main_total = 1
            main_hit = int(bool(stage_one.events.get(gt.main_interactant)))
    deferrals = Counter(d.provenance.value for d in decisions)
    return EpisodeScore(episode.episode_id, stage_one.budget, requests, two, base, len(baseline),
                        main_hit, main_total, correct, total, deferrals, decisions)


def aggregate(scores: Sequence[EpisodeScore], config: RunConfig,
              classifier_metrics: Metrics | None = None, n_labeled: int = 0) -> MetricsReport:
    """Order-insensitive sum of episode scores."""
    report = MetricsReport(strategy=config.stage_two.strategy.value)
    budget = CallBudget()
    two, base = TimingCounts(), TimingCounts()
    base_events = requests = 0
    for s in scores:
        budget.add(s.budget)
        requests += s.vlm_requests
        base_events += s.baseline_events
        for attr in TIMING:
            setattr(two, attr, getattr(two, attr) + getattr(s.two_stage, attr))
            setattr(base, attr, getattr(base, attr) + getattr(s.baseline, attr))
        report.main_interactant["hits"] += s.main_hit
        report.main_interactant["total"] += s.main_total
        report.action["correct"] += s.action_correct
        report.action["total"] += s.action_total
        for k, v in s.deferrals.items():
            report.deferrals[k] += v
    report.episodes = len(scores)
    report.budget = budget.as_dict()
    report.vlm_calls = {"gaze": budget.gaze_events, "proxemic": budget.proxemic_events,
                        "total": budget.vlm_events}
    report.vlm_requests = requests
    per_event = config.stage_two.k + 2
    report.exhaustive_requests = budget.exhaustive_calls * per_event
    report.comparison = {
        "two_stage": _timing_dict(two, budget.vlm_events),
        "distance_only": _timing_dict(base, base_events),
        "exhaustive": {"events": budget.exhaustive_calls},
    }
    report.main_interactant["rate"] = _rate(report.main_interactant["hits"],
                                            report.main_interactant["total"])
    report.action["accuracy"] = _rate(report.action["correct"], report.action["total"])
    if classifier_metrics is not None:
        m = classifier_metrics
        report.classifier = {"n": n_labeled, "accuracy": m.accuracy, "precision": m.precision,
                             "recall": m.recall, "f1": m.f1,
                             "roc_auc": 0.0 if np.isnan(m.roc_auc) else m.roc_auc}
    return report


def run_pipeline(config: RunConfig, episodes: Sequence[Episode] | None = None,
                 model: GbdtModel | None = None, backend: Backend | None = None,
                 classifier=None) -> tuple[MetricsReport, list[Decision]]:
    """Replay every episode through both stages; returns the report and the decision log."""
    if episodes is None:
        episodes = [load_episode(p) for p in episode_paths(config.episodes)]
    if not episodes:
        return aggregate([], config), []
    model = model if model is not None else (resolve_model(config) if classifier is None else None)
    backend = backend if backend is not None else make_backend(config)
    scores = [score_episode(ep, model, backend, config, classifier) for ep in episodes]
    metrics, n = None, 0
    if model is not None:
        try:
            with_labels = labeled_windows(episodes, config.gate.window_s)
            metrics, n = evaluate(model, with_labels, config.gate.threshold), len(with_labels.y)
        except NoPreamblesError:
            pass
    report = aggregate(scores, config, metrics, n)
    return report, [d for s in scores for d in s.decisions]


# ----------------------------------------------------------------- rendering

def _round(obj):
    if isinstance(obj, float):
        return round(obj, 3)
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round(v) for v in obj]
    return obj


def report_json(report: MetricsReport) -> str:
    """Machine-readable report: sorted keys, floats rounded to 3 decimals."""
    return json.dumps(_round(report.to_json()), indent=2, sort_keys=True) + "\n"


def report_text(report: MetricsReport) -> str:
    b, c = report.budget, report.comparison
    lines = [
        f"episodes            {report.episodes}",
        f"strategy            {report.strategy}",
        "classifier",
    ]
    lines += [f"  {k:<17} {report.classifier[k]:.3f}" for k in
              ("accuracy", "precision", "recall", "f1", "roc_auc")]
    lines += [f"  {'n':<17} {report.classifier['n']}", "call budget"]
    lines += [f"  {k:<17} {b[k]}" for k in sorted(b)]
    lines += [
        f"  {'vlm_calls':<17} {report.vlm_calls['total']} "
        f"(gaze {report.vlm_calls['gaze']}, proxemic {report.vlm_calls['proxemic']})",
        f"  {'vlm_requests':<17} {report.vlm_requests} of {report.exhaustive_requests} exhaustive",
        "timing (interactants)        events  on_time  late  missed  on_time_rate",
    ]
    for name in ("two_stage", "distance_only"):
        t = c.get(name) or _timing_dict(TimingCounts(), 0)
        lines.append(f"  {name:<26} {t['events']:>6} {t['on_time']:>8} {t['late']:>5} "
                     f"{t['missed']:>7} {t['on_time_rate']:>13.3f}")
    lines.append(f"  {'exhaustive':<26} {c.get('exhaustive', {}).get('events', 0):>6}")
    mi, ac = report.main_interactant, report.action
    lines += [
        f"main interactant    {mi['hits']}/{mi['total']} ({mi['rate']:.3f})",
        f"action accuracy     {ac['correct']}/{ac['total']} ({ac['accuracy']:.3f})",
        "decisions by provenance",
    ]
    lines += [f"  {k:<21} {report.deferrals[k]}" for k in sorted(report.deferrals)]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> MetricsReport:
    return MetricsReport.from_json(json.loads(text))


def write_decisions(decisions: Sequence[Decision], fh: IO[str]) -> None:
    for d in decisions:
        fh.write(json.dumps(d.to_json(), sort_keys=True) + "\n")
