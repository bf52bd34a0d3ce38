"""Stage I: decide per person and 2-second window whether a preamble occurred.

Rule order for one window:

1. every distance sample beyond ``far_exclusion_m`` -> excluded, no classifier run;
2. classifier probability >= threshold -> gaze trigger at the window start;
3. the track crosses into ``personal_zone_m`` inside the window and no gaze
   trigger covers this window -> proxemic trigger at the first in-zone frame;
4. otherwise no trigger (the robot keeps probing).

A feature failure (short window, occluded head) yields no trigger and is logged.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Sequence

import numpy as np

from .features import FeatureError, TrackWindow, track_windows, window_features
from .gbdt import GbdtModel, predict_proba
from .ingest import Episode, PoseFrame

logger = logging.getLogger(__name__)

GAZE = "GazeShift"
PROXEMIC = "ProxemicEntry"
BASE_COLOR = {GAZE: "blue", PROXEMIC: "orange"}
FIRED_COLOR = "green"
BOX_PAD = 0.10


@dataclass(frozen=True)
class GateConfig:
    far_exclusion_m: float = 4.0
    personal_zone_m: float = 1.2
    window_s: float = 2.0
    stride_s: float = 2.0
    group_merge_s: float = 1.0
    gaze_pad_s: float = 2.0
    proxemic_tail_s: float = 2.0
    threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.personal_zone_m < self.far_exclusion_m:
            raise ValueError("need 0 < personal_zone_m < far_exclusion_m")
        for name in ("window_s", "stride_s", "group_merge_s", "gaze_pad_s", "proxemic_tail_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 <= self.threshold <= 1:
            raise ValueError("threshold must be in [0, 1]")


class Outcome(str, Enum):
    GAZE = "gaze"
    PROXEMIC = "proxemic"
    PROBE = "probe"
    EXCLUDED = "excluded_far"


@dataclass(frozen=True)
class GateResult:
    outcome: Outcome
    trigger_time: float | None = None
    score: float | None = None
    classifier_ran: bool = False
    diagnostic: str | None = None


@dataclass(frozen=True)
class OverlayEntry:
    frame_time: float
    box: tuple[float, float, float, float]  # x0, y0, x1, y1 in pixels
    color: str


@dataclass(frozen=True)
class TriggerEvent:
    track_id: str
    kind: str
    trigger_time: float
    clip: tuple[float, float]
    score: float | None = None
    overlay: tuple[OverlayEntry, ...] = ()
    episode_id: str | None = None

    @property
    def duration(self) -> float:
        return self.clip[1] - self.clip[0]

    def to_json(self) -> dict:
        return {"episode_id": self.episode_id, "track_id": self.track_id, "kind": self.kind,
                "time": self.trigger_time, "clip": list(self.clip), "score": self.score}


def gate_window(window: TrackWindow, model: GbdtModel | None, config: GateConfig,
                history: Sequence[TriggerEvent] = (), classifier=None) -> GateResult:
    """Apply the Stage I rules to one track window.

    ``classifier`` overrides the model: any callable mapping a TrackWindow to a
    probability (used for oracle checks against scripted ground truth).
    """
    dist = window.distances
    valid = dist[np.isfinite(dist)]
    if valid.size and valid.min() > config.far_exclusion_m:
        return GateResult(Outcome.EXCLUDED)
    try:
        if classifier is not None:
            score = float(classifier(window))
        else:
            score = float(predict_proba(model, window_features(window)))
    except FeatureError as exc:
        logger.debug("track %s window %.2f: %s", window.track_id, window.start, exc)
        return GateResult(Outcome.PROBE, diagnostic=str(exc))
    if score >= config.threshold:
        return GateResult(Outcome.GAZE, window.start, score, True)
    entry = _zone_entry(window, config.personal_zone_m)
    if entry is not None and not _gaze_covers(history, window, config):
        return GateResult(Outcome.PROXEMIC, entry, score, True)
    return GateResult(Outcome.PROBE, score=score, classifier_ran=True)


def _zone_entry(window: TrackWindow, zone: float) -> float | None:
    """Time of the first in-window crossing into the zone (or first sample if it starts inside)."""
    prev = window.prev_distance
    for frame in window.frames:
        d = frame.distance_m
        if d is None:
            continue
        if d <= zone and (prev is None or prev > zone):
            return frame.timestamp
        prev = d
    return None


def _gaze_covers(history: Sequence[TriggerEvent], window: TrackWindow, config: GateConfig) -> bool:
    lo, hi = window.start, window.start + window.duration
    return any(e.kind == GAZE and e.track_id == window.track_id
               and e.trigger_time < hi and e.trigger_time + config.window_s > lo
               for e in history)


def group_triggers(events: Sequence[TriggerEvent], config: GateConfig) -> list[TriggerEvent]:
    """Chain-merge consecutive events that are within ``group_merge_s`` of each other.

    The merged event keeps the earliest trigger time and the union of clip
    spans; it is a gaze event if any member was.
    """
    merged: list[TriggerEvent] = []
    group: list[TriggerEvent] = []

    def flush():
        if not group:
            return
        kind = GAZE if any(e.kind == GAZE for e in group) else PROXEMIC
        scores = [e.score for e in group if e.kind == GAZE and e.score is not None]
        merged.append(TriggerEvent(
            group[0].track_id, kind, group[0].trigger_time,
            (min(e.clip[0] for e in group), max(e.clip[1] for e in group)),
            max(scores) if scores else None,
            episode_id=group[0].episode_id))

    for event in events:
        if group and event.trigger_time - group[-1].trigger_time > config.group_merge_s:
            flush()
            group = []
        group.append(event)
    flush()
    return merged


def clip_for(kind: str, trigger_time: float, config: GateConfig,
             bounds: tuple[float, float]) -> tuple[float, float]:
    if kind == GAZE:
        lo, hi = trigger_time - config.gaze_pad_s, trigger_time + config.window_s + config.gaze_pad_s
    else:
        lo, hi = trigger_time, trigger_time + config.proxemic_tail_s
    return (max(lo, bounds[0]), min(hi, bounds[1]))


def keypoint_box(frame: PoseFrame, pad: float = BOX_PAD) -> tuple[float, float, float, float] | None:
    pts = frame.as_array()
    pts = pts[np.isfinite(pts).all(axis=1)]
    if len(pts) == 0:
        return None
    (x0, y0), (x1, y1) = pts.min(axis=0), pts.max(axis=0)
    px, py = (x1 - x0) * pad, (y1 - y0) * pad
    return (float(x0 - px), float(y0 - py), float(x1 + px), float(y1 + py))


def overlay_plan(event: TriggerEvent, frames: Sequence[PoseFrame],
                 fired_frames: Iterable[float] = ()) -> tuple[OverlayEntry, ...]:
    """Boxes for the event's clip: base color per kind, green in windows where the classifier fired."""
    entries = []
    fired_frames = set(fired_frames)
    lo, hi = event.clip
    for f in frames:
        if not lo <= f.timestamp <= hi:
            continue
        box = keypoint_box(f)
        if box is None:
            continue
        fired = f.timestamp in fired_frames
        entries.append(OverlayEntry(f.timestamp, box, FIRED_COLOR if fired else BASE_COLOR[event.kind]))
    return tuple(entries)


@dataclass
class CallBudget:
    windows: int = 0
    excluded_far: int = 0
    classifier_runs: int = 0
    probe_default: int = 0
    gaze_triggers: int = 0
    proxemic_triggers: int = 0
    gaze_events: int = 0
    proxemic_events: int = 0

    @property
    def exhaustive_calls(self) -> int:
        return self.windows

    @property
    def vlm_events(self) -> int:
        return self.gaze_events + self.proxemic_events

    def add(self, other: "CallBudget") -> None:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def as_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.__dataclass_fields__}
        d["exhaustive_calls"] = self.exhaustive_calls
        return d


@dataclass(frozen=True)
class WindowRecord:
    track_id: str
    start: float
    outcome: Outcome
    score: float | None = None
    diagnostic: str | None = None


@dataclass
class StageOneResult:
    episode_id: str
    events: dict[str, list[TriggerEvent]]
    windows: list[WindowRecord]
    budget: CallBudget
    fired_frames: dict[str, set[float]] = field(default_factory=dict)

    @property
    def all_events(self) -> list[TriggerEvent]:
        return sorted((e for evs in self.events.values() for e in evs),
                      key=lambda e: (e.trigger_time, e.track_id))

    @property
    def probe_timeline(self) -> list[WindowRecord]:
        return [w for w in self.windows if w.outcome is Outcome.PROBE]


def run_stage_one(episode: Episode, model: GbdtModel | None, config: GateConfig | None = None,
                  classifier=None, trace_sink=None) -> StageOneResult:
    """Gate every window of every track and build grouped, padded trigger events.

    ``trace_sink`` is called with every TrackWindow before it is gated.
    """
    config = config or GateConfig()
    bounds = (episode.start, episode.end)
    budget = CallBudget()
    records: list[WindowRecord] = []
    events: dict[str, list[TriggerEvent]] = {}
    fired: dict[str, set[float]] = {}
    windows = track_windows(episode, config.window_s, config.stride_s) if episode.frames else {}
    for tid, track_wins in windows.items():
        raw: list[TriggerEvent] = []
        fired[tid] = set()
        for win in track_wins:
            budget.windows += 1
            if trace_sink is not None:
                trace_sink(win)
            res = gate_window(win, model, config, raw, classifier)
            budget.classifier_runs += res.classifier_ran
            records.append(WindowRecord(tid, win.start, res.outcome, res.score, res.diagnostic))
            if res.outcome is Outcome.EXCLUDED:
                budget.excluded_far += 1
            elif res.outcome is Outcome.PROBE:
                budget.probe_default += 1
            else:
                kind = GAZE if res.outcome is Outcome.GAZE else PROXEMIC
                if kind == GAZE:
                    budget.gaze_triggers += 1
                    fired[tid].update(f.timestamp for f in win.frames)
                else:
                    budget.proxemic_triggers += 1
                raw.append(TriggerEvent(tid, kind, res.trigger_time,
                                        clip_for(kind, res.trigger_time, config, bounds),
                                        res.score if kind == GAZE else None,
                                        episode_id=episode.episode_id))
        grouped = group_triggers(raw, config)
        frames = episode.track(tid)
        grouped = [TriggerEvent(e.track_id, e.kind, e.trigger_time, e.clip, e.score,
                                overlay_plan(e, frames, fired[tid]), e.episode_id)
                   for e in grouped]
        budget.gaze_events += sum(e.kind == GAZE for e in grouped)
        budget.proxemic_events += sum(e.kind == PROXEMIC for e in grouped)
        events[tid] = grouped
    return StageOneResult(episode.episode_id, events, records, budget, fired)


def write_trigger_report(result: StageOneResult, fh: IO[str]) -> None:
    """One JSON record per event, then a summary record with the call budget."""
    for e in result.all_events:
        fh.write(json.dumps(e.to_json()) + "\n")
    fh.write(json.dumps({"summary": result.budget.as_dict(), "episode_id": result.episode_id}) + "\n")


def overlay_sidecar(events: Iterable[TriggerEvent]) -> dict:
    """Overlay plans keyed by event, for external video compositing."""
    return {
        "v": 1,
        "events": [
            {**e.to_json(),
             "frames": [{"t": o.frame_time, "box": list(o.box), "color": o.color} for o in e.overlay]}
            for e in events
        ],
    }
