"""Synthetic episodes with scripted head turns, approach trajectories, and mock VLM scripts.

Head model: the head is a sphere seen orthographically. Its yaw is kept as a
fraction of a full profile (0 = facing the camera, 1 = 90 degrees away). A turn
moves that fraction by ``amplitude`` along a raised-cosine profile, so the ear
and nose keypoints sweep smooth arcs and produce single velocity peaks.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backends import write_script
from .features import FeatureError, track_windows, window_features
from .gate import GAZE, PROXEMIC, GateConfig
from .gbdt import LabeledSet
from .ingest import (
    FPS,
    N_KEYPOINTS,
    DecisionLabel,
    Episode,
    GroundTruth,
    Keypoint,
    PoseFrame,
    TrackTruth,
    save_episode,
)
from .orchestrator import INCONCLUSIVE, INTERACT, NO_INTENT
from .prompts import Stage

logger = logging.getLogger(__name__)

ROLES = ("interactor", "ignorer", "bystander")
EXPECTED_ACTION = {"interactor": "Approach", "ignorer": "Leave", "bystander": "Probe"}
DEFAULT_JITTER = 0.01
CONFIDENCE = 0.9

HEAD_CENTER = (0.0, -0.55)
HEAD_RADIUS = 0.22
NOSE_RADIUS = 0.26
EYE_OFFSET_RAD = 0.5
PX_PER_UNIT_AT_1M = 250.0
IMAGE_Y = 220.0

# normalized body layout (shoulder midpoint at origin, hips at y = 1)
_BODY = {
    5: (0.45, 0.0), 6: (-0.45, 0.0), 7: (0.55, 0.5), 8: (-0.55, 0.5),
    9: (0.5, 0.95), 10: (-0.5, 0.95), 11: (0.3, 1.0), 12: (-0.3, 1.0),
    13: (0.3, 1.6), 14: (-0.3, 1.6), 15: (0.3, 2.2), 16: (-0.3, 2.2),
}


class InfeasibleScriptError(ValueError):
    pass


class NoPreamblesError(ValueError):
    pass


@dataclass(frozen=True)
class HeadTurn:
    time: float
    direction: str  # "toward" or "away"
    duration: float
    amplitude: float

    def __post_init__(self):
        if self.direction not in ("toward", "away"):
            raise ValueError(f"unknown turn direction {self.direction!r}")
        if not self.duration > 0:
            raise ValueError("turn duration must be > 0")
        if not 0 < self.amplitude <= 1:
            raise ValueError("turn amplitude must be in (0, 1]")


@dataclass(frozen=True)
class Actor:
    track_id: str
    trajectory: tuple[tuple[float, float], ...]  # (time s, distance m) knots
    head_script: tuple[HeadTurn, ...] = ()
    role: str = "interactor"
    rest_yaw: float = 0.75
    image_x: float = 320.0
    vlm_dissent: int | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.trajectory or any(d <= 0 for _, d in self.trajectory):
            raise ValueError("trajectory must be nonempty with positive distances")
        if not 0 <= self.rest_yaw <= 1:
            raise ValueError("rest_yaw must be in [0, 1]")

    def distance(self, t):
        ts, ds = zip(*self.trajectory)
        return np.interp(t, ts, ds)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    duration_s: float
    actors: tuple[Actor, ...] = ()
    noise: float = DEFAULT_JITTER
    seed: int = 0

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError("duration_s must be > 0")
        if self.noise < 0:
            raise ValueError("jitter std must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioSpec":
        actors = tuple(
            Actor(**{**a, "trajectory": tuple(tuple(p) for p in a["trajectory"]),
                     "head_script": tuple(HeadTurn(**h) for h in a.get("head_script", ()))})
            for a in obj.get("actors", ()))
        return cls(obj["scenario_id"], float(obj["duration_s"]), actors,
                   float(obj.get("noise", DEFAULT_JITTER)), int(obj.get("seed", 0)))


def _raised_cosine(u):
    return (1 - np.cos(np.pi * np.clip(u, 0.0, 1.0))) / 2


def yaw_profile(actor: Actor, times: np.ndarray) -> np.ndarray:
    """Yaw fraction over time for the actor's head script."""
    turns = sorted(actor.head_script, key=lambda h: h.time)
    for a, b in zip(turns, turns[1:]):
        if a.time + a.duration > b.time:
            raise InfeasibleScriptError(
                f"{actor.track_id}: turn at {b.time}s starts before the turn at {a.time}s ends")
    yaw = np.full(times.shape, actor.rest_yaw)
    current = actor.rest_yaw
    for turn in turns:
        sign = -1.0 if turn.direction == "toward" else 1.0
        target = min(max(current + sign * turn.amplitude, 0.0), 1.0)
        u = (times - turn.time) / turn.duration
        active = times >= turn.time
        yaw[active] = current + (target - current) * _raised_cosine(u[active])
        current = target
    return yaw


def head_keypoints(yaw_fraction: float) -> dict[int, tuple[float, float]]:
    phi = yaw_fraction * math.pi / 2
    cx, cy = HEAD_CENTER
    return {
        0: (cx + NOSE_RADIUS * math.sin(phi), cy + 0.05),
        1: (cx + HEAD_RADIUS * math.sin(phi + EYE_OFFSET_RAD), cy - 0.02),
        2: (cx + HEAD_RADIUS * math.sin(phi - EYE_OFFSET_RAD), cy - 0.02),
        3: (cx + HEAD_RADIUS * math.sin(phi + math.pi / 2), cy + 0.02),
        4: (cx + HEAD_RADIUS * math.sin(phi - math.pi / 2), cy + 0.02),
    }


def normalized_pose(yaw_fraction: float) -> np.ndarray:
    pts = np.zeros((N_KEYPOINTS, 2))
    for i, xy in {**_BODY, **head_keypoints(yaw_fraction)}.items():
        pts[i] = xy
    return pts


def _toward_turns(actor: Actor) -> list[HeadTurn]:
    return [h for h in sorted(actor.head_script, key=lambda h: h.time) if h.direction == "toward"]


def _first_entry(actor: Actor, times: np.ndarray, zone: float) -> float | None:
    inside = np.flatnonzero(actor.distance(times) <= zone)
    return float(times[inside[0]]) if inside.size else None


def ground_truth_for(spec: ScenarioSpec, gate: GateConfig | None = None) -> GroundTruth:
    gate = gate or GateConfig()
    times = np.arange(int(round(spec.duration_s * FPS))) / FPS
    tracks = {}
    decisions = []
    for actor in spec.actors:
        preambles = tuple(h.time for h in _toward_turns(actor) if h.time < spec.duration_s)
        dists = tuple(float(actor.distance(t)) for t in preambles)
        entry = _first_entry(actor, times, gate.personal_zone_m)
        kind = None
        if actor.role == "interactor" and any(d <= gate.far_exclusion_m for d in dists):
            kind = GAZE
        elif actor.role != "bystander" and entry is not None:
            kind = PROXEMIC
        # nobody the robot never engages is expected to be resolved either way
        action = EXPECTED_ACTION[actor.role] if kind is not None else "Probe"
        tracks[actor.track_id] = TrackTruth(actor.role, preambles, dists, kind, action)
        if kind is not None:
            t = preambles[0] if kind == GAZE else entry
            decisions.append(DecisionLabel(actor.track_id, float(t), action))
    engaged = [a for a in spec.actors if a.role != "bystander"]
    main = None
    if engaged:
        main = min(engaged, key=lambda a: (a.role != "interactor",
                                           float(np.min(a.distance(times))))).track_id
    return GroundTruth(tracks, main, tuple(decisions))


def synthesize(spec: ScenarioSpec, gate: GateConfig | None = None) -> tuple[Episode, GroundTruth]:
    """Render the scenario to 15 fps pose frames with keypoint jitter."""
    n = int(round(spec.duration_s * FPS))
    times = np.arange(n) / FPS
    frames: list[PoseFrame] = []
    for idx, actor in enumerate(spec.actors):
        rng = np.random.default_rng([spec.seed, idx])
        yaw = yaw_profile(actor, times)
        dist = actor.distance(times)
        jitter = rng.normal(0.0, spec.noise, size=(n, N_KEYPOINTS, 2)) if spec.noise > 0 else None
        for i, t in enumerate(times):
            pose = normalized_pose(float(yaw[i]))
            if jitter is not None:
                pose = pose + jitter[i]
            scale = PX_PER_UNIT_AT_1M / float(dist[i])
            px = actor.image_x + pose[:, 0] * scale
            py = IMAGE_Y + pose[:, 1] * scale
            kps = tuple(Keypoint(float(x), float(y), CONFIDENCE) for x, y in zip(px, py))
            frames.append(PoseFrame(float(t), actor.track_id, kps, float(dist[i])))
    frames.sort(key=lambda f: (f.track_id, f.timestamp))
    gt = ground_truth_for(spec, gate)
    return Episode(spec.scenario_id, tuple(frames), gt if spec.actors else None), gt


# ---------------------------------------------------------------- random suites

def _glance(rng: np.random.Generator, start: float, rest_yaw: float,
            sustained: bool) -> tuple[tuple[HeadTurn, ...], float]:
    """A toward turn, optionally followed by a turn back; returns (turns, total span)."""
    amp = float(rng.uniform(0.55, 1.0)) * rest_yaw
    d1 = float(rng.uniform(0.3, 0.6))
    turns = [HeadTurn(start, "toward", d1, amp)]
    span = d1
    if not sustained:
        hold = float(rng.uniform(0.2, 0.5))
        d2 = float(rng.uniform(0.3, 0.6))
        turns.append(HeadTurn(start + d1 + hold, "away", d2, amp))
        span = d1 + hold + d2
    return tuple(turns), span


def approach_trajectory(d_at: float, t_at: float, speed: float, stop: float,
                        duration: float) -> tuple[tuple[float, float], ...]:
    """Robot closes in at constant speed, passing ``d_at`` at ``t_at``, then halts at ``stop``."""
    d0 = d_at + speed * t_at
    t_stop = (d0 - stop) / speed
    knots = [(0.0, d0)]
    if t_stop < duration:
        knots += [(t_stop, stop), (duration, stop)]
    else:
        knots.append((duration, d0 - speed * duration))
    return tuple((round(t, 6), round(d, 6)) for t, d in knots)


def random_interactor(rng: np.random.Generator, track_id: str = "p1",
                      preamble_distance: float | None = None, lead_s: float = 4.0,
                      window_s: float = 2.0, tail_s: float = 6.0) -> tuple[Actor, float]:
    """An approached person who glances at the robot at a sampled distance.

    Preamble distances are drawn from N(1.2, 0.35) clipped to [0.5, 1.9] unless
    given. The turn is placed wholly inside one window at least ``lead_s`` in.
    Returns the actor and the scenario duration it needs.
    """
    if preamble_distance is None:
        preamble_distance = float(np.clip(rng.normal(1.2, 0.35), 0.5, 1.9))
    rest = float(rng.uniform(0.6, 0.95))
    sustained = bool(rng.random() < 0.5)
    turns, span = _glance(rng, 0.0, rest, sustained)
    k = int(math.ceil(lead_s / window_s)) + int(rng.integers(0, 3))
    offset = float(rng.uniform(0.05, max(window_s - span - 0.05, 0.06)))
    t_p = round(k * window_s + offset, 4)
    turns = tuple(replace(h, time=round(h.time + t_p, 4)) for h in turns)
    speed = float(rng.uniform(0.35, 0.55))
    stop = min(float(rng.uniform(0.6, 0.9)), preamble_distance - 0.1)
    duration = math.ceil((t_p + tail_s) / window_s) * window_s
    traj = approach_trajectory(preamble_distance, t_p, speed, stop, duration)
    return Actor(track_id, traj, turns, "interactor", rest, float(rng.uniform(200, 440))), duration


def random_ignorer(rng: np.random.Generator, track_id: str, duration: float,
                   approached: bool = True) -> Actor:
    rest = float(rng.uniform(0.6, 0.95))
    if approached:
        speed = float(rng.uniform(0.35, 0.55))
        stop = float(rng.uniform(0.7, 1.0))
        t_stop = duration - float(rng.uniform(3.0, 5.0))
        traj = approach_trajectory(stop, t_stop, speed, stop, duration)
    else:
        d = float(rng.uniform(1.6, 3.5))
        traj = ((0.0, d), (duration, d))
    return Actor(track_id, traj, (), "ignorer", rest, float(rng.uniform(150, 490)))


def random_bystander(rng: np.random.Generator, track_id: str, duration: float,
                     turns: bool = True) -> Actor:
    d = float(rng.uniform(4.5, 7.0))
    script: tuple[HeadTurn, ...] = ()
    if turns:
        rest = 0.8
        start = float(rng.uniform(4.0, max(duration - 3.0, 4.5)))
        script, _ = _glance(rng, round(start, 4), rest, sustained=False)
    return Actor(track_id, ((0.0, d), (duration, d)), script, "bystander", 0.8,
                 float(rng.uniform(50, 590)))


def training_suite(n: int, seed: int = 0, noise: float = DEFAULT_JITTER,
                   prefix: str = "train") -> list[ScenarioSpec]:
    """Single-interactor scenarios, one preamble each."""
    rng = np.random.default_rng(seed)
    suite = []
    for i in range(n):
        actor, duration = random_interactor(rng)
        suite.append(ScenarioSpec(f"{prefix}{i:04d}", duration, (actor,), noise,
                                  int(rng.integers(2**31))))
    return suite


def benchmark_suite(n: int = 30, seed: int = 1, noise: float = DEFAULT_JITTER,
                    prefix: str = "bench") -> list[ScenarioSpec]:
    """Mixed café-like scenes.

    Scenes cycle through: interactor plus far bystander; approached ignorer plus
    bystander; interactor with a seated companion who ignores the robot.
    """
    rng = np.random.default_rng(seed)
    suite = []
    for i in range(n):
        kind = i % 3
        if kind == 1:
            duration = float(2 * int(rng.integers(7, 10)))
            actors = (random_ignorer(rng, "p1", duration),
                      random_bystander(rng, "p2", duration))
        else:
            main, duration = random_interactor(rng)
            other = (random_bystander(rng, "p2", duration) if kind == 0
                     else random_ignorer(rng, "p2", duration, approached=False))
            actors = (main, other)
        suite.append(ScenarioSpec(f"{prefix}{i:03d}", duration, actors, noise,
                                  int(rng.integers(2**31))))
    return suite


def timing_suite(n: int = 12, seed: int = 2, noise: float = DEFAULT_JITTER,
                 lead_before_entry_s: float = 4.0, prefix: str = "early") -> list[ScenarioSpec]:
    """Interactors who glance at the robot well before it reaches their personal zone."""
    rng = np.random.default_rng(seed)
    suite = []
    gate = GateConfig()
    for i in range(n):
        speed_hint = 0.45
        d_p = gate.personal_zone_m + lead_before_entry_s * speed_hint + float(rng.uniform(0.5, 1.2))
        actor, duration = random_interactor(rng, preamble_distance=d_p)
        t_p = _toward_turns(actor)[0].time
        # ensure the zone entry trails the preamble by the required lead
        speed = (d_p - gate.personal_zone_m) / (lead_before_entry_s + float(rng.uniform(0.5, 2.0)))
        duration = max(duration, math.ceil((t_p + (d_p - 0.8) / speed + 4.0) / 2.0) * 2.0)
        traj = approach_trajectory(d_p, t_p, speed, 0.8, duration)
        actor = replace(actor, trajectory=traj)
        suite.append(ScenarioSpec(f"{prefix}{i:03d}", duration, (actor,), noise,
                                  int(rng.integers(2**31))))
    return suite


def calibration_suite(n: int = 500, seed: int = 3) -> list[ScenarioSpec]:
    return training_suite(n, seed, prefix="calib")


# ------------------------------------------------------------- training data

def labeled_windows(episodes: Iterable[Episode], window_s: float = 2.0) -> LabeledSet:
    """Positive = window holding an annotated preamble; negative = the window before it."""
    X, y = [], []
    for ep in episodes:
        if ep.ground_truth is None:
            continue
        wins = track_windows(ep, window_s)
        for tid, truth in ep.ground_truth.tracks.items():
            by_start = {round((w.start - ep.start) / window_s): w for w in wins.get(tid, [])}
            seen = set()
            for t in truth.preambles:
                k = int((t - ep.start) // window_s)
                if k in seen:
                    continue
                seen.add(k)
                if k == 0 or (k - 1) not in by_start or k not in by_start:
                    warnings.warn(f"{ep.episode_id}/{tid}: preamble at {t}s has no preceding "
                                  "window; skipped", stacklevel=2)
                    continue
                try:
                    pos = window_features(by_start[k])
                    neg = window_features(by_start[k - 1])
                except FeatureError as exc:
                    warnings.warn(f"{ep.episode_id}/{tid}: {exc}; skipped", stacklevel=2)
                    continue
                X += [pos.values, neg.values]
                y += [1, 0]
    if not y:
        raise NoPreamblesError("no usable scripted preambles in the episodes")
    return LabeledSet(np.array(X), np.array(y))


def build_training_set(suite: Sequence[ScenarioSpec]) -> LabeledSet:
    if not suite:
        raise NoPreamblesError("empty scenario suite")
    return labeled_windows(synthesize(spec)[0] for spec in suite)


# ------------------------------------------------------------- mock VLM scripts

@dataclass(frozen=True)
class Claim:
    behavior: str
    second: int
    intent: str


_CLAIMS = {
    "interactor": [Claim("turns their head toward the camera", 2, INTERACT),
                   Claim("holds eye contact with the robot", 3, INTERACT)],
    "ignorer": [Claim("keeps looking down at their table", 1, NO_INTENT),
                Claim("continues their activity without looking up", 2, NO_INTENT)],
    "bystander": [Claim("keeps looking down at their table", 1, NO_INTENT),
                  Claim("continues their activity without looking up", 2, NO_INTENT)],
}
_DISSENT = {
    INTERACT: [Claim("glances once and then looks away", 2, NO_INTENT)],
    NO_INTENT: [Claim("waves a hand toward the robot", 1, INTERACT)],
}
_ANSWER = {
    INTERACT: "The person's body language is open and oriented to the robot, showing they want to interact with you.",
    NO_INTENT: "The person's body language is closed; the person ignores the robot, showing no intent to interact.",
}
_INTENT_LABEL = {INTERACT: "Interact", NO_INTENT: "No Intent to Interact", INCONCLUSIVE: "Inconclusive"}
_ACTION_REPLY = {
    INTERACT: "Decision: Approach to interact. The person turned toward the robot and held its gaze, which invites service.",
    NO_INTENT: "Decision: Leave, do not interact. The person kept to their own activity and did not acknowledge the robot.",
    INCONCLUSIVE: "Decision: Inconclusive, Keep probing. The evidence does not settle the person's intent.",
}


def analysis_text(claims: Sequence[Claim], intent: str) -> str:
    lines = [f"Answer: {_ANSWER[intent]}"]
    for i, c in enumerate(claims):
        prefix = "Evidence: " if i == 0 else ""
        lines.append(f"{prefix}[00:{c.second:02d}] {c.behavior}")
    return "\n".join(lines)


def vote_decision(votes: int, k: int = 5) -> str:
    """Majority-vote inclusion label for a behavior seen in ``votes`` of ``k`` analyses."""
    if votes * 5 >= 4 * k:
        return "include(4+/5)"
    if votes * 5 <= k:
        return "exclude(1/5)"
    return "inconclusive (2/5 or 3/5)"


def majority_vote_reply(samples: Sequence[tuple[Sequence[Claim], str]], k: int) -> str:
    """Render a majority-vote synthesis of scripted analyses in the synthesizer's output format."""
    counts: dict[Claim, int] = {}
    for claims, _ in samples:
        for c in claims:
            counts[c] = counts.get(c, 0) + 1
    intents: dict[str, int] = {}
    for _, intent in samples:
        intents[intent] = intents.get(intent, 0) + 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].second, kv[0].behavior))
    out = ["vote_summary:"]
    for c, v in ordered:
        out += [f"  - behavior: {c.behavior}", f"    votes: {v}/{k}",
                f"    time: 00:{c.second:02d}", f"    decision: {vote_decision(v, k)}"]
    top_intent, top = max(intents.items(), key=lambda kv: (kv[1], kv[0]))
    rivals = sorted(((i, v) for i, v in intents.items() if i != top_intent), key=lambda kv: -kv[1])
    if rivals:
        rival, rv = rivals[0]
        winner = "position_A" if vote_decision(top, k).startswith("include") else "Inconclusive"
        out += ["contradictions:", "  - issue: the person's intention toward the robot",
                f"    position_A: \"{_INTENT_LABEL[top_intent]}\" (votes: {top}/{k})",
                f"    position_B: \"{_INTENT_LABEL[rival]}\" (votes: {rv}/{k})",
                f"    winner: {winner}"]
    else:
        out.append("contradictions: []")
    out.append("Final log (Majority Vote):")
    for c, v in ordered:
        label = vote_decision(v, k)
        if label.startswith("include"):
            out.append(f"  - [00:{c.second:02d}] {c.behavior} (votes: {v}/{k})")
        elif label.startswith("inconclusive"):
            out.append(f"  - [00:{c.second:02d}] {c.behavior} (inconclusive, {v} vs {k - v})")
    final = top_intent if vote_decision(top, k).startswith("include") else INCONCLUSIVE
    out.append(f"Overall intention: Overall intention: [{_INTENT_LABEL[final]}] (votes: {top}/{k})")
    return "\n".join(out)


def contradiction_reply(samples: Sequence[tuple[Sequence[Claim], str]]) -> str:
    intents = {intent for _, intent in samples}
    if len(intents) < 2:
        return "contradictions: []"
    out = ["contradictions:"]
    majority = max(intents, key=lambda i: sum(s[1] == i for s in samples))
    minority = [i for i, s in enumerate(samples) if s[1] != majority]
    first_major = next(i for i, s in enumerate(samples) if s[1] == majority)
    disputed = samples[minority[0]][0][0]
    out += [f" - issue: whether the person {disputed.behavior}", "   candidates:"]
    for i in [first_major, *minority]:
        c = samples[i][0][0]
        out += [f"   - analysis: {i + 1}", f"     quote: \"{c.behavior}\""]
    return "\n".join(out)


def verify_reply(samples: Sequence[tuple[Sequence[Claim], str]], true_intent: str,
                 outcome: str = "resolve") -> str:
    """Verification output: ``resolve`` refutes dissent, ``inconclusive`` leaves it open."""
    intents = [s[1] for s in samples]
    out = []
    if len(set(intents)) < 2:
        out.append("contradictions: []")
    else:
        minority = [i for i, s in enumerate(samples) if s[1] != true_intent]
        first_major = next((i for i, s in enumerate(samples) if s[1] == true_intent), None)
        disputed = samples[minority[0]][0][0]
        out += ["contradictions:", f" - issue: whether the person {disputed.behavior}", "   candidates:"]
        for i in [first_major, *minority]:
            if i is None:
                continue
            c = samples[i][0][0]
            if outcome == "inconclusive":
                check = "inconclusive"
            else:
                check = "supported" if samples[i][1] == true_intent else "refuted"
            out += [f"   - analysis: {i + 1}", f"     quote: \"{c.behavior}\"",
                    f"     video_check: {check}", f"     indicators: [00:{c.second:02d} head and hands]"]
        if outcome == "inconclusive":
            out.append(" - resolution to the issue: inconclusive; the clip is too short to tell.")
        else:
            out.append(f" - resolution to the issue: the claim that the person {disputed.behavior} is refuted.")
    out.append("Final log (Verification):")
    for c in _CLAIMS_BY_INTENT[true_intent]:
        out.append(f" - [00:{c.second:02d}] {c.behavior}")
    final = INCONCLUSIVE if outcome == "inconclusive" else true_intent
    out.append(f"Overall intention: [{_INTENT_LABEL[final]}] (rationale: based on the verified cues)")
    return "\n".join(out)


_CLAIMS_BY_INTENT = {INTERACT: _CLAIMS["interactor"], NO_INTENT: _CLAIMS["ignorer"]}


def scripted_samples(role: str, k: int, dissent: int) -> list[tuple[list[Claim], str]]:
    """K (claims, intent) pairs; the first ``dissent`` samples disagree with the role."""
    truth = INTERACT if role == "interactor" else NO_INTENT
    wrong = NO_INTENT if truth == INTERACT else INTERACT
    out = []
    for i in range(k):
        if i < dissent:
            out.append((list(_DISSENT[truth]), wrong))
        else:
            out.append((list(_CLAIMS[role]), truth))
    return out


def script_mock_backend(spec: ScenarioSpec, gt: GroundTruth | None, root: str | Path,
                        dissent: int = 0, k: int = 5, critique: str = "resolve") -> Path:
    """Write mock replies for every actor and both trigger kinds under ``root``."""
    root = Path(root)
    for actor in spec.actors:
        d = actor.vlm_dissent if actor.vlm_dissent is not None else dissent
        role = actor.role
        if gt is not None and actor.track_id in gt.tracks and gt.tracks[actor.track_id].role:
            role = gt.tracks[actor.track_id].role
        truth = INTERACT if role == "interactor" else NO_INTENT
        samples = scripted_samples(role, k, d)
        scenario = f"{spec.scenario_id}/{actor.track_id}"
        for kind, stage in ((GAZE, Stage.INDEPENDENT_GAZE), (PROXEMIC, Stage.INDEPENDENT_PROXEMICS)):
            for i, (claims, intent) in enumerate(samples):
                write_script(root, kind, scenario, stage.value, i, analysis_text(claims, intent))
            write_script(root, kind, scenario, Stage.MAJORITY_VOTE.value, 0,
                         majority_vote_reply(samples, k))
            write_script(root, kind, scenario, Stage.CONTRADICTION.value, 0,
                         contradiction_reply(samples))
            write_script(root, kind, scenario, Stage.VERIFY.value, 0,
                         verify_reply(samples, truth, critique))
            write_script(root, kind, scenario, Stage.ACTION.value, 0, _ACTION_REPLY[truth])
    return root


# ------------------------------------------------------------------ suite files

def load_suite(path: str | Path) -> list[ScenarioSpec]:
    """Suite file: ``{"v": 1, "scenarios": [...]}`` and/or ``"generate": [{"kind": ..., ...}]``."""
    with open(path) as fh:
        obj = json.load(fh)
    suite = [ScenarioSpec.from_json(s) for s in obj.get("scenarios", ())]
    generators = {"benchmark": benchmark_suite, "training": training_suite,
                  "timing": timing_suite, "calibration": calibration_suite}
    for g in obj.get("generate", ()):
        g = dict(g)
        kind = g.pop("kind")
        if kind not in generators:
            raise ValueError(f"unknown generator {kind!r}; choose from {sorted(generators)}")
        suite += generators[kind](**g)
    return suite


def save_suite(suite: Sequence[ScenarioSpec], path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump({"v": 1, "scenarios": [s.to_json() for s in suite]}, fh, indent=1)
        fh.write("\n")


def write_suite(suite: Sequence[ScenarioSpec], out_dir: str | Path, dissent: int = 0,
                critique: str = "resolve", k: int = 5) -> list[Path]:
    """Episode files, label sidecars, and mock scripts (under ``out_dir/mock``)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for spec in suite:
        ep, gt = synthesize(spec)
        path = out_dir / f"{spec.scenario_id}.jsonl"
        save_episode(ep, path)
        script_mock_backend(spec, gt, out_dir / "mock", dissent, k, critique)
        paths.append(path)
    return paths
