"""Episode recordings: per-track pose frames, distances, and ground truth.

Episode files are newline-delimited JSON, one record per (track, frame)::

    {"v": 1, "episode_id": "ep0", "track_id": "p1", "t": 0.0667,
     "kp": [[x, y, c], ... 17 entries in COCO order ...],
     "dist_m": 1.8}

``dist_m`` is optional. A record may instead carry a raw depth patch as
``"depth": {"patch": [[m, ...], ...], "origin": [x0, y0]}`` where ``origin`` is
the pixel coordinate of ``patch[0][0]``; invalid cells are ``null``, zero or
negative. When both are present ``dist_m`` wins.

Ground truth lives in an optional JSON sidecar ``<episode file>.labels``::

    {"v": 1, "episode_id": "ep0", "main_interactant": "p1",
     "tracks": {"p1": {"role": "interactor", "preambles": [6.0],
                       "preamble_distances": [1.21],
                       "gate_kind": "GazeShift", "action": "Approach"}},
     "decisions": [{"track_id": "p1", "t": 6.0, "label": "Approach"}]}
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FPS = 15.0
N_KEYPOINTS = 17

NOSE, L_EYE, R_EYE, L_EAR, R_EAR = 0, 1, 2, 3, 4
L_SHOULDER, R_SHOULDER, L_HIP, R_HIP = 5, 6, 11, 12
ANCHORS = (L_SHOULDER, R_SHOULDER, L_HIP, R_HIP)

CONFIDENCE_FLOOR = 0.3
TORSO_EPS = 1e-6
DEPTH_WINDOW = 5
SPACING_TOLERANCE = 0.2
MAX_GAP_S = 0.5

ACTIONS = ("Probe", "Approach", "Leave")
GATE_KINDS = ("GazeShift", "ProxemicEntry")


class EpisodeFormatError(ValueError):
    """Malformed or schema-violating episode file."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class MissingLandmarkError(ValueError):
    pass


class DegenerateTorsoError(ValueError):
    pass


class InvalidDepthError(ValueError):
    pass


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("keypoint coordinates must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"keypoint confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class PoseFrame:
    timestamp: float
    track_id: str
    keypoints: tuple[Keypoint | None, ...]
    distance_m: float | None = None

    def __post_init__(self):
        if len(self.keypoints) != N_KEYPOINTS:
            raise ValueError(f"expected {N_KEYPOINTS} keypoint slots, got {len(self.keypoints)}")
        if self.distance_m is not None and not self.distance_m > 0:
            raise ValueError("distance_m must be positive")

    def as_array(self, floor: float = CONFIDENCE_FLOOR) -> np.ndarray:
        """(17, 2) pixel coordinates with NaN for absent or low-confidence slots."""
        out = np.full((N_KEYPOINTS, 2), np.nan)
        for i, kp in enumerate(self.keypoints):
            if kp is not None and kp.confidence >= floor:
                out[i] = (kp.x, kp.y)
        return out


@dataclass(frozen=True)
class TrackTruth:
    role: str | None = None
    preambles: tuple[float, ...] = ()
    preamble_distances: tuple[float, ...] = ()
    gate_kind: str | None = None
    action: str | None = None


@dataclass(frozen=True)
class DecisionLabel:
    track_id: str
    t: float
    label: str


@dataclass(frozen=True)
class GroundTruth:
    tracks: dict[str, TrackTruth] = field(default_factory=dict)
    main_interactant: str | None = None
    decisions: tuple[DecisionLabel, ...] = ()

    def to_json(self, episode_id: str) -> dict:
        return {
            "v": FORMAT_VERSION,
            "episode_id": episode_id,
            "main_interactant": self.main_interactant,
            "tracks": {
                tid: {
                    "role": tt.role,
                    "preambles": list(tt.preambles),
                    "preamble_distances": list(tt.preamble_distances),
                    "gate_kind": tt.gate_kind,
                    "action": tt.action,
                }
                for tid, tt in sorted(self.tracks.items())
            },
            "decisions": [
                {"track_id": d.track_id, "t": d.t, "label": d.label} for d in self.decisions
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        tracks = {}
        for tid, tt in obj.get("tracks", {}).items():
            action = tt.get("action")
            if action is not None and action not in ACTIONS:
                raise EpisodeFormatError(f"unknown action label {action!r}", field="action")
            kind = tt.get("gate_kind")
            if kind is not None and kind not in GATE_KINDS:
                raise EpisodeFormatError(f"unknown gate kind {kind!r}", field="gate_kind")
            tracks[str(tid)] = TrackTruth(
                role=tt.get("role"),
                preambles=tuple(float(t) for t in tt.get("preambles", ())),
                preamble_distances=tuple(float(d) for d in tt.get("preamble_distances", ())),
                gate_kind=kind,
                action=action,
            )
        decisions = []
        for d in obj.get("decisions", ()):
            if d["label"] not in ACTIONS:
                raise EpisodeFormatError(f"unknown decision label {d['label']!r}", field="label")
            decisions.append(DecisionLabel(str(d["track_id"]), float(d["t"]), d["label"]))
        main = obj.get("main_interactant")
        return cls(tracks=tracks, main_interactant=None if main is None else str(main),
                   decisions=tuple(decisions))


@dataclass(frozen=True)
class Episode:
    episode_id: str
    frames: tuple[PoseFrame, ...]
    ground_truth: GroundTruth | None = None

    def __post_init__(self):
        if self.ground_truth is not None:
            present = set(self.track_ids)
            named = set(self.ground_truth.tracks) | {d.track_id for d in self.ground_truth.decisions}
            if self.ground_truth.main_interactant is not None:
                named.add(self.ground_truth.main_interactant)
            missing = named - present
            if missing:
                raise EpisodeFormatError(
                    f"ground truth names tracks absent from frames: {sorted(missing)}",
                    field="track_id")

    @property
    def track_ids(self) -> list[str]:
        return sorted({f.track_id for f in self.frames})

    def track(self, track_id: str) -> list[PoseFrame]:
        return [f for f in self.frames if f.track_id == track_id]

    @property
    def start(self) -> float:
        return min((f.timestamp for f in self.frames), default=0.0)

    @property
    def end(self) -> float:
        return max((f.timestamp for f in self.frames), default=0.0)


def _parse_keypoints(raw, lineno: int) -> tuple[Keypoint | None, ...]:
    if not isinstance(raw, list) or len(raw) != N_KEYPOINTS:
        raise EpisodeFormatError(f"kp must be a list of {N_KEYPOINTS} entries", lineno, "kp")
    kps = []
    for entry in raw:
        if entry is None:
            kps.append(None)
            continue
        if not isinstance(entry, list) or len(entry) != 3:
            raise EpisodeFormatError("each kp entry must be [x, y, c] or null", lineno, "kp")
        try:
            kps.append(Keypoint(float(entry[0]), float(entry[1]), float(entry[2])))
        except (TypeError, ValueError) as exc:
            raise EpisodeFormatError(f"bad keypoint: {exc}", lineno, "kp") from None
    return tuple(kps)


def _parse_record(rec: dict, lineno: int) -> tuple[str, PoseFrame]:
    if not isinstance(rec, dict):
        raise EpisodeFormatError("record must be a JSON object", lineno)
    v = rec.get("v", FORMAT_VERSION)
    if v != FORMAT_VERSION:
        raise EpisodeFormatError(f"unsupported format version {v!r}", lineno, "v")
    for key in ("episode_id", "track_id", "t", "kp"):
        if key not in rec:
            raise EpisodeFormatError(f"missing field {key!r}", lineno, key)
    t = rec["t"]
    if not isinstance(t, (int, float)) or not math.isfinite(t):
        raise EpisodeFormatError("t must be a finite number", lineno, "t")
    kps = _parse_keypoints(rec["kp"], lineno)
    dist = rec.get("dist_m")
    if dist is not None:
        if not isinstance(dist, (int, float)) or not dist > 0 or not math.isfinite(dist):
            raise EpisodeFormatError("dist_m must be a positive finite number", lineno, "dist_m")
        dist = float(dist)
    elif rec.get("depth") is not None:
        depth = rec["depth"]
        try:
            patch = np.array([[np.nan if c is None else c for c in row] for row in depth["patch"]],
                             dtype=float)
            origin = depth.get("origin", (0, 0))
        except (KeyError, TypeError, ValueError):
            raise EpisodeFormatError("depth must carry a 2-D 'patch'", lineno, "depth") from None
        mid = _shoulder_mid(kps)
        if mid is not None:
            try:
                dist = estimate_distance(patch, (mid[0] - origin[0], mid[1] - origin[1]))
            except InvalidDepthError:
                dist = None
    return str(rec["episode_id"]), PoseFrame(float(t), str(rec["track_id"]), kps, dist)


def _shoulder_mid(kps: Sequence[Keypoint | None]) -> tuple[float, float] | None:
    ls, rs = kps[L_SHOULDER], kps[R_SHOULDER]
    if ls is None or rs is None or min(ls.confidence, rs.confidence) < CONFIDENCE_FLOOR:
        return None
    return ((ls.x + rs.x) / 2, (ls.y + rs.y) / 2)


def load_episode(path: str | Path, labels: str | Path | None = None) -> Episode:
    """Read an episode file (and its ``.labels`` sidecar if present)."""
    path = Path(path)
    frames: list[PoseFrame] = []
    episode_id = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EpisodeFormatError(f"invalid JSON: {exc.msg}", lineno) from None
            ep_id, frame = _parse_record(rec, lineno)
            if episode_id is None:
                episode_id = ep_id
            elif ep_id != episode_id:
                raise EpisodeFormatError(
                    f"mixed episode ids {episode_id!r} and {ep_id!r}", lineno, "episode_id")
            frames.append(frame)
    frames.sort(key=lambda f: (f.track_id, f.timestamp))
    labels_path = Path(labels) if labels is not None else path.with_name(path.name + ".labels")
    gt = None
    if labels_path.exists():
        with open(labels_path) as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise EpisodeFormatError(f"invalid labels JSON: {exc.msg}", exc.lineno) from None
        gt = GroundTruth.from_json(obj)
        if episode_id is None:
            episode_id = obj.get("episode_id")
    if episode_id is None:
        episode_id = path.stem
    return Episode(episode_id, tuple(frames), gt)


def frame_record(episode_id: str, frame: PoseFrame) -> dict:
    rec = {
        "v": FORMAT_VERSION,
        "episode_id": episode_id,
        "track_id": frame.track_id,
        "t": frame.timestamp,
        "kp": [None if kp is None else [kp.x, kp.y, kp.confidence] for kp in frame.keypoints],
    }
    if frame.distance_m is not None:
        rec["dist_m"] = frame.distance_m
    return rec


def save_episode(episode: Episode, path: str | Path) -> None:
    """Write frames as JSONL and ground truth (if any) to the ``.labels`` sidecar."""
    path = Path(path)
    with open(path, "w") as fh:
        for frame in episode.frames:
            fh.write(json.dumps(frame_record(episode.episode_id, frame)) + "\n")
    if episode.ground_truth is not None:
        with open(path.with_name(path.name + ".labels"), "w") as fh:
            json.dump(episode.ground_truth.to_json(episode.episode_id), fh, indent=1)
            fh.write("\n")


def normalize_pose(frame: PoseFrame | np.ndarray, floor: float = CONFIDENCE_FLOOR) -> np.ndarray:
    """Center keypoints on the shoulder midpoint and divide by torso length.

    Torso length is the distance between the shoulder and hip midpoints, so the
    output always has shoulder midpoint (0, 0) and torso length 1. Absent
    keypoints stay NaN.
    """
    pts = frame.as_array(floor) if isinstance(frame, PoseFrame) else np.asarray(frame, float)
    missing = [i for i in ANCHORS if not np.all(np.isfinite(pts[i]))]
    if missing:
        raise MissingLandmarkError(f"anchor keypoints missing: {missing}")
    shoulder_mid = (pts[L_SHOULDER] + pts[R_SHOULDER]) / 2
    hip_mid = (pts[L_HIP] + pts[R_HIP]) / 2
    torso = float(np.linalg.norm(shoulder_mid - hip_mid))
    if torso < TORSO_EPS:
        raise DegenerateTorsoError(f"torso length {torso:.3g} below {TORSO_EPS}")
    return (pts - shoulder_mid) / torso


def estimate_distance(depth_patch: np.ndarray, shoulder_mid: tuple[float, float],
                      window: int = DEPTH_WINDOW) -> float:
    """Mean of valid depth cells in a ``window`` x ``window`` block around a pixel.

    ``shoulder_mid`` is (x, y) in patch coordinates: x indexes columns, y rows.
    Non-finite and non-positive cells are invalid.
    """
    patch = np.asarray(depth_patch, dtype=float)
    if patch.ndim != 2 or patch.size == 0:
        raise InvalidDepthError("depth patch must be a nonempty 2-D grid")
    col, row = int(round(shoulder_mid[0])), int(round(shoulder_mid[1]))
    half = window // 2
    r0, r1 = max(row - half, 0), min(row + half + 1, patch.shape[0])
    c0, c1 = max(col - half, 0), min(col + half + 1, patch.shape[1])
    block = patch[r0:r1, c0:c1]
    valid = block[np.isfinite(block) & (block > 0)]
    if valid.size == 0:
        raise InvalidDepthError("no valid depth cells around shoulder midpoint")
    return float(valid.mean())


def split_segments(frames: Sequence[PoseFrame], max_gap: float = MAX_GAP_S) -> list[list[PoseFrame]]:
    """Split one track's time-ordered frames wherever consecutive samples are > max_gap apart."""
    segments: list[list[PoseFrame]] = []
    nominal = 1.0 / FPS
    for frame in frames:
        if segments and frame.timestamp - segments[-1][-1].timestamp <= max_gap:
            dt = frame.timestamp - segments[-1][-1].timestamp
            if abs(dt - nominal) > SPACING_TOLERANCE * nominal:
                logger.debug("track %s: irregular frame spacing %.3fs at t=%.3f",
                             frame.track_id, dt, frame.timestamp)
            segments[-1].append(frame)
        else:
            segments.append([frame])
    return segments


def frame_index(t: float, t0: float, fps: float = FPS) -> int:
    return int(round((t - t0) * fps))
