"""Head-geometry signals and velocity statistics for 2-second pose windows."""
from __future__ import annotations

import csv
import logging
from bisect import bisect_left
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np

from .ingest import (
    FPS,
    L_EAR,
    L_EYE,
    NOSE,
    R_EAR,
    R_EYE,
    DegenerateTorsoError,
    Episode,
    MissingLandmarkError,
    PoseFrame,
    frame_index,
    normalize_pose,
)

logger = logging.getLogger(__name__)

WINDOW_FRAMES = 30
MAX_INTERP_GAP = 3
HEAD = (NOSE, L_EYE, R_EYE, L_EAR, R_EAR)

SIGNAL_NAMES = (
    "left_ear_nose_x",
    "left_ear_nose_y",
    "right_ear_nose_x",
    "right_ear_nose_y",
    "eye_separation",
    "ear_separation",
    "ear_symmetry",
)
STATS = ("max", "min", "std")
FEATURE_NAMES = tuple(f"{name}_vel_{stat}" for name in SIGNAL_NAMES for stat in STATS)
N_FEATURES = len(FEATURE_NAMES)


class FeatureError(ValueError):
    """A window cannot be featurized."""


class ShortWindowError(FeatureError):
    pass


class MissingHeadKeypointsError(FeatureError):
    pass


@dataclass(frozen=True)
class SignalWindow:
    """Seven per-frame head signals, shape (7, T), in SIGNAL_NAMES order."""

    signals: np.ndarray
    track_id: str | None = None
    window_start: float | None = None

    def __post_init__(self):
        if self.signals.ndim != 2 or self.signals.shape[0] != len(SIGNAL_NAMES):
            raise ValueError(f"signals must have shape (7, T), got {self.signals.shape}")

    @classmethod
    def from_series(cls, series: Mapping[str, Sequence[float]], **kw) -> "SignalWindow":
        unknown = set(series) - set(SIGNAL_NAMES)
        if unknown or len(series) != len(SIGNAL_NAMES):
            raise ValueError(f"need exactly the signals {SIGNAL_NAMES}, got {sorted(series)}")
        return cls(np.array([np.asarray(series[n], float) for n in SIGNAL_NAMES]), **kw)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.signals[SIGNAL_NAMES.index(name)]

    @property
    def length(self) -> int:
        return self.signals.shape[1]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (N_FEATURES,):
            raise ValueError(f"feature vector must have length {N_FEATURES}")

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, map(float, self.values)))


@dataclass(frozen=True)
class TrackWindow:
    """One track's frames inside one gating window."""

    track_id: str
    start: float
    duration: float
    frames: tuple[PoseFrame, ...]
    prev_distance: float | None = None

    @property
    def distances(self) -> np.ndarray:
        return np.array([np.nan if f.distance_m is None else f.distance_m for f in self.frames])

    @property
    def complete(self) -> bool:
        return len(self.frames) == round(self.duration * FPS)


def _interpolate(series: np.ndarray, max_gap: int) -> np.ndarray:
    """Linearly fill interior NaN runs of at most ``max_gap`` samples."""
    out = series.copy()
    bad = ~np.isfinite(out)
    if not bad.any():
        return out
    idx = np.flatnonzero(bad)
    runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
    for run in runs:
        lo, hi = run[0] - 1, run[-1] + 1
        if lo < 0 or hi >= len(out):
            raise MissingHeadKeypointsError("head keypoint missing at window edge")
        if len(run) > max_gap:
            raise MissingHeadKeypointsError(f"head keypoint gap of {len(run)} frames")
        frac = (run - lo) / (hi - lo)
        out[run] = out[lo] + frac * (out[hi] - out[lo])
    return out


def compute_signals(poses: Sequence[np.ndarray | None], track_id: str | None = None,
                    window_start: float | None = None,
                    expected_length: int = WINDOW_FRAMES) -> SignalWindow:
    """Per-frame head geometry from normalized poses.

    ``None`` entries (frames whose normalization failed) count as missing head
    keypoints and go through the same gap interpolation.
    """
    if len(poses) < expected_length:
        raise ShortWindowError(f"window has {len(poses)} frames, need {expected_length}")
    head = np.full((len(poses), len(HEAD), 2), np.nan)
    for i, pose in enumerate(poses):
        if pose is not None:
            head[i] = np.asarray(pose)[list(HEAD)]
    for k in range(len(HEAD)):
        for c in range(2):
            head[:, k, c] = _interpolate(head[:, k, c], MAX_INTERP_GAP)
    nose, leye, reye, lear, rear = (head[:, k] for k in range(len(HEAD)))
    l_vec = lear - nose
    r_vec = rear - nose
    l_len = np.linalg.norm(l_vec, axis=1)
    r_len = np.linalg.norm(r_vec, axis=1)
    hi = np.maximum(l_len, r_len)
    symmetry = np.divide(np.minimum(l_len, r_len), hi, out=np.ones_like(hi), where=hi > 0)
    signals = np.stack([
        l_vec[:, 0], l_vec[:, 1], r_vec[:, 0], r_vec[:, 1],
        np.linalg.norm(leye - reye, axis=1),
        np.linalg.norm(lear - rear, axis=1),
        symmetry,
    ])
    return SignalWindow(signals, track_id, window_start)


def velocities(window: SignalWindow) -> np.ndarray:
    return np.diff(window.signals, axis=1)


def compute_features(window: SignalWindow) -> FeatureVector:
    """(max, min, population std) of each signal's frame-to-frame velocity."""
    vel = velocities(window)
    stats = np.stack([vel.max(axis=1), vel.min(axis=1), vel.std(axis=1)], axis=1)
    values = stats.reshape(-1)
    if not np.all(np.isfinite(values)):
        raise FeatureError("non-finite feature values")
    return FeatureVector(values)


def normalize_window(window: TrackWindow) -> list[np.ndarray | None]:
    """Normalized poses placed by frame index; dropped frames and failed normalizations are None.

    A window missing frames at either end is truncated (episode boundary or
    track start/stop) and raises ShortWindowError.
    """
    expected = round(window.duration * FPS)
    poses: list[np.ndarray | None] = [None] * expected
    seen = []
    for frame in window.frames:
        i = frame_index(frame.timestamp, window.start)
        if not 0 <= i < expected:
            continue
        seen.append(i)
        try:
            poses[i] = normalize_pose(frame)
        except (MissingLandmarkError, DegenerateTorsoError):
            poses[i] = None
    if not seen or min(seen) > 0 or max(seen) < expected - 1:
        raise ShortWindowError(f"window has {len(seen)} of {expected} frames and is truncated")
    return poses


def window_signals(window: TrackWindow) -> SignalWindow:
    poses = normalize_window(window)
    return compute_signals(poses, window.track_id, window.start, len(poses))


def window_features(window: TrackWindow) -> FeatureVector:
    return compute_features(window_signals(window))


def track_windows(episode: Episode, window_s: float = 2.0,
                  stride_s: float | None = None) -> dict[str, list[TrackWindow]]:
    """Slice every track onto a common window grid anchored at the episode start.

    Frames are placed by rounding to the nominal 15 fps index, so small timing
    jitter does not move a frame between windows. Only windows in which the
    track appears at least once are returned.
    """
    stride_s = window_s if stride_s is None else stride_s
    win_n = int(round(window_s * FPS))
    stride_n = int(round(stride_s * FPS))
    t0 = episode.start
    out: dict[str, list[TrackWindow]] = {}
    for tid in episode.track_ids:
        frames = episode.track(tid)
        by_index: dict[int, PoseFrame] = {}
        for f in frames:
            by_index.setdefault(frame_index(f.timestamp, t0), f)
        indices = sorted(by_index)
        windows = []
        prev_dist = None
        p = 0
        for k in range(indices[-1] // stride_n + 1):
            lo, hi = k * stride_n, k * stride_n + win_n
            while p < len(indices) and indices[p] < lo:
                d = by_index[indices[p]].distance_m
                prev_dist = d if d is not None else prev_dist
                p += 1
            members = tuple(by_index[i] for i in indices[bisect_left(indices, lo):bisect_left(indices, hi)])
            if members:
                windows.append(TrackWindow(tid, t0 + k * stride_s, window_s, members, prev_dist))
        out[tid] = windows
    return out


def dump_traces(window: SignalWindow, fh: IO[str], header: bool = True) -> None:
    """Write per-frame signals and velocities as CSV (velocity blank on the last frame)."""
    vel = velocities(window)
    writer = csv.writer(fh, lineterminator="\n")
    if header:
        writer.writerow(["track_id", "window_start", "frame", *SIGNAL_NAMES,
                         *(f"{n}_vel" for n in SIGNAL_NAMES)])
    for t in range(window.length):
        v = [repr(float(x)) for x in vel[:, t]] if t < vel.shape[1] else [""] * len(SIGNAL_NAMES)
        writer.writerow([window.track_id, window.window_start, t,
                         *(repr(float(x)) for x in window.signals[:, t]), *v])
