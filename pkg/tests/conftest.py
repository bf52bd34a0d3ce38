from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from socialgate.ingest import N_KEYPOINTS, Episode, Keypoint, PoseFrame
from socialgate.sim import normalized_pose

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_frame(t: float, track: str = "p1", pts=None, conf: float = 0.9,
               dist: float | None = 2.0, scale: float = 100.0, offset=(320.0, 240.0)) -> PoseFrame:
    """Frame from a normalized pose (frontal by default) mapped to pixels."""
    pts = normalized_pose(0.0) if pts is None else np.asarray(pts, float)
    kps = tuple(Keypoint(float(offset[0] + x * scale), float(offset[1] + y * scale), conf)
                for x, y in pts)
    assert len(kps) == N_KEYPOINTS
    return PoseFrame(t, track, kps, dist)


def make_episode(n_frames: int = 30, tracks=("p1",), dist=2.0, yaw=None, episode_id="ep") -> Episode:
    frames = []
    for tid in tracks:
        for i in range(n_frames):
            pose = normalized_pose(0.0 if yaw is None else yaw(i))
            d = dist(i) if callable(dist) else dist
            frames.append(make_frame(i / 15, tid, pose, dist=d))
    return Episode(episode_id, tuple(frames))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
