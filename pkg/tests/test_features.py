from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from socialgate.features import (
    FEATURE_NAMES,
    N_FEATURES,
    SIGNAL_NAMES,
    MissingHeadKeypointsError,
    ShortWindowError,
    SignalWindow,
    TrackWindow,
    compute_features,
    compute_signals,
    dump_traces,
    track_windows,
    window_features,
)
from socialgate.ingest import L_EAR, NOSE, R_EAR, Episode
from socialgate.sim import normalized_pose

from . import oracles
from .conftest import make_episode, make_frame


def _poses(yaws):
    return [normalized_pose(y) for y in yaws]


def test_feature_layout():
    assert N_FEATURES == 21 and len(set(FEATURE_NAMES)) == 21
    assert FEATURE_NAMES[:3] == ("left_ear_nose_x_vel_max", "left_ear_nose_x_vel_min",
                                 "left_ear_nose_x_vel_std")
    assert FEATURE_NAMES[-1] == "ear_symmetry_vel_std"


def test_frontal_face_symmetry_is_one():
    sig = compute_signals(_poses([0.0] * 30))
    np.testing.assert_array_equal(sig["ear_symmetry"], 1.0)


def test_half_length_ear_gives_half_symmetry():
    pose = normalized_pose(0.0)
    pose[NOSE] = (0.0, 0.0)
    pose[L_EAR] = (0.4, 0.0)
    pose[R_EAR] = (-0.2, 0.0)
    sig = compute_signals([pose] * 30)
    np.testing.assert_allclose(sig["ear_symmetry"], 0.5)


def test_static_pose_constant_series():
    sig = compute_signals(_poses([0.4] * 30))
    assert np.all(sig.signals == sig.signals[:, :1])


def test_constant_signals_zero_features():
    fv = compute_features(SignalWindow(np.ones((7, 30))))
    np.testing.assert_array_equal(fv.values, 0.0)


def test_ramp_on_first_signal():
    s = np.zeros((7, 30))
    s[0] = 0.02 * np.arange(30)
    fv = compute_features(SignalWindow(s))
    assert fv["left_ear_nose_x_vel_max"] == pytest.approx(0.02, abs=1e-15)
    assert fv["left_ear_nose_x_vel_min"] == pytest.approx(0.02, abs=1e-15)
    assert fv["left_ear_nose_x_vel_std"] == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_array_equal(fv.values[3:], 0.0)


def test_scripted_turn_matches_oracle():
    yaws = 0.75 * (1 - (1 - np.cos(np.pi * np.clip((np.arange(30) - 8) / 7, 0, 1))) / 2)
    poses = _poses(yaws)
    fv = compute_features(compute_signals(poses))
    frames = [{"nose": p[0], "leye": p[1], "reye": p[2], "lear": p[3], "rear": p[4]} for p in poses]
    np.testing.assert_allclose(fv.values, oracles.window_features(frames), atol=1e-12)
    assert fv["left_ear_nose_x_vel_max"] > 0 or fv["left_ear_nose_x_vel_min"] < 0


def test_named_series_order_is_canonical():
    rng = np.random.default_rng(0)
    series = {n: rng.normal(size=30) for n in SIGNAL_NAMES}
    shuffled = dict(reversed(list(series.items())))
    a = compute_features(SignalWindow.from_series(series))
    b = compute_features(SignalWindow.from_series(shuffled))
    np.testing.assert_array_equal(a.values, b.values)
    v = np.diff(series["eye_separation"])
    assert a["eye_separation_vel_max"] == v.max()
    assert a["eye_separation_vel_std"] == pytest.approx(v.std(ddof=0))
    with pytest.raises(ValueError):
        SignalWindow.from_series({**series, "bogus": np.zeros(30)})


def test_short_window():
    with pytest.raises(ShortWindowError):
        compute_signals(_poses([0.0] * 29))


def test_three_frame_gap_is_interpolated():
    poses = _poses(np.linspace(0, 0.6, 30))
    holed = list(poses)
    for i in (10, 11, 12):
        holed[i] = holed[i].copy()
        holed[i][:5] = np.nan
    sig = compute_signals(holed)
    assert np.isfinite(sig.signals).all()
    ref = compute_signals(poses)
    np.testing.assert_allclose(sig.signals[:, :10], ref.signals[:, :10])


@pytest.mark.parametrize("holes", [(10, 11, 12, 13), (0,), (29,)])
def test_uncoverable_gaps(holes):
    poses = [p.copy() for p in _poses([0.2] * 30)]
    for i in holes:
        poses[i][R_EAR] = np.nan
    with pytest.raises(MissingHeadKeypointsError):
        compute_signals(poses)


def test_dropped_frame_interpolated_in_track_window():
    ep = make_episode(30, yaw=lambda i: i / 60)
    frames = tuple(f for i, f in enumerate(ep.frames) if i != 14)
    win = TrackWindow("p1", 0.0, 2.0, frames)
    assert np.isfinite(window_features(win).values).all()
    with pytest.raises(ShortWindowError):
        window_features(TrackWindow("p1", 0.0, 2.0, ep.frames[:20]))


def test_track_windows_grid_and_prev_distance():
    ep = make_episode(75, tracks=("a", "b"), dist=lambda i: 3.0 - i * 0.02)
    wins = track_windows(ep)
    assert [w.start for w in wins["a"]] == [0.0, 2.0, 4.0]
    assert [len(w.frames) for w in wins["a"]] == [30, 30, 15]
    assert wins["a"][0].prev_distance is None
    assert wins["a"][1].prev_distance == pytest.approx(3.0 - 29 * 0.02)


def test_dump_traces_rows():
    buf = io.StringIO()
    dump_traces(compute_signals(_poses([0.1] * 30), "p1", 4.0), buf)
    rows = buf.getvalue().splitlines()
    assert len(rows) == 31 and rows[0].startswith("track_id,window_start,frame,left_ear_nose_x")
    assert rows[-1].endswith(",,,,,,,")


# ------------------------------------------------------------------ properties

windows = st.integers(0, 2**32 - 1).map(
    lambda s: np.random.default_rng(s).normal(size=(7, 30)))


@given(windows)
def test_time_reversal(sig):
    f = compute_features(SignalWindow(sig)).values.reshape(7, 3)
    r = compute_features(SignalWindow(sig[:, ::-1].copy())).values.reshape(7, 3)
    np.testing.assert_allclose(r[:, 0], -f[:, 1], atol=1e-12)
    np.testing.assert_allclose(r[:, 1], -f[:, 0], atol=1e-12)
    np.testing.assert_allclose(r[:, 2], f[:, 2], atol=1e-12)


@given(windows, st.integers(0, 6), st.floats(-100, 100))
def test_offset_invariance(sig, k, c):
    shifted = sig.copy()
    shifted[k] += c
    np.testing.assert_allclose(compute_features(SignalWindow(shifted)).values,
                               compute_features(SignalWindow(sig)).values, atol=1e-9)


@given(windows)
def test_max_at_least_min(sig):
    f = compute_features(SignalWindow(sig)).values.reshape(7, 3)
    assert np.all(f[:, 0] >= f[:, 1]) and np.all(f[:, 2] >= 0)


@given(st.lists(st.floats(0, 1), min_size=30, max_size=30))
def test_signal_ranges(yaws):
    sig = compute_signals(_poses(yaws))
    assert np.all(sig["eye_separation"] >= 0) and np.all(sig["ear_separation"] >= 0)
    assert np.all((sig["ear_symmetry"] >= 0) & (sig["ear_symmetry"] <= 1))


def test_empty_episode_has_no_windows():
    assert track_windows(Episode("e", ())) == {}


def test_make_frame_helper_is_frontal():
    f = make_frame(0.0)
    assert f.keypoints[L_EAR].x > f.keypoints[R_EAR].x
