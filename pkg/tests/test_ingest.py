from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from socialgate.ingest import (
    L_HIP,
    L_SHOULDER,
    N_KEYPOINTS,
    R_HIP,
    R_SHOULDER,
    DecisionLabel,
    DegenerateTorsoError,
    Episode,
    EpisodeFormatError,
    GroundTruth,
    InvalidDepthError,
    Keypoint,
    MissingLandmarkError,
    PoseFrame,
    TrackTruth,
    estimate_distance,
    frame_record,
    load_episode,
    normalize_pose,
    save_episode,
    split_segments,
)

from .conftest import make_episode, make_frame


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_empty_file_gives_zero_tracks(tmp_path):
    ep = load_episode(_write(tmp_path / "e.jsonl", []))
    assert ep.track_ids == [] and ep.frames == ()


def test_two_tracks_of_thirty(tmp_path):
    ep = make_episode(30, tracks=("b", "a"))
    recs = [frame_record("e1", f) for f in reversed(ep.frames)]
    loaded = load_episode(_write(tmp_path / "e.jsonl", recs))
    assert loaded.track_ids == ["a", "b"]
    assert len(loaded.frames) == 60
    keys = [(f.track_id, f.timestamp) for f in loaded.frames]
    assert keys == sorted(keys)


def test_negative_distance_names_field(tmp_path):
    rec = frame_record("e1", make_frame(0.0))
    rec["dist_m"] = -1.0
    with pytest.raises(EpisodeFormatError) as err:
        load_episode(_write(tmp_path / "e.jsonl", [rec]))
    assert err.value.field == "dist_m" and err.value.line == 1


def test_parse_error_carries_line_number(tmp_path):
    good = json.dumps(frame_record("e1", make_frame(0.0)))
    (tmp_path / "e.jsonl").write_text(good + "\n" + good + "\n{not json\n")
    with pytest.raises(EpisodeFormatError, match="line 3"):
        load_episode(tmp_path / "e.jsonl")


@pytest.mark.parametrize("field", ["episode_id", "track_id", "t", "kp"])
def test_missing_field_is_named(tmp_path, field):
    rec = frame_record("e1", make_frame(0.0))
    del rec[field]
    with pytest.raises(EpisodeFormatError) as err:
        load_episode(_write(tmp_path / "e.jsonl", [rec]))
    assert err.value.field == field


def test_wrong_version_and_short_kp(tmp_path):
    rec = frame_record("e1", make_frame(0.0))
    with pytest.raises(EpisodeFormatError, match="version"):
        load_episode(_write(tmp_path / "a.jsonl", [{**rec, "v": 2}]))
    with pytest.raises(EpisodeFormatError) as err:
        load_episode(_write(tmp_path / "b.jsonl", [{**rec, "kp": rec["kp"][:16]}]))
    assert err.value.field == "kp"


def test_confidence_out_of_range_rejected(tmp_path):
    rec = frame_record("e1", make_frame(0.0))
    rec["kp"][0][2] = 1.5
    with pytest.raises(EpisodeFormatError):
        load_episode(_write(tmp_path / "e.jsonl", [rec]))


def test_labels_sidecar_round_trip(tmp_path):
    ep = make_episode(30, tracks=("p1", "p2"))
    gt = GroundTruth({"p1": TrackTruth("interactor", (1.0,), (1.2,), "GazeShift", "Approach")},
                     "p1", (DecisionLabel("p1", 1.0, "Approach"),))
    ep = Episode("e1", ep.frames, gt)
    save_episode(ep, tmp_path / "e1.jsonl")
    assert (tmp_path / "e1.jsonl.labels").exists()
    assert load_episode(tmp_path / "e1.jsonl") == ep


def test_ground_truth_must_reference_present_tracks():
    ep = make_episode(3)
    with pytest.raises(EpisodeFormatError, match="absent"):
        Episode("e", ep.frames, GroundTruth({"ghost": TrackTruth()}))


def test_labels_restricted_to_actions():
    with pytest.raises(ValueError):
        GroundTruth.from_json({"tracks": {}, "decisions": [{"track_id": "p1", "t": 0, "label": "Dance"}]})


def test_depth_patch_path(tmp_path):
    frame = make_frame(0.0, dist=None, offset=(2.0, 2.0), scale=1.0,
                       pts=np.zeros((N_KEYPOINTS, 2)) + [[0.0, 0.0]])
    rec = frame_record("e1", frame)
    rec["depth"] = {"patch": [[1.5] * 5 for _ in range(5)], "origin": [0, 0]}
    ep = load_episode(_write(tmp_path / "e.jsonl", [rec]))
    assert ep.frames[0].distance_m == pytest.approx(1.5)
    rec["dist_m"] = 3.0
    ep = load_episode(_write(tmp_path / "f.jsonl", [rec]))
    assert ep.frames[0].distance_m == 3.0


# ---------------------------------------------------------------- normalize_pose

def _anchors(shoulder_mid=(100.0, 50.0), torso=1.0) -> np.ndarray:
    pts = np.full((N_KEYPOINTS, 2), np.nan)
    sx, sy = shoulder_mid
    pts[L_SHOULDER] = (sx + 0.3, sy)
    pts[R_SHOULDER] = (sx - 0.3, sy)
    pts[L_HIP] = (sx + 0.2, sy + torso)
    pts[R_HIP] = (sx - 0.2, sy + torso)
    pts[0] = (sx + 0.1, sy - 0.5)
    return pts


def test_unit_torso_only_translates():
    pts = _anchors()
    out = normalize_pose(pts)
    np.testing.assert_allclose(out[0], pts[0] - (100.0, 50.0), atol=1e-12)


def test_scaling_twice_gives_same_pose():
    pts = _anchors(torso=3.0)
    np.testing.assert_allclose(normalize_pose(pts * 2), normalize_pose(pts), atol=1e-12)


def test_low_confidence_anchor_is_missing():
    frame = make_frame(0.0)
    kps = list(frame.keypoints)
    kps[R_HIP] = Keypoint(kps[R_HIP].x, kps[R_HIP].y, 0.0)
    with pytest.raises(MissingLandmarkError):
        normalize_pose(PoseFrame(0.0, "p", tuple(kps)))


def test_degenerate_torso():
    pts = _anchors(torso=0.0)
    pts[L_HIP] = pts[L_SHOULDER]
    pts[R_HIP] = pts[R_SHOULDER]
    with pytest.raises(DegenerateTorsoError):
        normalize_pose(pts)


coord = st.floats(-500, 500, allow_nan=False)


@given(dx=coord, dy=coord, scale=st.floats(0.05, 50), seed=st.integers(0, 2**16))
def test_normalize_invariant_to_translation_and_scale(dx, dy, scale, seed):
    base = np.random.default_rng(seed).uniform(-100, 100, (N_KEYPOINTS, 2))
    base[L_HIP] += (0, 150)
    base[R_HIP] += (0, 150)
    moved = base * scale + (dx, dy)
    np.testing.assert_allclose(normalize_pose(moved), normalize_pose(base), atol=1e-9)


@given(seed=st.integers(0, 2**16))
def test_normalized_anchor_geometry(seed):
    pts = np.random.default_rng(seed).uniform(-300, 300, (N_KEYPOINTS, 2))
    pts[L_HIP] += (0, 400)
    pts[R_HIP] += (0, 400)
    out = normalize_pose(pts)
    mid_s = (out[L_SHOULDER] + out[R_SHOULDER]) / 2
    mid_h = (out[L_HIP] + out[R_HIP]) / 2
    np.testing.assert_allclose(mid_s, 0.0, atol=1e-12)
    assert np.linalg.norm(mid_s - mid_h) == pytest.approx(1.0, abs=1e-12)


# -------------------------------------------------------------- estimate_distance

def test_uniform_patch():
    assert estimate_distance(np.full((9, 9), 2.0), (4, 4)) == 2.0


def test_two_valid_cells():
    patch = np.full((5, 5), np.nan)
    patch[0, 0], patch[4, 4] = 1.0, 3.0
    assert estimate_distance(patch, (2, 2)) == 2.0


def test_all_invalid():
    patch = np.zeros((5, 5))
    patch[1, 1] = np.nan
    with pytest.raises(InvalidDepthError):
        estimate_distance(patch, (2, 2))


def test_window_is_five_by_five():
    patch = np.full((11, 11), 9.0)
    patch[3:8, 3:8] = 1.0
    assert estimate_distance(patch, (5, 5)) == 1.0


# -------------------------------------------------------------------- segments

def test_gap_over_half_second_splits():
    frames = [make_frame(t) for t in (0.0, 1 / 15, 2 / 15, 1.0, 1.0 + 1 / 15)]
    segs = split_segments(frames)
    assert [len(s) for s in segs] == [3, 2]


# ------------------------------------------------------------------ round trip

frame_st = st.builds(
    lambda t, d, c, miss: PoseFrame(
        t, "p1",
        tuple(None if i in miss else Keypoint(float(i * 3.5), float(i * -2.25), c)
              for i in range(N_KEYPOINTS)),
        d),
    st.floats(0, 100, allow_nan=False),
    st.one_of(st.none(), st.floats(0.1, 20)),
    st.floats(0, 1),
    st.sets(st.integers(0, N_KEYPOINTS - 1), max_size=4),
)


@given(st.lists(frame_st, max_size=8, unique_by=lambda f: f.timestamp))
def test_save_load_round_trip(tmp_path_factory, frames):
    path = tmp_path_factory.mktemp("rt") / "e.jsonl"
    ep = Episode("rt", tuple(sorted(frames, key=lambda f: (f.track_id, f.timestamp))))
    save_episode(ep, path)
    again = load_episode(path)
    assert again.frames == ep.frames
    if frames:
        assert again.episode_id == "rt"
