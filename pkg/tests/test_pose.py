import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posegwr.pose import (
    IngestionError,
    KeypointFrame,
    MalformedFrameError,
    PoseSequence,
    SampleVector,
    flatten,
    ingest_openpose_dir,
    load_sequence,
    normalize_frame,
    save_sequence,
    sequence_from_text,
    sequence_to_text,
    unflatten,
)


def raw_frame(x=240.0, y=160.0, conf=0.9):
    raw = np.zeros((25, 3))
    raw[:, 0] = x
    raw[:, 1] = y
    raw[:, 2] = conf
    return raw


def test_normalize_midpoint():
    frame = normalize_frame(raw_frame(240, 160), (480, 320))
    assert np.allclose(frame.coords(), 0.5)


def test_normalize_full_extent():
    frame = normalize_frame(raw_frame(480, 320), (480, 320))
    assert np.allclose(frame.coords(), 1.0)


def test_normalize_masks_undetected():
    raw = raw_frame()
    raw[3] = (77.0, 88.0, 0.0)
    frame = normalize_frame(raw, (480, 320))
    assert frame.mask[3]
    assert frame.joints[3, 0] == 0.0 and frame.joints[3, 1] == 0.0
    assert not frame.mask[4]


def test_normalize_idempotent_on_unit_dims():
    frame = normalize_frame(raw_frame(0.25, 0.75), (1, 1))
    again = normalize_frame(frame.joints, (1, 1))
    assert np.array_equal(frame.joints, again.joints)


def test_normalize_rejects_wrong_joint_count():
    with pytest.raises(MalformedFrameError):
        normalize_frame(np.zeros((24, 3)), (480, 320))
    with pytest.raises(ValueError):
        normalize_frame(raw_frame(), (0, 320))


def test_flatten_constant_frame():
    frame = normalize_frame(raw_frame(240, 160), (480, 320))
    sv = flatten(frame)
    assert sv.values.shape == (50,)
    assert np.allclose(sv.values, 0.5)
    assert not sv.mask.any()


def test_flatten_masked_joint_zeroed():
    raw = raw_frame()
    raw[0, 2] = 0.0
    sv = flatten(normalize_frame(raw, (480, 320)))
    assert sv.mask[0]
    assert sv.values[0] == 0.0 and sv.values[1] == 0.0


@settings(max_examples=50, deadline=None)
@given(
    coords=st.lists(st.floats(0, 1, allow_nan=False), min_size=50, max_size=50),
    mask_bits=st.lists(st.booleans(), min_size=25, max_size=25),
)
def test_flatten_unflatten_round_trip(coords, mask_bits):
    joints = np.zeros((25, 3))
    joints[:, :2] = np.array(coords).reshape(25, 2)
    joints[:, 2] = [0.0 if m else 1.0 for m in mask_bits]
    joints[np.array(mask_bits), :2] = 0.0
    frame = KeypointFrame(joints=joints, frame_index=3)
    back = unflatten(flatten(frame), frame_index=3)
    assert np.array_equal(back.coords(), frame.coords())
    assert np.array_equal(back.mask, frame.mask)
    assert back.frame_index == frame.frame_index


def test_sample_vector_validates_shape():
    with pytest.raises(ValueError):
        SampleVector(values=np.zeros(49), mask=np.zeros(25, dtype=bool))
    with pytest.raises(ValueError):
        SampleVector(values=np.zeros(50), mask=np.zeros(24, dtype=bool))


def test_pose_sequence_requires_contiguous_indices():
    f0 = normalize_frame(raw_frame(), (480, 320), frame_index=0)
    f2 = normalize_frame(raw_frame(), (480, 320), frame_index=2)
    with pytest.raises(ValueError):
        PoseSequence(frames=(f0, f2))


def openpose_doc(values):
    return {"version": 1.3, "people": [{"pose_keypoints_2d": values}]}


def write_openpose_dir(path, count=5, shuffle_names=False):
    for i in range(count):
        values = []
        for j in range(25):
            values += [float(10 * i + j), float(5 * i), 0.9]
        stem = f"squat_{i:012d}_keypoints" if not shuffle_names else f"z{count - i}_{i:09d}_keypoints"
        (path / f"{stem}.json").write_text(json.dumps(openpose_doc(values)))


def test_ingest_openpose_dir(tmp_path):
    write_openpose_dir(tmp_path, count=5)
    seq = ingest_openpose_dir(tmp_path, dims=(480, 320))
    assert len(seq) == 5
    # frame order follows the embedded number, and values are normalized
    assert seq.frames[2].joints[0, 0] == pytest.approx(20.0 / 480)


def test_ingest_order_independent_of_listing(tmp_path):
    write_openpose_dir(tmp_path, count=4, shuffle_names=True)
    seq = ingest_openpose_dir(tmp_path, dims=(480, 320))
    xs = [f.joints[0, 0] * 480 for f in seq.frames]
    assert xs == [0.0, 10.0, 20.0, 30.0]


def test_ingest_empty_dir_errors(tmp_path):
    with pytest.raises(IngestionError, match="no frames found"):
        ingest_openpose_dir(tmp_path)


def test_ingest_no_people_masks_frame(tmp_path):
    (tmp_path / "f_000000_keypoints.json").write_text(json.dumps({"people": []}))
    seq = ingest_openpose_dir(tmp_path)
    assert seq.frames[0].mask.all()


def test_ingest_unparsable_names_file(tmp_path):
    (tmp_path / "f_000000_keypoints.json").write_text("{not json")
    with pytest.raises(IngestionError, match="f_000000_keypoints.json"):
        ingest_openpose_dir(tmp_path)


def test_ingest_wrong_float_count(tmp_path):
    (tmp_path / "f_000000_keypoints.json").write_text(
        json.dumps(openpose_doc([0.1] * 74))
    )
    with pytest.raises(IngestionError, match="expected 75"):
        ingest_openpose_dir(tmp_path)


def test_ingest_first_person_only(tmp_path):
    person1 = [1.0, 2.0, 0.9] * 25
    person2 = [9.0, 9.0, 0.9] * 25
    doc = {"people": [{"pose_keypoints_2d": person1}, {"pose_keypoints_2d": person2}]}
    (tmp_path / "f_000000_keypoints.json").write_text(json.dumps(doc))
    seq = ingest_openpose_dir(tmp_path, dims=(480, 320))
    assert seq.frames[0].joints[0, 0] == pytest.approx(1.0 / 480)


def test_sequence_file_round_trip_bit_exact(tmp_path, squat_seq):
    path = tmp_path / "squat.seq"
    save_sequence(squat_seq, path)
    text = path.read_text()
    reloaded = load_sequence(path)
    assert sequence_to_text(reloaded) == text
    for a, b in zip(squat_seq.frames, reloaded.frames):
        assert np.array_equal(a.joints, b.joints)


def test_sequence_file_version_check(squat_seq):
    doc = json.loads(sequence_to_text(squat_seq))
    doc["version"] = 999
    with pytest.raises(IngestionError, match="version"):
        sequence_from_text(json.dumps(doc))
