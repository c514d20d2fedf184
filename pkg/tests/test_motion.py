"""Tests for badm_dance.motion module."""

import numpy as np
import pytest

from badm_dance.errors import (
    DegenerateRotation,
    NotARotation,
    SequenceTooShort,
    ShapeMismatch,
    ValidationError,
)
from badm_dance.motion import (
    FRAME_DIMS,
    MotionSequence,
    PoseFrame,
    Skeleton,
    axis_angle_to_matrix,
    bone_lengths,
    compute_contact_labels,
    fk_positions,
    forward_kinematics,
    matrix_to_rot6d,
    motion_positions,
    rot6d_to_matrix,
)


def test_default_skeleton_loads():
    """Test the packaged skeleton has 24 joints rooted at the pelvis."""
    skeleton = Skeleton.default()
    assert len(skeleton.parents) == 24
    assert skeleton.parents[0] == -1
    assert skeleton.foot_points == (7, 10, 8, 11)
    assert skeleton.joint_names[0] == "pelvis"


def test_skeleton_rejects_parent_after_child(skeleton):
    """Test a parent index that does not precede its child is rejected."""
    raw = skeleton.to_dict()
    raw["parents"][4] = 5
    with pytest.raises(ValidationError, match="parents must precede"):
        Skeleton.from_dict(raw)


def test_rot6d_identity():
    """Test the canonical identity six-vector maps to the identity matrix."""
    matrix = rot6d_to_matrix([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    np.testing.assert_allclose(matrix, np.eye(3), atol=1e-12)


def test_rot6d_orthonormalizes_arbitrary_input():
    """Test any non-degenerate six-vector yields a proper rotation."""
    matrix = rot6d_to_matrix([2.0, 0.5, -1.0, 0.3, 4.0, 1.0])
    np.testing.assert_allclose(matrix.T @ matrix, np.eye(3), atol=1e-10)
    assert np.linalg.det(matrix) == pytest.approx(1.0)
    # first column is the normalized first input column
    expected = np.array([2.0, 0.5, -1.0]) / 2.29128784747792
    np.testing.assert_allclose(matrix[:, 0], expected)


def test_rot6d_round_trip_for_a_rotation():
    """Test rotation -> six-vector -> rotation is exact up to rounding."""
    rotation = axis_angle_to_matrix(np.array([0.3, -1.2, 0.7]))
    restored = rot6d_to_matrix(matrix_to_rot6d(rotation))
    np.testing.assert_allclose(restored, rotation, atol=1e-10)


def test_rot6d_round_trip_random_rotations():
    """Test a hundred random rotations survive the six-vector form both ways."""
    rng = np.random.default_rng(17)
    rotations = axis_angle_to_matrix(rng.uniform(-np.pi, np.pi, size=(100, 3)))
    for rotation in rotations:
        restored = rot6d_to_matrix(matrix_to_rot6d(rotation))
        np.testing.assert_allclose(restored, rotation, rtol=0, atol=1e-10)
        r6 = rng.normal(size=6)
        settled = matrix_to_rot6d(rot6d_to_matrix(r6))
        np.testing.assert_allclose(
            rot6d_to_matrix(settled), rot6d_to_matrix(r6), atol=1e-12
        )


def test_matrix_to_rot6d_tolerance_is_absolute():
    """Test a rotation scaled by a few parts per million is refused."""
    rotation = axis_angle_to_matrix(np.array([0.2, 0.4, -0.1]))
    matrix_to_rot6d(rotation)
    with pytest.raises(NotARotation):
        matrix_to_rot6d(rotation * (1.0 + 3e-6))


@pytest.mark.parametrize(
    "r6",
    [
        [0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0, 2.0, 0.0, 0.0],
    ],
)
def test_rot6d_degenerate_input(r6):
    """Test a zero or parallel column is reported as degenerate."""
    with pytest.raises(DegenerateRotation):
        rot6d_to_matrix(r6)


def test_rot6d_wrong_shape():
    """Test a vector that is not length six is rejected."""
    with pytest.raises(ShapeMismatch):
        rot6d_to_matrix([1.0, 0.0, 0.0])


def test_matrix_to_rot6d_rejects_reflection():
    """Test a matrix with determinant -1 is not accepted as a rotation."""
    with pytest.raises(NotARotation):
        matrix_to_rot6d(np.diag([1.0, 1.0, -1.0]))


def test_pose_frame_pack_unpack():
    """Test packing lays out rotations, root and contacts in order."""
    frame = PoseFrame.rest(root_translation=(0.1, 0.9, -0.2))
    vector = frame.pack()
    assert vector.shape == (FRAME_DIMS,)
    np.testing.assert_array_equal(vector[144:147], [0.1, 0.9, -0.2])
    np.testing.assert_array_equal(vector[147:], np.zeros(4))
    restored = PoseFrame.unpack(vector)
    np.testing.assert_array_equal(restored.rotations, frame.rotations)


def test_motion_sequence_rejects_wrong_width():
    """Test a motion whose rows are not 151 wide is rejected."""
    with pytest.raises(ShapeMismatch):
        MotionSequence(30, np.zeros((10, 150)))


def test_rest_pose_positions_are_offset_sums(skeleton):
    """Test rest-pose FK places each joint at the summed rest offsets."""
    frame = PoseFrame.rest(root_translation=(0.0, 1.0, 0.0))
    positions = forward_kinematics(skeleton, frame)
    expected = np.zeros((24, 3))
    expected[0] = [0.0, 1.0, 0.0]
    for j in range(1, 24):
        expected[j] = expected[skeleton.parents[j]] + skeleton.rest_offsets[j]
    np.testing.assert_allclose(positions, expected, atol=1e-12)


def test_root_yaw_rotates_whole_body(skeleton):
    """Test a 90 degree root turn about y rotates every joint about the root."""
    rest = forward_kinematics(skeleton, PoseFrame.rest())
    yaw = axis_angle_to_matrix(np.array([0.0, np.pi / 2, 0.0]))
    frame = PoseFrame.rest()
    rotations = frame.rotations.copy()
    rotations[0] = matrix_to_rot6d(yaw)
    turned = forward_kinematics(skeleton, PoseFrame(rotations, frame.root_translation))
    np.testing.assert_allclose(turned, rest @ yaw.T, atol=1e-10)


def test_bone_lengths_preserved_under_any_rotation(skeleton):
    """Test FK keeps every bone at its rest length for random rotations."""
    rng = np.random.default_rng(3)
    frames = rng.normal(size=(5, FRAME_DIMS))
    positions = fk_positions(skeleton, frames)
    expected = np.linalg.norm(skeleton.rest_offsets[1:], axis=-1)
    lengths = bone_lengths(positions, skeleton)
    np.testing.assert_allclose(lengths, np.tile(expected, (5, 1)))


def test_fk_batches_match_single_frames(skeleton):
    """Test batched FK agrees with frame-by-frame FK."""
    rng = np.random.default_rng(4)
    data = rng.normal(size=(3, FRAME_DIMS))
    batched = motion_positions(MotionSequence(30, data), skeleton)
    for i in range(3):
        single = forward_kinematics(skeleton, PoseFrame.unpack(data[i]))
        np.testing.assert_allclose(batched[i], single, atol=1e-12)


def test_contact_labels_static_feet(rest_motion, skeleton):
    """Test feet that never move are in contact on every frame."""
    labels = compute_contact_labels(rest_motion, skeleton)
    assert labels.shape == (30, 4)
    assert np.all(labels == 1.0)


def test_contact_labels_moving_root(rest_motion, skeleton):
    """Test a fast-moving body has no contacts and the last frame repeats."""
    data = rest_motion.data.copy()
    data[:, 144] = np.arange(30) * 0.05
    labels = compute_contact_labels(MotionSequence(30, data), skeleton)
    assert np.all(labels == 0.0)


def test_contact_labels_need_two_frames(rest_motion, skeleton):
    """Test a one-frame motion cannot be labelled."""
    with pytest.raises(SequenceTooShort):
        compute_contact_labels(MotionSequence(30, rest_motion.data[:1]), skeleton)
