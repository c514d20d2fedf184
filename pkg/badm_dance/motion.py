"""Pose representation, skeleton data model and forward kinematics.

A frame is a flat 151-vector::

    [0, 144)    24 joint rotations, 6 values each (first then second column
                of the local rotation matrix)
    [144, 147)  root translation in meters
    [147, 151)  contacts: left heel, left toe, right heel, right toe

Coordinates are y-up, z-forward, +x towards the character's left.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    DegenerateRotation,
    FileFormatError,
    NotARotation,
    SequenceTooShort,
    ShapeMismatch,
    ValidationError,
)

JOINT_COUNT = 24
ROTATION_DIMS = JOINT_COUNT * 6
POSE_DIMS = ROTATION_DIMS + 3
FRAME_DIMS = POSE_DIMS + 4
ROOT_SLICE = slice(ROTATION_DIMS, POSE_DIMS)
CONTACT_SLICE = slice(POSE_DIMS, FRAME_DIMS)

# pelvis, hips, knees, ankles, feet
LOWER_BODY_JOINTS = (0, 1, 2, 4, 5, 7, 8, 10, 11)

_DEGENERATE_EPS = 1e-8
_ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class Skeleton:
    """Joint tree with rest-pose bone offsets."""

    parents: tuple[int, ...]
    rest_offsets: np.ndarray
    foot_points: tuple[int, int, int, int]
    joint_names: tuple[str, ...] = ()
    joint_count: int = JOINT_COUNT

    def __post_init__(self):
        offsets = np.asarray(self.rest_offsets, dtype=np.float64)
        object.__setattr__(self, "rest_offsets", offsets)
        if self.joint_count != JOINT_COUNT or len(self.parents) != JOINT_COUNT:
            raise ValidationError(f"Skeleton must have {JOINT_COUNT} joints")
        if offsets.shape != (JOINT_COUNT, 3):
            raise ShapeMismatch(f"rest_offsets must be 24x3, got {offsets.shape}")
        roots = [j for j, p in enumerate(self.parents) if p == -1]
        if roots != [0]:
            raise ValidationError(f"Skeleton needs one root at index 0, got {roots}")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ValidationError(f"Joint {j} has parent {p}; parents must precede")
            if np.linalg.norm(offsets[j]) <= 0.0:
                raise ValidationError(f"Joint {j} has a zero-length rest offset")
        if len(self.foot_points) != 4:
            raise ValidationError("foot_points must list 4 joints")

    @classmethod
    def from_json(cls, path: str | Path) -> "Skeleton":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise FileFormatError(f"Skeleton file {path} is not valid JSON: {e}")
        return cls.from_dict(raw, source=str(path))

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<dict>") -> "Skeleton":
        missing = {"joint_count", "parents", "rest_offsets", "foot_points"} - set(raw)
        if missing:
            raise FileFormatError(f"Skeleton {source} lacks keys {sorted(missing)}")
        return cls(
            parents=tuple(int(p) for p in raw["parents"]),
            rest_offsets=np.asarray(raw["rest_offsets"], dtype=np.float64),
            foot_points=tuple(int(f) for f in raw["foot_points"]),
            joint_names=tuple(raw.get("joint_names", ())),
            joint_count=int(raw["joint_count"]),
        )

    @classmethod
    def default(cls) -> "Skeleton":
        """The canonical skeleton shipped with the package."""
        text = (
            resources.files("badm_dance").joinpath("data/skeleton_v1.json").read_text()
        )
        return cls.from_dict(json.loads(text), source="skeleton_v1.json")

    def to_dict(self) -> dict:
        return {
            "joint_count": self.joint_count,
            "joint_names": list(self.joint_names),
            "parents": list(self.parents),
            "rest_offsets": self.rest_offsets.tolist(),
            "foot_points": list(self.foot_points),
        }


@dataclass(frozen=True)
class PoseFrame:
    rotations: np.ndarray
    root_translation: np.ndarray
    contacts: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def pack(self) -> np.ndarray:
        rotations = np.asarray(self.rotations, dtype=np.float64)
        if rotations.shape != (JOINT_COUNT, 6):
            raise ShapeMismatch(f"rotations must be 24x6, got {rotations.shape}")
        return np.concatenate(
            [
                rotations.reshape(-1),
                np.asarray(self.root_translation, dtype=np.float64).reshape(3),
                np.asarray(self.contacts, dtype=np.float64).reshape(4),
            ]
        )

    @classmethod
    def unpack(cls, vector: np.ndarray) -> "PoseFrame":
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (FRAME_DIMS,):
            raise ShapeMismatch(f"Frame vector must have {FRAME_DIMS} values")
        return cls(
            rotations=vector[:ROTATION_DIMS].reshape(JOINT_COUNT, 6).copy(),
            root_translation=vector[ROOT_SLICE].copy(),
            contacts=vector[CONTACT_SLICE].copy(),
        )

    @classmethod
    def rest(cls, root_translation=(0.0, 0.0, 0.0)) -> "PoseFrame":
        identity = np.tile([1.0, 0.0, 0.0, 0.0, 1.0, 0.0], (JOINT_COUNT, 1))
        return cls(identity, np.asarray(root_translation, dtype=np.float64))


@dataclass(frozen=True)
class MotionSequence:
    """N frames at a fixed frame rate, stored as an N x 151 array."""

    fps: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != FRAME_DIMS:
            raise ShapeMismatch(f"Motion must be N x {FRAME_DIMS}, got {data.shape}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_frames(cls, fps: int, frames: list[PoseFrame]) -> "MotionSequence":
        return cls(fps, np.stack([f.pack() for f in frames]))

    @property
    def frames(self) -> list[PoseFrame]:
        return [PoseFrame.unpack(row) for row in self.data]

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def rotations(self) -> np.ndarray:
        return self.data[:, :ROTATION_DIMS].reshape(-1, JOINT_COUNT, 6)

    @property
    def root_translation(self) -> np.ndarray:
        return self.data[:, ROOT_SLICE]

    @property
    def contacts(self) -> np.ndarray:
        return self.data[:, CONTACT_SLICE]

    def with_contacts(self, contacts: np.ndarray) -> "MotionSequence":
        data = self.data.copy()
        data[:, CONTACT_SLICE] = contacts
        return MotionSequence(self.fps, data)


def rot6d_to_matrices(r6: np.ndarray) -> np.ndarray:
    """Vectorized Gram-Schmidt map from [..., 6] to [..., 3, 3] (columns b1, b2, b3)."""
    r6 = np.asarray(r6, dtype=np.float64)
    a1, a2 = r6[..., :3], r6[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 < _DEGENERATE_EPS):
        raise DegenerateRotation("First rotation column has (near) zero length")
    b1 = a1 / n1
    residual = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(residual, axis=-1, keepdims=True)
    if np.any(n2 < _DEGENERATE_EPS):
        raise DegenerateRotation("Second rotation column is parallel to the first")
    b2 = residual / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def rot6d_to_matrix(r6) -> np.ndarray:
    """Rotation matrix for one six-vector."""
    r6 = np.asarray(r6, dtype=np.float64)
    if r6.shape != (6,):
        raise ShapeMismatch(f"Expected a six-vector, got shape {r6.shape}")
    return rot6d_to_matrices(r6)


def matrix_to_rot6d(rotation) -> np.ndarray:
    """First two columns of proper rotation matrices, concatenated."""
    rotation = np.asarray(rotation, dtype=np.float64)
    if rotation.shape[-2:] != (3, 3):
        raise ShapeMismatch(f"Expected 3x3 matrices, got {rotation.shape}")
    gram = np.swapaxes(rotation, -1, -2) @ rotation
    orthonormal = np.allclose(gram, np.eye(3), rtol=0.0, atol=_ROTATION_TOL)
    proper = np.allclose(np.linalg.det(rotation), 1.0, rtol=0.0, atol=_ROTATION_TOL)
    if not (orthonormal and proper):
        raise NotARotation("Matrix is not orthonormal with determinant +1")
    return np.concatenate([rotation[..., :, 0], rotation[..., :, 1]], axis=-1)


def axis_angle_to_matrix(rotvec) -> np.ndarray:
    """Rotation matrices [..., 3, 3] for axis-angle vectors [..., 3]."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    flat = Rotation.from_rotvec(rotvec.reshape(-1, 3)).as_matrix()
    return flat.reshape(rotvec.shape[:-1] + (3, 3))


def fk_positions(skeleton: Skeleton, frames: np.ndarray) -> np.ndarray:
    """Joint positions [..., 24, 3] for flat frames [..., 151] (or [..., 147])."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] not in (POSE_DIMS, FRAME_DIMS):
        raise ShapeMismatch(f"Frames must end in {FRAME_DIMS} values: {frames.shape}")
    lead = frames.shape[:-1]
    r6 = frames[..., :ROTATION_DIMS].reshape(lead + (JOINT_COUNT, 6))
    local = rot6d_to_matrices(r6)
    root = frames[..., ROOT_SLICE]
    offsets = skeleton.rest_offsets
    glob = [local[..., 0, :, :]]
    positions = [root]
    for j in range(1, JOINT_COUNT):
        p = skeleton.parents[j]
        positions.append(positions[p] + glob[p] @ offsets[j])
        glob.append(glob[p] @ local[..., j, :, :])
    return np.stack(positions, axis=-2)


def forward_kinematics(skeleton: Skeleton, frame: PoseFrame) -> np.ndarray:
    """24 joint positions for a single pose."""
    return fk_positions(skeleton, frame.pack())


def motion_positions(motion: MotionSequence, skeleton: Skeleton) -> np.ndarray:
    """Joint positions [N, 24, 3] of a motion sequence."""
    return fk_positions(skeleton, motion.data)


def bone_lengths(positions: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Lengths of the 23 bones, one per non-root joint."""
    positions = np.asarray(positions, dtype=np.float64)
    children = np.arange(1, JOINT_COUNT)
    parents = np.asarray(skeleton.parents[1:])
    bones = positions[..., children, :] - positions[..., parents, :]
    return np.linalg.norm(bones, axis=-1)


def compute_contact_labels(
    motion: MotionSequence,
    skeleton: Skeleton,
    speed_threshold: float | None = None,
) -> np.ndarray:
    """Binary N x 4 labels, 1 where a foot point moves slower than the threshold.

    The threshold is in meters/second and defaults to 0.01 m per frame.
    """
    if motion.n_frames < 2:
        raise SequenceTooShort("Contact labels need at least 2 frames")
    if speed_threshold is None:
        speed_threshold = 0.01 * motion.fps
    feet = motion_positions(motion, skeleton)[:, list(skeleton.foot_points), :]
    speed = np.linalg.norm(np.diff(feet, axis=0), axis=-1) * motion.fps
    labels = (speed < speed_threshold).astype(np.float64)
    return np.concatenate([labels, labels[-1:]], axis=0)
