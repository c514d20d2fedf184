"""Synthetic beat-locked dance corpus and the dataset directory layout.

Every item picks a tempo and phase, then moves so that joint speed drops to zero
on each beat: upper-body joints swing back and forth between beats, the legs
lift alternately and the root dips between beats. Files per item::

    item_0000.motion.json   item_0000.features.json   item_0000.beats.json
"""

from __future__ import annotations

import logging
import re
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .conditioning import Condition, FeatureSpec, beats_to_vector, synth_features
from .errors import BadSpec, EmptyDataset, ShapeMismatch
from .formats import (
    BeatFile,
    load_beats,
    load_features,
    load_motion,
    save_beats,
    save_features,
    save_motion,
)
from .motion import (
    JOINT_COUNT,
    LOWER_BODY_JOINTS,
    MotionSequence,
    PoseFrame,
    Skeleton,
    axis_angle_to_matrix,
    compute_contact_labels,
    matrix_to_rot6d,
)
from .rng import Rng

logger = logging.getLogger(__name__)

STANDING_HEIGHT = 0.92
DIP_DEPTH = 0.01
AMPLITUDE_RANGE = (0.15, 0.35)
HIP_SWING = 0.5
KNEE_BEND = 0.9
# left hip, left knee, right hip, right knee
LEG_JOINTS = (1, 4, 2, 5)

_ITEM_PATTERN = re.compile(r"item_(\d+)\.motion\.json$")


@dataclass(frozen=True)
class CorpusSpec:
    count: int = 64
    n_frames: int = 150
    fps: int = 30
    bpm_range: tuple[float, float] = (100.0, 140.0)
    seed: int = 0
    feature_dim: int = 35

    def validate(self) -> "CorpusSpec":
        low, high = self.bpm_range
        if self.count < 1:
            raise BadSpec(f"count must be >= 1, got {self.count}")
        if self.n_frames < 3 or self.fps < 1 or self.feature_dim < 1:
            raise BadSpec("n_frames must be >= 3, fps and feature_dim >= 1")
        if not 0 < low <= high:
            raise BadSpec(f"Invalid BPM range {self.bpm_range}")
        return self


@dataclass(frozen=True)
class CorpusItem:
    motion: MotionSequence
    condition: Condition
    beats: list[int]
    bpm: float = 0.0


def _axis_angles(axis: np.ndarray, angle: np.ndarray) -> np.ndarray:
    return axis_angle_to_matrix(angle[:, None] * axis[None, :])


def synth_item(spec: CorpusSpec, index: int, skeleton: Skeleton) -> CorpusItem:
    """One seeded beat-locked item; the same spec and index give the same item."""
    rng = Rng(spec.seed, stream=(11,)).spawn(index)
    n, fps = spec.n_frames, spec.fps
    low, high = spec.bpm_range
    bpm = low + (high - low) * float(rng.uniform())
    period = 60.0 * fps / bpm
    phase = period * float(rng.uniform())
    frames = np.arange(n, dtype=np.float64)
    s = (frames - phase) / period

    rotations = np.tile(np.eye(3), (n, JOINT_COUNT, 1, 1))
    swing = np.cos(np.pi * s)
    for j in range(JOINT_COUNT):
        if j in LOWER_BODY_JOINTS:
            continue
        amp_low, amp_high = AMPLITUDE_RANGE
        amplitude = amp_low + (amp_high - amp_low) * float(rng.uniform())
        axis = rng.normal(3)
        axis /= np.linalg.norm(axis)
        rotations[:, j] = _axis_angles(axis, amplitude * swing)
    x_axis = np.array([1.0, 0.0, 0.0])
    for gate, (hip, knee) in (
        (np.maximum(swing, 0.0), LEG_JOINTS[:2]),
        (np.maximum(-swing, 0.0), LEG_JOINTS[2:]),
    ):
        rotations[:, hip] = _axis_angles(x_axis, -HIP_SWING * gate)
        rotations[:, knee] = _axis_angles(x_axis, KNEE_BEND * gate)

    root = np.zeros((n, 3))
    root[:, 1] = STANDING_HEIGHT - DIP_DEPTH * (1.0 - np.cos(2.0 * np.pi * s)) / 2.0
    r6 = matrix_to_rot6d(rotations)
    motion = MotionSequence.from_frames(
        fps, [PoseFrame(r6[i], root[i]) for i in range(n)]
    )
    motion = motion.with_contacts(compute_contact_labels(motion, skeleton))

    first = int(np.ceil(-phase / period))
    beats = sorted(
        {
            int(round(phase + k * period))
            for k in range(first, int((n - phase) / period) + 2)
            if 0 <= round(phase + k * period) < n
        }
    )
    beat = beats_to_vector(beats, n)
    music = synth_features(
        FeatureSpec(spec.feature_dim, seed=spec.seed * 100003 + index, beat=beat)
    )
    return CorpusItem(motion, Condition(music, beat), beats, bpm)


def make_synthetic_corpus(
    spec: CorpusSpec, skeleton: Skeleton | None = None
) -> list[CorpusItem]:
    """Synthesize ``spec.count`` items."""
    spec.validate()
    skeleton = skeleton or Skeleton.default()
    items = [synth_item(spec, i, skeleton) for i in range(spec.count)]
    logger.info(f"Synthesized {len(items)} items of {spec.n_frames} frames")
    return items


def item_paths(directory: Path, index: int) -> tuple[Path, Path, Path]:
    """Motion, feature and beat file paths of item ``index``."""
    stem = directory / f"item_{index:04d}"
    return (
        stem.with_name(stem.name + ".motion.json"),
        stem.with_name(stem.name + ".features.json"),
        stem.with_name(stem.name + ".beats.json"),
    )


def write_corpus(directory, items: list[CorpusItem], prov: dict) -> list[Path]:
    """Write every item as a motion, feature and beat file triple."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for i, item in enumerate(items):
        motion_path, feature_path, beat_path = item_paths(directory, i)
        fps, n = item.motion.fps, item.motion.n_frames
        written.append(save_motion(motion_path, item.motion, prov))
        written.append(save_features(feature_path, fps, item.condition.music, prov))
        written.append(save_beats(beat_path, BeatFile(fps, n, item.beats), prov))
    logger.info(f"Wrote {len(items)} items to {directory}")
    return written


def load_corpus(directory) -> list[CorpusItem]:
    """Load every ``item_XXXX`` triple in index order."""
    directory = Path(directory)
    indices = sorted(
        int(m.group(1))
        for p in directory.glob("item_*.motion.json")
        if (m := _ITEM_PATTERN.search(p.name))
    )
    if not indices:
        raise EmptyDataset(f"No item_XXXX.motion.json files in {directory}")
    items = []
    for i in indices:
        motion_path, feature_path, beat_path = item_paths(directory, i)
        motion = load_motion(motion_path)
        features = load_features(feature_path)
        beat_file = load_beats(beat_path)
        n = motion.n_frames
        if features.data.shape[0] != n or beat_file.frames != n:
            raise ShapeMismatch(
                f"{feature_path.name} or {beat_path.name} disagrees with "
                f"{motion_path.name} on frame count"
            )
        beat = beats_to_vector(beat_file.beats, motion.n_frames)
        condition = Condition(features.data, beat)
        items.append(CorpusItem(motion, condition, beat_file.beats))
    return items


def spec_dict(spec: CorpusSpec) -> dict:
    """The spec as a JSON-ready dict for provenance blocks."""
    raw = asdict(spec)
    raw["bpm_range"] = list(spec.bpm_range)
    return raw
