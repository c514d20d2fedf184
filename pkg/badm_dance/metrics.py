"""Evaluation metrics: kinetic/geometric features, DIV, Beat Align, PFC and FID.

Geometric predicates (thresholds in meters and degrees), evaluated per frame
and averaged:

    0  left toe higher than right toe by more than 0.05
    1  right toe higher than left toe by more than 0.05
    2  hands closer together than the shoulders
    3  left hand above left shoulder height minus 0.10
    4  right hand above right shoulder height minus 0.10
    5  left ankle in front of the left hip by more than 0.05
    6  right ankle in front of the right hip by more than 0.05
    7  left knee bent below 150 degrees
    8  right knee bent below 150 degrees
    9  left elbow bent below 150 degrees
    10 right elbow bent below 150 degrees
    11 head above both hands

On the shipped rest pose these give ``REST_GEOMETRIC``.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import pdist

from .errors import (
    DimMismatch,
    NeedTwoItems,
    NonPSD,
    NoMotionBeats,
    NoMusicBeats,
    SequenceTooShort,
)
from .motion import MotionSequence, Skeleton, motion_positions

logger = logging.getLogger(__name__)

HEIGHT_MARGIN = 0.05
REACH_MARGIN = 0.10
FORWARD_MARGIN = 0.05
BENT_DEGREES = 150.0
BA_SIGMA = 3.0
SMOOTHING_FRAMES = 5
PFC_EPS = 1e-8
PSD_TOLERANCE = 1e-6
# Eigenvalues below this fraction of the largest are rounding noise.
EIGEN_FLOOR = 1e-12
REST_GEOMETRIC = np.array([0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 1], dtype=np.float64)

# joint indices
L_HIP, R_HIP, L_KNEE, R_KNEE, L_ANKLE, R_ANKLE = 1, 2, 4, 5, 7, 8
L_TOE, R_TOE, HEAD = 10, 11, 15
L_SHOULDER, R_SHOULDER, L_ELBOW, R_ELBOW = 16, 17, 18, 19
L_WRIST, R_WRIST, L_HAND, R_HAND = 20, 21, 22, 23


def kinetic_features_from_positions(positions: np.ndarray, fps: int) -> np.ndarray:
    """Per-joint mean of 0.5 * |velocity|^2 for positions [N, J, 3]."""
    positions = np.asarray(positions, dtype=np.float64)
    if positions.shape[0] < 2:
        raise SequenceTooShort("Kinetic features need at least two frames")
    velocity = np.diff(positions, axis=0) * fps
    return 0.5 * np.sum(velocity * velocity, axis=-1).mean(axis=0)


def kinetic_features(motion: MotionSequence, skeleton: Skeleton) -> np.ndarray:
    """Per-joint kinetic features of one motion."""
    positions = motion_positions(motion, skeleton)
    return kinetic_features_from_positions(positions, motion.fps)


def _joint_angle(positions: np.ndarray, a: int, joint: int, b: int) -> np.ndarray:
    u = positions[:, a] - positions[:, joint]
    v = positions[:, b] - positions[:, joint]
    cos = np.sum(u * v, axis=-1) / (
        np.linalg.norm(u, axis=-1) * np.linalg.norm(v, axis=-1) + 1e-12
    )
    return np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))


def geometric_predicates(positions: np.ndarray) -> np.ndarray:
    """Boolean matrix [N, 12] of the documented relational tests."""
    p = np.asarray(positions, dtype=np.float64)
    y, z = p[..., 1], p[..., 2]
    hands = np.linalg.norm(p[:, L_HAND] - p[:, R_HAND], axis=-1)
    shoulders = np.linalg.norm(p[:, L_SHOULDER] - p[:, R_SHOULDER], axis=-1)
    tests = [
        y[:, L_TOE] - y[:, R_TOE] > HEIGHT_MARGIN,
        y[:, R_TOE] - y[:, L_TOE] > HEIGHT_MARGIN,
        hands < shoulders,
        y[:, L_HAND] > y[:, L_SHOULDER] - REACH_MARGIN,
        y[:, R_HAND] > y[:, R_SHOULDER] - REACH_MARGIN,
        z[:, L_ANKLE] > z[:, L_HIP] + FORWARD_MARGIN,
        z[:, R_ANKLE] > z[:, R_HIP] + FORWARD_MARGIN,
        _joint_angle(p, L_HIP, L_KNEE, L_ANKLE) < BENT_DEGREES,
        _joint_angle(p, R_HIP, R_KNEE, R_ANKLE) < BENT_DEGREES,
        _joint_angle(p, L_SHOULDER, L_ELBOW, L_WRIST) < BENT_DEGREES,
        _joint_angle(p, R_SHOULDER, R_ELBOW, R_WRIST) < BENT_DEGREES,
        (y[:, HEAD] > y[:, L_HAND]) & (y[:, HEAD] > y[:, R_HAND]),
    ]
    return np.stack(tests, axis=1)


def geometric_features(motion: MotionSequence, skeleton: Skeleton) -> np.ndarray:
    """Fraction of frames satisfying each geometric predicate."""
    positions = motion_positions(motion, skeleton)
    return geometric_predicates(positions).mean(axis=0)


def diversity(features: Sequence[np.ndarray]) -> float:
    """Mean Euclidean distance over all unordered pairs."""
    matrix = np.asarray([np.asarray(f, dtype=np.float64) for f in features])
    if len(matrix) < 2:
        raise NeedTwoItems(f"Diversity needs at least two items, got {len(matrix)}")
    return float(pdist(matrix).mean())


def kinematic_beats_from_speed(speed: np.ndarray) -> list[int]:
    """Plateau-centered strict local minima of the smoothed speed below its median.

    The moving average covers frames 2..N-3 only, so the first and last two
    frames are never beats.
    """
    speed = np.asarray(speed, dtype=np.float64)
    if len(speed) < SMOOTHING_FRAMES:
        return []
    offset = SMOOTHING_FRAMES // 2
    smoothed = np.convolve(speed, np.ones(SMOOTHING_FRAMES), mode="valid")
    smoothed /= SMOOTHING_FRAMES
    median = np.median(smoothed)
    beats = []
    i = 1
    while i < len(smoothed) - 1:
        end = i
        while end + 1 < len(smoothed) and smoothed[end + 1] == smoothed[i]:
            end += 1
        if (
            end + 1 < len(smoothed)
            and smoothed[i - 1] > smoothed[i]
            and smoothed[end + 1] > smoothed[i]
            and smoothed[i] < median
        ):
            beats.append((i + end) // 2 + offset)
        i = end + 1
    return beats


def motion_beats(motion: MotionSequence, skeleton: Skeleton) -> list[int]:
    """Frames where the mean joint speed has a pronounced local minimum."""
    if motion.n_frames < 3:
        raise SequenceTooShort("Motion beats need at least three frames")
    positions = motion_positions(motion, skeleton)
    velocity = np.gradient(positions, axis=0) * motion.fps
    speed = np.linalg.norm(velocity, axis=-1).mean(axis=-1)
    return kinematic_beats_from_speed(speed)


def beat_align_score(
    music_beats: Sequence[int], dance_beats: Sequence[int], sigma: float = BA_SIGMA
) -> float:
    """Mean over music beats of exp(-d^2 / (2 sigma^2)), d to the nearest dance beat."""
    if len(music_beats) == 0:
        raise NoMusicBeats("Beat Align needs at least one music beat")
    if len(dance_beats) == 0:
        raise NoMotionBeats("Beat Align needs at least one motion beat")
    music = np.asarray(music_beats, dtype=np.float64)[:, None]
    dance = np.asarray(dance_beats, dtype=np.float64)[None, :]
    nearest = np.min((music - dance) ** 2, axis=1)
    return float(np.mean(np.exp(-nearest / (2.0 * sigma * sigma))))


def beat_align(
    music_beats: Sequence[int],
    motion: MotionSequence,
    skeleton: Skeleton,
    sigma: float = BA_SIGMA,
) -> float:
    """Beat Align of a motion against the music beats."""
    return beat_align_score(music_beats, motion_beats(motion, skeleton), sigma)


def pfc_from_positions(root: np.ndarray, feet: np.ndarray, fps: int) -> float:
    """Physical foot contact score from root [N, 3] and foot points [N, 4, 3].

    Evaluated on interior frames 1..N-2 with central differences. Foot points
    are ordered left heel, left toe, right heel, right toe.
    """
    root = np.asarray(root, dtype=np.float64)
    feet = np.asarray(feet, dtype=np.float64)
    if root.shape[0] < 3:
        raise SequenceTooShort("PFC needs at least three frames")
    accel = (root[2:] - 2.0 * root[1:-1] + root[:-2]) * fps * fps
    accel_norm = np.linalg.norm(accel, axis=-1)
    foot_speed = np.linalg.norm(feet[2:] - feet[:-2], axis=-1) * fps / 2.0
    sides = [foot_speed[:, :2].mean(axis=1), foot_speed[:, 2:].mean(axis=1)]
    normalized = [s / s.max() if s.max() > 0 else np.zeros_like(s) for s in sides]
    scores = accel_norm * normalized[0] * normalized[1]
    return float(scores.sum() / (len(scores) * accel_norm.max() + PFC_EPS))


def pfc(motion: MotionSequence, skeleton: Skeleton) -> float:
    """Physical foot contact score; lower is more plausible."""
    positions = motion_positions(motion, skeleton)
    return pfc_from_positions(
        positions[:, 0], positions[:, list(skeleton.foot_points)], motion.fps
    )


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    cov: np.ndarray
    count: int


def fit_stats(features: Sequence[np.ndarray]) -> FeatureStats:
    """Mean and unbiased covariance of a set of feature vectors."""
    matrix = np.asarray([np.asarray(f, dtype=np.float64) for f in features])
    if len(matrix) < 2:
        raise NeedTwoItems(f"Feature statistics need two items, got {len(matrix)}")
    cov = np.atleast_2d(np.cov(matrix, rowvar=False, ddof=1))
    return FeatureStats(matrix.mean(axis=0), (cov + cov.T) / 2.0, len(matrix))


def _floor(values: np.ndarray) -> np.ndarray:
    cutoff = EIGEN_FLOOR * max(float(values.max()), 0.0)
    return np.where(values > cutoff, values, 0.0)


def _psd_sqrt(matrix: np.ndarray, what: str) -> np.ndarray:
    values, vectors = eigh((matrix + matrix.T) / 2.0)
    if values.min() < -PSD_TOLERANCE:
        raise NonPSD(f"{what} has eigenvalue {values.min():.3g}")
    return (vectors * np.sqrt(_floor(values))) @ vectors.T


def frechet_distance(a: FeatureStats, b: FeatureStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), never negative."""
    if a.mean.shape != b.mean.shape or a.cov.shape != b.cov.shape:
        raise DimMismatch(f"Feature dims differ: {a.mean.shape} vs {b.mean.shape}")
    root_a = _psd_sqrt(a.cov, "First covariance")
    middle = root_a @ b.cov @ root_a
    values = eigh((middle + middle.T) / 2.0, eigvals_only=True)
    if values.min() < -PSD_TOLERANCE:
        raise NonPSD(f"Covariance product has eigenvalue {values.min():.3g}")
    trace_sqrt = np.sqrt(_floor(values)).sum()
    diff = a.mean - b.mean
    distance = diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * trace_sqrt
    return float(max(distance, 0.0))


@dataclass(frozen=True)
class SequenceMetrics:
    kinetic: np.ndarray
    geometric: np.ndarray
    pfc: float
    beat_align: float | None = None
    beat_error: str | None = None


def sequence_metrics(
    motion: MotionSequence, skeleton: Skeleton, music_beats: Sequence[int] | None
) -> SequenceMetrics:
    """Every per-sequence quantity the evaluation report needs."""
    ba, error = None, None
    if music_beats is not None:
        try:
            ba = beat_align(music_beats, motion, skeleton)
        except (NoMusicBeats, NoMotionBeats) as e:
            error = str(e)
    return SequenceMetrics(
        kinetic=kinetic_features(motion, skeleton),
        geometric=geometric_features(motion, skeleton),
        pfc=pfc(motion, skeleton),
        beat_align=ba,
        beat_error=error,
    )


def _metric(report: dict, errors: dict, name: str, compute) -> None:
    try:
        report[name] = compute()
    except (NeedTwoItems, NonPSD, DimMismatch, NoMusicBeats, NoMotionBeats) as e:
        logger.warning(f"{name} skipped: {e}")
        report[name] = None
        errors[name] = str(e)


def evaluate_sets(
    generated: Sequence[MotionSequence],
    reference: Sequence[MotionSequence],
    skeleton: Skeleton,
    music_beats: Sequence[Sequence[int] | None] | None = None,
    jobs: int = 1,
) -> dict:
    """The evaluation report; a failing metric is reported, not fatal.

    Per-sequence features are extracted on ``jobs`` threads and merged in input
    order.
    """
    beats = list(music_beats) if music_beats is not None else [None] * len(generated)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        gen = list(
            pool.map(
                lambda pair: sequence_metrics(pair[0], skeleton, pair[1]),
                zip(generated, beats),
            )
        )
        ref = list(pool.map(lambda m: sequence_metrics(m, skeleton, None), reference))

    report: dict = {"n_generated": len(generated), "n_reference": len(reference)}
    errors: dict = {}
    _metric(report, errors, "div_k", lambda: diversity([m.kinetic for m in gen]))
    _metric(report, errors, "div_g", lambda: diversity([m.geometric for m in gen]))

    def mean_ba():
        scores = [m.beat_align for m in gen if m.beat_align is not None]
        if not scores:
            reasons = {m.beat_error for m in gen if m.beat_error} or {"no beat files"}
            raise NoMusicBeats("; ".join(sorted(reasons)))
        return float(np.mean(scores))

    _metric(report, errors, "beat_align", mean_ba)
    report["pfc_mean"] = float(np.mean([m.pfc for m in gen])) if gen else None
    _metric(
        report,
        errors,
        "fid_k",
        lambda: frechet_distance(
            fit_stats([m.kinetic for m in gen]), fit_stats([m.kinetic for m in ref])
        ),
    )
    _metric(
        report,
        errors,
        "fid_g",
        lambda: frechet_distance(
            fit_stats([m.geometric for m in gen]), fit_stats([m.geometric for m in ref])
        ),
    )
    if errors:
        report["errors"] = errors
    return report
