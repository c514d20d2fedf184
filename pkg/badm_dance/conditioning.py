"""Music and beat conditions: audio beats, procedural features, slicing, dropout."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.ndimage import maximum_filter1d, uniform_filter1d
from scipy.signal import get_window

from .errors import (
    AudioTooShort,
    BadProbability,
    BadSampleRate,
    FileFormatError,
    NotDivisible,
    ShapeMismatch,
)
from .rng import Rng

logger = logging.getLogger(__name__)

WINDOW_SIZE = 1024
LOCAL_RADIUS = 7
REFRACTORY_SECONDS = 0.25
RAMP_FREQUENCIES = (1, 2, 3, 5, 8)
ENVELOPE_LENGTH = 12
ENVELOPE_DECAY = 3.0


@dataclass(frozen=True)
class Condition:
    """Music features ``music`` (N x F) and beat one-hot ``beat`` (N).

    A null condition keeps its shapes but is read as zeros.
    """

    music: np.ndarray
    beat: np.ndarray
    is_null: bool = False

    def __post_init__(self):
        music = np.asarray(self.music, dtype=np.float64)
        beat = np.asarray(self.beat, dtype=np.float64)
        if music.ndim != 2 or beat.shape != (music.shape[0],):
            raise ShapeMismatch(f"Music {music.shape} and beat {beat.shape} disagree")
        object.__setattr__(self, "music", music)
        object.__setattr__(self, "beat", beat)

    @classmethod
    def empty(cls, n_frames: int, feature_dim: int) -> "Condition":
        return cls(np.zeros((n_frames, feature_dim)), np.zeros(n_frames), True)

    @property
    def n_frames(self) -> int:
        return self.music.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.music.shape[1]

    def null(self) -> "Condition":
        return Condition.empty(self.n_frames, self.feature_dim)

    def inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """The arrays the denoiser sees: zeros for the null condition."""
        if self.is_null:
            return np.zeros_like(self.music), np.zeros_like(self.beat)
        return self.music, self.beat


def partition_bounds(n_frames: int, k: int) -> list[tuple[int, int]]:
    """Start/end frames of ``k`` contiguous equal slices of ``n_frames``."""
    if k < 1 or n_frames % k:
        raise NotDivisible(f"{n_frames} frames cannot be split into {k} slices")
    size = n_frames // k
    return [(i * size, (i + 1) * size) for i in range(k)]


def slice_conditions(cond: Condition, k: int) -> list[Condition]:
    """Split a condition into K equal contiguous slices."""
    return [
        Condition(cond.music[a:b], cond.beat[a:b], cond.is_null)
        for a, b in partition_bounds(cond.n_frames, k)
    ]


def condition_dropout(cond: Condition, p: float, rng: Rng) -> Condition:
    """Replace music and beat jointly by the null condition with probability p."""
    if not 0.0 <= p <= 1.0:
        raise BadProbability(f"Dropout probability must be in [0, 1], got {p}")
    return cond.null() if rng.uniform() < p else cond


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Mono float samples in [-1, 1] and the sample rate of a PCM WAV file."""
    try:
        sample_rate, pcm = wavfile.read(str(path))
    except ValueError as e:
        raise FileFormatError(f"{path} is not a readable WAV file: {e}")
    if pcm.dtype == np.int16:
        pcm = pcm.astype(np.float64) / 32768.0
    elif pcm.dtype == np.int32:
        pcm = pcm.astype(np.float64) / 2147483648.0
    elif pcm.dtype == np.uint8:
        pcm = (pcm.astype(np.float64) - 128.0) / 128.0
    else:
        pcm = pcm.astype(np.float64)
    if pcm.ndim == 2:
        logger.warning(f"{path} has {pcm.shape[1]} channels; averaging to mono")
        pcm = pcm.mean(axis=1)
    return pcm, int(sample_rate)


def onset_envelope(pcm: np.ndarray, hop: int, n_frames: int) -> np.ndarray:
    """Positive spectral flux of Hann windows centered on ``i * hop``."""
    half = WINDOW_SIZE // 2
    needed = (n_frames - 1) * hop + WINDOW_SIZE
    padded = np.zeros(max(needed, half + len(pcm)))
    padded[half : half + len(pcm)] = pcm
    window = get_window("hann", WINDOW_SIZE)
    frames = np.stack(
        [padded[i * hop : i * hop + WINDOW_SIZE] for i in range(n_frames)]
    )
    spectra = np.abs(np.fft.rfft(frames * window, axis=1))
    flux = np.empty(n_frames)
    flux[0] = spectra[0].sum()
    flux[1:] = np.maximum(np.diff(spectra, axis=0), 0.0).sum(axis=1)
    return flux


def pick_peaks(envelope: np.ndarray, fps: int) -> np.ndarray:
    """Frames above local mean + std that are also local maxima, spaced >= 0.25 s."""
    size = 2 * LOCAL_RADIUS + 1
    mean = uniform_filter1d(envelope, size, mode="constant")
    sq_mean = uniform_filter1d(envelope * envelope, size, mode="constant")
    std = np.sqrt(np.maximum(sq_mean - mean * mean, 0.0))
    local_max = maximum_filter1d(envelope, size, mode="constant")
    candidates = np.flatnonzero((envelope > mean + std) & (envelope >= local_max))
    gap = math.ceil(REFRACTORY_SECONDS * fps)
    peaks: list[int] = []
    for frame in candidates:
        if not peaks or frame - peaks[-1] >= gap:
            peaks.append(int(frame))
    return np.asarray(peaks, dtype=np.int64)


def extract_beats(pcm, sample_rate: int, fps: int, n_frames: int) -> np.ndarray:
    """One-hot beat vector of length ``n_frames`` from mono audio."""
    if sample_rate <= 0 or fps <= 0 or sample_rate < fps:
        raise BadSampleRate(f"Sample rate {sample_rate} unusable at {fps} fps")
    pcm = np.asarray(pcm, dtype=np.float64).reshape(-1)
    if len(pcm) < n_frames * sample_rate / fps:
        raise AudioTooShort(
            f"{len(pcm)} samples cover less than {n_frames} frames at {fps} fps"
        )
    hop = round(sample_rate / fps)
    peaks = pick_peaks(onset_envelope(pcm, hop, n_frames), fps)
    beat = np.zeros(n_frames)
    beat[peaks] = 1.0
    logger.debug(f"Extracted {len(peaks)} beats from {len(pcm)} samples")
    return beat


def beats_to_vector(frames, n_frames: int) -> np.ndarray:
    """One-hot beat vector of length ``n_frames``."""
    beat = np.zeros(n_frames)
    frames = np.asarray(frames, dtype=np.int64)
    if np.any((frames < 0) | (frames >= n_frames)):
        raise ShapeMismatch(f"Beat frames must lie in [0, {n_frames})")
    beat[frames] = 1.0
    return beat


def vector_to_beats(beat) -> list[int]:
    """Frame indices where the beat vector is set."""
    return [int(i) for i in np.flatnonzero(np.asarray(beat) > 0.5)]


def beat_envelope(beat: np.ndarray) -> np.ndarray:
    """Beat spikes smeared forward by an exponential decay."""
    kernel = np.exp(-np.arange(ENVELOPE_LENGTH) / ENVELOPE_DECAY)
    return np.convolve(beat, kernel)[: len(beat)]


@dataclass(frozen=True)
class FeatureSpec:
    feature_dim: int
    seed: int
    beat: np.ndarray


def synth_features(spec: FeatureSpec) -> np.ndarray:
    """Procedural N x F music features correlated with the beat.

    A seeded projection of sine/cosine time ramps and the beat envelope. Channel
    0 is the envelope plus a small ramp mixture.
    """
    if spec.feature_dim < 1:
        raise ShapeMismatch(f"Feature width must be >= 1, got {spec.feature_dim}")
    beat = np.asarray(spec.beat, dtype=np.float64)
    n = len(beat)
    phase = 2.0 * np.pi * np.arange(n) / max(n, 1)
    ramps = []
    for f in RAMP_FREQUENCIES:
        ramps.extend([np.sin(f * phase), np.cos(f * phase)])
    basis = np.stack(ramps + [beat_envelope(beat)], axis=1)
    rng = Rng(spec.seed, stream=(7,))
    projection = rng.normal((basis.shape[1], spec.feature_dim))
    projection[:, 0] = 0.05 * projection[:, 0]
    projection[-1, 0] = 1.0
    return basis @ projection
