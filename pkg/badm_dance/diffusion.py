"""Noise schedules, forward noising, reverse samplers and masked editing.

The denoiser predicts the clean motion directly. A reverse step either re-noises
that prediction to the previous level (the full-step sampler) or moves along the
deterministic DDIM path. Classifier-free guidance blends a conditional and an
unconditional prediction at every step.
"""

from __future__ import annotations

import json
import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np
from tqdm import tqdm

from .errors import (
    BadChunkLength,
    BadT,
    FileFormatError,
    MaskOutOfRange,
    ShapeMismatch,
    StepOutOfRange,
    ValidationError,
)
from .motion import (
    CONTACT_SLICE,
    FRAME_DIMS,
    JOINT_COUNT,
    ROOT_SLICE,
    MotionSequence,
)
from .rng import Rng

logger = logging.getLogger(__name__)

COSINE_OFFSET = 0.008
TERMINAL_LEVEL = 1e-3


@dataclass(frozen=True)
class DiffusionSchedule:
    """Cumulative signal levels ``alpha_bar[0..T]`` with ``alpha_bar[0] == 1``."""

    T: int
    alpha_bar: np.ndarray
    kind: str = "cosine"

    def __post_init__(self):
        alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if alpha_bar.shape != (self.T + 1,):
            raise ShapeMismatch(f"alpha_bar needs {self.T + 1} values")
        object.__setattr__(self, "alpha_bar", alpha_bar)

    def check_step(self, t: int, low: int = 0) -> int:
        if not low <= t <= self.T:
            raise StepOutOfRange(f"Step {t} outside [{low}, {self.T}]")
        return int(t)


def make_schedule(T: int, kind: str = "cosine") -> DiffusionSchedule:
    """Cosine or linear schedule with ``alpha_bar[0] == 1`` and T + 1 levels."""
    if T < 1:
        raise BadT(f"T must be >= 1, got {T}")
    steps = np.arange(T + 1, dtype=np.float64)
    if kind == "cosine":
        s = COSINE_OFFSET
        f = np.cos(((steps / T + s) / (1 + s)) * math.pi / 2) ** 2
        alpha_bar = f / f[0]
    elif kind == "linear":
        betas = np.clip(np.linspace(0.1 / T, 20.0 / T, T), 0.0, 0.999)
        alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if alpha_bar[T] >= TERMINAL_LEVEL:
            alpha_bar[T] = min(1e-4, alpha_bar[T - 1] / 2)
    else:
        raise ValidationError(f"Unknown schedule kind {kind!r}")
    alpha_bar[0] = 1.0
    return DiffusionSchedule(T=T, alpha_bar=alpha_bar, kind=kind)


def q_sample(x, t: int, noise, schedule: DiffusionSchedule) -> np.ndarray:
    """Noise ``x`` to level ``t`` in one shot."""
    t = schedule.check_step(t)
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x.shape:
        raise ShapeMismatch(f"Noise {noise.shape} does not match x {x.shape}")
    a = schedule.alpha_bar[t]
    return math.sqrt(a) * x + math.sqrt(1.0 - a) * noise


def reverse_step(x_hat, t: int, schedule: DiffusionSchedule, rng: Rng) -> np.ndarray:
    """Re-noise the clean prediction ``x_hat`` to level ``t - 1``."""
    t = schedule.check_step(t, low=1)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if t == 1:
        return x_hat.copy()
    return q_sample(x_hat, t - 1, rng.normal(x_hat.shape), schedule)


def ddim_step(x_hat, z_t, t: int, t_prev: int, schedule: DiffusionSchedule):
    """Deterministic (eta = 0) DDIM move from level ``t`` to ``t_prev``."""
    schedule.check_step(t, low=1)
    schedule.check_step(t_prev)
    if t_prev >= t:
        raise StepOutOfRange(f"t_prev={t_prev} must be below t={t}")
    x_hat = np.asarray(x_hat, dtype=np.float64)
    z_t = np.asarray(z_t, dtype=np.float64)
    if x_hat.shape != z_t.shape:
        raise ShapeMismatch(f"x_hat {x_hat.shape} and z_t {z_t.shape} differ")
    if t_prev == 0:
        return x_hat.copy()
    a_t, a_prev = schedule.alpha_bar[t], schedule.alpha_bar[t_prev]
    eps = (z_t - math.sqrt(a_t) * x_hat) / math.sqrt(1.0 - a_t)
    return math.sqrt(a_prev) * x_hat + math.sqrt(1.0 - a_prev) * eps


def cfg_blend(x_cond, x_uncond, w: float) -> np.ndarray:
    """Classifier-free guidance ``w * x_cond + (1 - w) * x_uncond``."""
    x_cond = np.asarray(x_cond, dtype=np.float64)
    x_uncond = np.asarray(x_uncond, dtype=np.float64)
    if x_cond.shape != x_uncond.shape:
        raise ShapeMismatch(f"{x_cond.shape} vs {x_uncond.shape}")
    if w == 1.0:
        return x_cond.copy()
    return w * x_cond + (1.0 - w) * x_uncond


def ddim_timesteps(T: int, steps: int) -> list[tuple[int, int]]:
    """Uniform-stride (t, t_prev) pairs from T down to 0."""
    if not 1 <= steps <= T:
        raise ValidationError(f"ddim_steps must be in [1, {T}], got {steps}")
    levels = [int(math.floor(T * (steps - i) / steps + 0.5)) for i in range(steps + 1)]
    return list(zip(levels[:-1], levels[1:]))


def _dims_for_joints(joints: Sequence[int]) -> list[int]:
    dims = []
    for j in joints:
        dims.extend(range(6 * j, 6 * j + 6))
    return dims


def build_mask(
    n_frames: int,
    frames: Sequence[Sequence[int]] | None = None,
    joints: Sequence[int] | None = None,
    include_root: bool = True,
    include_contacts: bool = True,
) -> np.ndarray:
    """Expand a region description to an N x 151 binary mask.

    ``frames`` holds half-open ``[start, end)`` ranges and ``joints`` joint
    indices; ``None`` selects everything and an empty list nothing.
    """
    frame_sel = np.zeros(n_frames, dtype=bool)
    if frames is None:
        frame_sel[:] = True
    else:
        for span in frames:
            if len(span) != 2:
                raise MaskOutOfRange(f"Frame range {span} must be [start, end)")
            start, end = int(span[0]), int(span[1])
            if not 0 <= start < end <= n_frames:
                raise MaskOutOfRange(
                    f"Frame range [{start}, {end}) outside 0..{n_frames}"
                )
            frame_sel[start:end] = True
    joint_list = range(JOINT_COUNT) if joints is None else [int(j) for j in joints]
    for j in joint_list:
        if not 0 <= j < JOINT_COUNT:
            raise MaskOutOfRange(f"Joint {j} outside 0..{JOINT_COUNT - 1}")
    dim_sel = np.zeros(FRAME_DIMS, dtype=bool)
    dims = _dims_for_joints(joint_list)
    if dims:
        dim_sel[dims] = True
    if include_root:
        dim_sel[ROOT_SLICE] = True
    if include_contacts:
        dim_sel[CONTACT_SLICE] = True
    return np.outer(frame_sel, dim_sel).astype(np.float64)


@dataclass(frozen=True)
class EditMask:
    """Binary region ``m`` whose entries are held to ``x_known`` while sampling."""

    m: np.ndarray
    x_known: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        x_known = np.asarray(self.x_known, dtype=np.float64)
        if m.shape != x_known.shape or m.ndim != 2 or m.shape[1] != FRAME_DIMS:
            raise ShapeMismatch(f"Mask {m.shape} and known motion {x_known.shape}")
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ValidationError("Edit mask entries must be 0 or 1")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "x_known", x_known)

    @classmethod
    def from_spec(cls, spec: dict, x_known) -> "EditMask":
        x_known = np.asarray(x_known, dtype=np.float64)
        unknown = set(spec) - {"frames", "joints", "include_root", "include_contacts"}
        if unknown:
            raise FileFormatError(f"Unknown edit mask keys {sorted(unknown)}")
        m = build_mask(
            x_known.shape[0],
            frames=spec.get("frames"),
            joints=spec.get("joints"),
            include_root=bool(spec.get("include_root", True)),
            include_contacts=bool(spec.get("include_contacts", True)),
        )
        return cls(m=m, x_known=x_known)

    @classmethod
    def from_json(cls, path: str | Path, x_known) -> "EditMask":
        """Read a mask file; ``{}`` selects every frame and joint."""
        try:
            spec = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise FileFormatError(f"Edit mask {path} is not valid JSON: {e}")
        if not isinstance(spec, dict):
            raise FileFormatError(f"Edit mask {path} must be a JSON object")
        return cls.from_spec(spec, x_known)

    @classmethod
    def in_between(cls, x_known, head: int, tail: int) -> "EditMask":
        """Keep the first ``head`` and last ``tail`` frames; generate the middle."""
        x_known = np.asarray(x_known, dtype=np.float64)
        n = x_known.shape[0]
        if head < 0 or tail < 0 or head + tail > n:
            raise MaskOutOfRange(f"Cannot keep {head}+{tail} frames of {n}")
        frames = [span for span in ([0, head], [n - tail, n]) if span[1] > span[0]]
        return cls(build_mask(n, frames=frames), x_known)

    @classmethod
    def body_part(
        cls, x_known, joints: Sequence[int], include_root: bool = True
    ) -> "EditMask":
        """Keep the listed joints on every frame; regenerate the rest of the body."""
        x_known = np.asarray(x_known, dtype=np.float64)
        m = build_mask(
            x_known.shape[0],
            joints=joints,
            include_root=include_root,
            include_contacts=include_root,
        )
        return cls(m, x_known)


def _impose_known(z, mask: EditMask, level: int, schedule: DiffusionSchedule, rng):
    z = np.asarray(z, dtype=np.float64)
    if z.shape != mask.m.shape:
        raise ShapeMismatch(f"Sample {z.shape} does not match mask {mask.m.shape}")
    if level == 0:
        known = mask.x_known
    else:
        known = q_sample(mask.x_known, level, rng.normal(z.shape), schedule)
    return mask.m * known + (1.0 - mask.m) * z


def apply_edit_mask(z_prev, mask: EditMask, t: int, schedule: DiffusionSchedule, rng):
    """Overwrite the masked part of ``z_prev`` with ``x_known`` noised to t - 1."""
    t = schedule.check_step(t, low=1)
    return _impose_known(z_prev, mask, t - 1, schedule, rng)


class ConditionLike(Protocol):
    n_frames: int

    def null(self) -> "ConditionLike": ...


Model = Callable[[np.ndarray, int, ConditionLike], np.ndarray]


@dataclass(frozen=True)
class SamplerConfig:
    guidance_weight: float = 2.0
    ddim_steps: int = 50
    seed: int = 0
    edit_mask: EditMask | None = None
    progress: bool = False
    stream: tuple[int, ...] = ()


def sample(
    model: Model,
    condition: ConditionLike,
    schedule: DiffusionSchedule,
    cfg: SamplerConfig,
    fps: int = 30,
) -> MotionSequence:
    """Run the reverse process from ``z_T ~ N(0, I)`` to a motion sequence.

    ``model(z_t, t, condition)`` returns the clean-motion prediction. With
    ``ddim_steps == T`` every step re-noises the prediction; otherwise the
    deterministic DDIM path is followed on a uniform stride.
    """
    rng = Rng(cfg.seed, stream=(1, *cfg.stream))
    shape = (condition.n_frames, FRAME_DIMS)
    z = rng.spawn(0).normal(shape)
    full_steps = cfg.ddim_steps == schedule.T
    steps = ddim_timesteps(schedule.T, cfg.ddim_steps)
    unconditional = condition.null() if cfg.guidance_weight != 1.0 else None
    logger.debug(
        f"Sampling {shape[0]} frames over {len(steps)} steps, "
        f"w={cfg.guidance_weight}, full_steps={full_steps}"
    )
    for i, (t, t_prev) in enumerate(
        tqdm(steps, desc="sampling", disable=not cfg.progress, leave=False)
    ):
        step_rng = rng.spawn(i + 1)
        x_hat = np.asarray(model(z, t, condition), dtype=np.float64)
        if unconditional is not None:
            x_hat = cfg_blend(x_hat, model(z, t, unconditional), cfg.guidance_weight)
        if full_steps:
            z = reverse_step(x_hat, t, schedule, step_rng.spawn(0))
        else:
            z = ddim_step(x_hat, z, t, t_prev, schedule)
        if cfg.edit_mask is not None:
            z = _impose_known(z, cfg.edit_mask, t_prev, schedule, step_rng.spawn(1))
    return MotionSequence(fps, z)


def blend_ramp(n_frames: int) -> np.ndarray:
    """Incoming-chunk weights over an overlap of N/2 frames, 0 up to 1."""
    if n_frames < 4 or n_frames % 2:
        raise BadChunkLength(f"Chunk length must be even and >= 4, got {n_frames}")
    half = n_frames // 2
    return np.arange(half, dtype=np.float64) / (half - 1)


def stitch_weights(n_frames: int, n_chunks: int) -> np.ndarray:
    """Per-chunk weights over the stitched timeline, shape [chunks, total]."""
    ramp = blend_ramp(n_frames)
    half = n_frames // 2
    total = n_frames + (n_chunks - 1) * half
    weights = np.zeros((n_chunks, total))
    for c in range(n_chunks):
        w = np.ones(n_frames)
        if c > 0:
            w[:half] = ramp
        if c < n_chunks - 1:
            w[half:] = 1.0 - ramp
        weights[c, c * half : c * half + n_frames] = w
    return weights


def long_form_stitch(chunks: Sequence[MotionSequence]) -> MotionSequence:
    """Blend chunks generated at stride N/2 into one sequence.

    Each overlap moves linearly from the outgoing chunk to the incoming one.
    """
    if not chunks:
        raise BadChunkLength("Need at least one chunk")
    n = chunks[0].n_frames
    if any(c.n_frames != n for c in chunks):
        raise BadChunkLength("All chunks must have the same length")
    ramp = blend_ramp(n)[:, None]
    half = n // 2
    out = chunks[0].data.copy()
    for chunk in chunks[1:]:
        left = out[-half:]
        blended = left + ramp * (chunk.data[:half] - left)
        out = np.concatenate([out[:-half], blended, chunk.data[half:]], axis=0)
    return MotionSequence(chunks[0].fps, out)


def seam_jump_ratio(
    chunks: Sequence[MotionSequence], stitched: MotionSequence
) -> float:
    """Largest frame-to-frame jump inside the overlaps over the largest in a chunk.

    Jumps are Euclidean norms of consecutive-frame differences. The overlap
    transitions include the frame entering and the frame leaving each overlap.
    """
    half = chunks[0].n_frames // 2
    jumps = np.linalg.norm(np.diff(stitched.data, axis=0), axis=1)
    seams = [
        jumps[max(c * half - 1, 0) : c * half + half]
        for c in range(1, len(chunks))
    ]
    seam = max((float(s.max()) for s in seams if len(s)), default=0.0)
    inner = max(
        float(np.linalg.norm(np.diff(c.data, axis=0), axis=1).max()) for c in chunks
    )
    if inner == 0.0:
        return 0.0 if seam == 0.0 else math.inf
    return seam / inner
