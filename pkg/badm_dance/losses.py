"""Training objectives: reconstruction, joint positions, velocity and foot contact.

All losses accept a single sequence [N, 151] or a batch [B, N, 151] and average
over the batch. Predictions are autograd tensors; targets may be plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autograd import Tensor, as_tensor, concat, stack
from .errors import SequenceTooShort, ShapeMismatch, ValidationError
from .motion import (
    CONTACT_SLICE,
    JOINT_COUNT,
    ROOT_SLICE,
    ROTATION_DIMS,
    Skeleton,
)

_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_pos: float = 1.0
    lambda_vel: float = 1.0
    lambda_foot: float = 0.5

    def __post_init__(self):
        for name in ("lambda_pos", "lambda_vel", "lambda_foot"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")


def _check_pair(x: Tensor, x_hat: Tensor):
    if x.shape != x_hat.shape:
        raise ShapeMismatch(f"Target {x.shape} and prediction {x_hat.shape} differ")


def _normalize(v: Tensor) -> Tensor:
    return v / ((v * v).sum(axis=-1, keepdims=True) + _NORM_FLOOR).sqrt()


def _cross(a: Tensor, b: Tensor) -> Tensor:
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return concat([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def rot6d_to_matrices_t(r6: Tensor) -> Tensor:
    """Differentiable Gram-Schmidt, [..., 6] -> [..., 3, 3]."""
    a1, a2 = r6[..., 0:3], r6[..., 3:6]
    b1 = _normalize(a1)
    b2 = _normalize(a2 - (b1 * a2).sum(axis=-1, keepdims=True) * b1)
    b3 = _cross(b1, b2)
    return stack([b1, b2, b3], axis=-1)


def fk_tensor(skeleton: Skeleton, frames) -> Tensor:
    """Differentiable joint positions [..., 24, 3] for frames [..., 151]."""
    frames = as_tensor(frames)
    lead = frames.shape[:-1]
    r6 = frames[..., :ROTATION_DIMS].reshape(lead + (JOINT_COUNT, 6))
    local = rot6d_to_matrices_t(r6)
    offsets = skeleton.rest_offsets
    glob = [local[..., 0, :, :]]
    positions = [frames[..., ROOT_SLICE]]
    for j in range(1, JOINT_COUNT):
        p = skeleton.parents[j]
        positions.append(positions[p] + (glob[p] * offsets[j]).sum(axis=-1))
        glob.append(glob[p] @ local[..., j, :, :])
    return stack(positions, axis=-2)


def loss_simple(x, x_hat) -> Tensor:
    """Mean squared error over every frame value."""
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    _check_pair(x, x_hat)
    diff = x - x_hat
    return (diff * diff).mean()


def loss_pos(x, x_hat, skeleton: Skeleton) -> Tensor:
    """Squared joint-position error after forward kinematics."""
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    _check_pair(x, x_hat)
    if x.shape[-2] < 1:
        raise SequenceTooShort("Position loss needs at least one frame")
    diff = fk_tensor(skeleton, x) - fk_tensor(skeleton, x_hat)
    return (diff * diff).sum(axis=-1).sum(axis=-1).mean()


def _deltas(x: Tensor) -> Tensor:
    return x[..., 1:, :] - x[..., :-1, :]


def loss_vel(x, x_hat) -> Tensor:
    """Squared error of frame-to-frame differences."""
    x, x_hat = as_tensor(x), as_tensor(x_hat)
    _check_pair(x, x_hat)
    if x.shape[-2] < 2:
        raise SequenceTooShort("Velocity loss needs at least two frames")
    diff = _deltas(x) - _deltas(x_hat)
    return (diff * diff).sum(axis=-1).mean()


def loss_foot(x_hat, skeleton: Skeleton) -> Tensor:
    """Foot-point displacement between frames, weighted by predicted contact."""
    x_hat = as_tensor(x_hat)
    if x_hat.shape[-2] < 2:
        raise SequenceTooShort("Foot contact loss needs at least two frames")
    positions = fk_tensor(skeleton, x_hat)
    feet = stack([positions[..., j, :] for j in skeleton.foot_points], axis=-2)
    moved = feet[..., 1:, :, :] - feet[..., :-1, :, :]
    contact = x_hat[..., :-1, CONTACT_SLICE]
    weighted = moved * contact.reshape(contact.shape + (1,))
    return (weighted * weighted).sum(axis=-1).sum(axis=-1).mean()


def total_loss(
    x, x_hat, weights: LossWeights, skeleton: Skeleton
) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the four losses and the value of each part."""
    parts = {
        "L_simple": loss_simple(x, x_hat),
        "L_pos": loss_pos(x, x_hat, skeleton),
        "L_vel": loss_vel(x, x_hat),
        "L_foot": loss_foot(x_hat, skeleton),
    }
    total = (
        parts["L_simple"]
        + parts["L_pos"] * weights.lambda_pos
        + parts["L_vel"] * weights.lambda_vel
        + parts["L_foot"] * weights.lambda_foot
    )
    breakdown = {name: float(value.data) for name, value in parts.items()}
    breakdown["total"] = float(total.data)
    return total, breakdown
