"""Tests for badm_dance.losses module."""

import numpy as np
import pytest

from badm_dance.autograd import Tensor, grad_check
from badm_dance.errors import SequenceTooShort, ShapeMismatch, ValidationError
from badm_dance.losses import (
    LossWeights,
    fk_tensor,
    loss_foot,
    loss_pos,
    loss_simple,
    loss_vel,
    rot6d_to_matrices_t,
    total_loss,
)
from badm_dance.motion import fk_positions, rot6d_to_matrices

from .conftest import random_frames


def test_differentiable_fk_matches_numpy(skeleton):
    """Test tensor FK agrees with the numpy forward kinematics."""
    frames = random_frames(3, seed=1)
    np.testing.assert_allclose(
        fk_tensor(skeleton, frames).data, fk_positions(skeleton, frames), atol=1e-9
    )
    r6 = frames[:, :6]
    np.testing.assert_allclose(
        rot6d_to_matrices_t(Tensor(r6)).data, rot6d_to_matrices(r6), atol=1e-9
    )


def test_identical_motion_has_zero_loss(rest_motion, skeleton):
    """Test a perfect prediction of a motionless pose costs nothing."""
    x = rest_motion.data
    loss, parts = total_loss(x, Tensor(x), LossWeights(), skeleton)
    assert loss.data == pytest.approx(0.0, abs=1e-20)
    assert set(parts) == {"L_simple", "L_pos", "L_vel", "L_foot", "total"}


def test_loss_simple_is_mean_square():
    """Test the reconstruction loss averages squared differences."""
    x = np.zeros((2, 151))
    x_hat = np.zeros((2, 151))
    x_hat[0, 0] = 2.0
    assert loss_simple(x, Tensor(x_hat)).data == pytest.approx(4.0 / 302)


def test_loss_pos_root_shift(rest_motion, skeleton):
    """Test shifting the root moves all 24 joints by the same offset."""
    shifted = rest_motion.data.copy()
    shifted[:, 144] += 0.1
    value = loss_pos(rest_motion.data, Tensor(shifted), skeleton).data
    assert value == pytest.approx(24 * 0.01)


def test_loss_vel_ignores_constant_offset(rest_motion):
    """Test velocity loss sees drift but not a constant offset."""
    x = rest_motion.data
    offset = x + 0.3
    assert loss_vel(x, Tensor(offset)).data == pytest.approx(0.0, abs=1e-24)
    drifting = x.copy()
    drifting[:, 144] += 0.02 * np.arange(len(x))
    assert loss_vel(x, Tensor(drifting)).data == pytest.approx(0.02**2)


@pytest.mark.parametrize("contact,expected", [(1.0, 4.0), (0.5, 1.0), (0.0, 0.0)])
def test_loss_foot_penalizes_sliding_contacts(rest_motion, skeleton, contact, expected):
    """Test sliding feet cost in proportion to the predicted contact squared."""
    x_hat = rest_motion.data.copy()
    x_hat[:, 146] += 0.05 * np.arange(len(x_hat))
    x_hat[:, 147:] = contact
    value = loss_foot(Tensor(x_hat), skeleton).data
    assert value == pytest.approx(expected * 0.05**2)


def test_losses_accept_batches(rest_motion, skeleton):
    """Test a batch of identical items gives the single-item values."""
    x = rest_motion.data
    x_hat = x.copy()
    x_hat[:, 144] += 0.1
    _, single = total_loss(x, Tensor(x_hat), LossWeights(), skeleton)
    _, batched = total_loss(
        np.stack([x, x]), Tensor(np.stack([x_hat, x_hat])), LossWeights(), skeleton
    )
    for name, value in single.items():
        assert batched[name] == pytest.approx(value)


def test_total_loss_weights(rest_motion, skeleton):
    """Test the total is L_simple plus the weighted auxiliary terms."""
    x = rest_motion.data
    x_hat = random_frames(len(x), seed=5)
    _, parts = total_loss(x, Tensor(x_hat), LossWeights(2.0, 0.5, 0.25), skeleton)
    expected = (
        parts["L_simple"]
        + 2.0 * parts["L_pos"]
        + 0.5 * parts["L_vel"]
        + 0.25 * parts["L_foot"]
    )
    assert parts["total"] == pytest.approx(expected)


def test_loss_errors(skeleton):
    """Test mismatched shapes, short sequences and negative weights."""
    with pytest.raises(ShapeMismatch):
        loss_simple(np.zeros((3, 151)), Tensor(np.zeros((4, 151))))
    with pytest.raises(SequenceTooShort):
        loss_vel(np.zeros((1, 151)), Tensor(np.zeros((1, 151))))
    with pytest.raises(SequenceTooShort):
        loss_foot(Tensor(random_frames(1)), skeleton)
    with pytest.raises(ValidationError):
        LossWeights(lambda_foot=-1.0)


@pytest.mark.slow
def test_total_loss_gradient(skeleton):
    """Test the combined loss gradient against finite differences."""
    x = random_frames(2, seed=6)
    base = random_frames(2, seed=7)

    def f(x_hat):
        loss, _ = total_loss(x, x_hat.reshape(2, 151), LossWeights(), skeleton)
        return loss

    assert grad_check(f, base.reshape(-1)) < 1e-5
