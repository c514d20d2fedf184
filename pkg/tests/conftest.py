"""Shared fixtures for the badm-dance test suite."""

import numpy as np
import pytest

from badm_dance.denoiser import DenoiserConfig
from badm_dance.motion import FRAME_DIMS, MotionSequence, PoseFrame, Skeleton


@pytest.fixture
def skeleton():
    return Skeleton.default()


@pytest.fixture
def rest_motion():
    """Thirty frames of the rest pose with the pelvis at standing height."""
    frame = PoseFrame.rest(root_translation=(0.0, 0.92, 0.0)).pack()
    return MotionSequence(30, np.tile(frame, (30, 1)))


@pytest.fixture
def tiny_denoiser_config():
    """A denoiser small enough to run many forward passes in a test."""
    return DenoiserConfig(
        num_slices=2,
        hidden_dim=16,
        heads=2,
        decoder_layers=1,
        conv_layers=2,
        kernel_size=3,
        feature_dim=5,
    )


def random_frames(n, seed=0):
    """N x 151 frames with valid (non-degenerate) random rotations."""
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(n, FRAME_DIMS))
    data[:, 147:] = rng.uniform(size=(n, 4))
    return data
