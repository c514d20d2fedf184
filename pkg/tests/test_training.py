"""Tests for badm_dance.training module."""

import math

import numpy as np
import pytest

from badm_dance.autograd import Tensor
from badm_dance.config import RunConfig
from badm_dance.corpus import CorpusSpec, make_synthetic_corpus
from badm_dance.denoiser import init_params
from badm_dance.diffusion import make_schedule
from badm_dance.errors import EmptyDataset, NumericFailure, ShapeMismatch
from badm_dance.formats import provenance
from badm_dance.motion import Skeleton
from badm_dance.optim import OptimizerState
from badm_dance.rng import Rng
from badm_dance.training import (
    LOSS_COLUMNS,
    load_model,
    loss_curve_csv,
    train,
    train_step,
)


@pytest.fixture
def tiny_config():
    return RunConfig(
        num_slices=2,
        hidden_dim=8,
        heads=2,
        decoder_layers=1,
        conv_layers=1,
        kernel_size=3,
        feature_dim=4,
        T=10,
        ddim_steps=5,
        epochs=2,
        batch_size=2,
        checkpoint_every=1,
        n_frames=8,
    ).validate()


@pytest.fixture
def tiny_corpus():
    return make_synthetic_corpus(CorpusSpec(count=3, n_frames=8, feature_dim=4))


def test_train_is_deterministic(tiny_config, tiny_corpus):
    """Test two runs with the same seed produce identical parameters."""
    a = train(tiny_config, tiny_corpus, progress=False)
    b = train(tiny_config, tiny_corpus, progress=False)
    assert a.history == b.history
    for name in a.params:
        np.testing.assert_array_equal(a.params[name], b.params[name])
    c = train(tiny_config, tiny_corpus, seed=1, progress=False)
    assert c.history != a.history


def test_train_history(tiny_config, tiny_corpus):
    """Test every epoch records finite loss parts and the best total."""
    result = train(tiny_config, tiny_corpus, progress=False)
    assert [row["epoch"] for row in result.history] == [1, 2]
    for row in result.history:
        assert all(math.isfinite(row[c]) for c in LOSS_COLUMNS)
    assert result.best_total == min(row["total"] for row in result.history)


def test_train_step_reduces_loss_on_fixed_batch(tiny_config, tiny_corpus):
    """Test repeated updates on one batch with fixed noise lower its loss."""
    config = RunConfig.from_dict({**tiny_config.to_dict(), "lr": 1e-4, "dropout": 0.0})
    params = init_params(config.denoiser_config(), 0)
    state = OptimizerState.zeros(params)
    schedule = make_schedule(config.T, config.schedule)
    totals = []
    for _ in range(4):
        params, state, parts = train_step(
            params,
            state,
            tiny_corpus[:2],
            config,
            Rng(0, (99,)),
            Skeleton.default(),
            schedule,
        )
        totals.append(parts["total"])
    assert totals[-1] < totals[0]
    assert state.step == 4


def test_train_writes_outputs(tiny_config, tiny_corpus, tmp_path):
    """Test checkpoints and the loss curve land in the output directory."""
    train(tiny_config, tiny_corpus, out_dir=tmp_path / "run", progress=False)
    run = tmp_path / "run"
    assert (run / "best.bdck").exists()
    assert (run / "last.bdck").exists()
    lines = (run / "loss_curve.csv").read_text().splitlines()
    assert lines[0].startswith("# provenance: badm-dance")
    assert lines[1] == "epoch,L_simple,L_pos,L_vel,L_foot,total"
    assert len(lines) == 4


def test_checkpoint_reloads_as_model(tiny_config, tiny_corpus, tmp_path):
    """Test a saved checkpoint restores the config and a working model."""
    train(tiny_config, tiny_corpus, out_dir=tmp_path, progress=False)
    config, model = load_model(tmp_path / "last.bdck")
    assert config == tiny_config
    item = tiny_corpus[0]
    out = model(item.motion.data, 5, item.condition)
    assert out.shape == (8, 151)
    assert np.all(np.isfinite(out))


def test_loss_curve_csv_format():
    """Test rows hold the epoch and full-precision loss values."""
    history = [{"epoch": 1, **dict.fromkeys(LOSS_COLUMNS, 0.1)}]
    text = loss_curve_csv(history, provenance("train", 4))
    assert text.splitlines()[0].endswith("seed=4")
    assert text.splitlines()[2] == "1,0.1,0.1,0.1,0.1,0.1"


def test_train_rejects_bad_datasets(tiny_config, tiny_corpus):
    """Test empty datasets and mismatched feature widths are refused."""
    with pytest.raises(EmptyDataset):
        train(tiny_config, [], progress=False)
    wide = make_synthetic_corpus(CorpusSpec(count=1, n_frames=8, feature_dim=5))
    with pytest.raises(ShapeMismatch):
        train(tiny_config, wide, progress=False)


def test_train_rejects_frame_count_other_than_config(tiny_config):
    """Test items whose length differs from n_frames in the config are refused."""
    longer = make_synthetic_corpus(CorpusSpec(count=2, n_frames=12, feature_dim=4))
    with pytest.raises(ShapeMismatch, match="config expects 8"):
        train(tiny_config, longer, progress=False)


def test_train_stops_on_non_finite_loss(tiny_config, tiny_corpus, monkeypatch):
    """Test a NaN loss aborts training with a numeric failure."""

    def broken_loss(x, x_hat, weights, skeleton):
        parts = dict.fromkeys(LOSS_COLUMNS, float("nan"))
        return Tensor(float("nan")), parts

    monkeypatch.setattr("badm_dance.training.total_loss", broken_loss)
    with pytest.raises(NumericFailure):
        train(tiny_config, tiny_corpus, progress=False)
