"""Tests for badm_dance.corpus module."""

import numpy as np
import pytest

from badm_dance.corpus import (
    CorpusSpec,
    load_corpus,
    make_synthetic_corpus,
    spec_dict,
    write_corpus,
)
from badm_dance.errors import BadSpec, EmptyDataset, ShapeMismatch
from badm_dance.formats import BeatFile, provenance, save_beats

SMALL = CorpusSpec(count=3, n_frames=60, fps=30, seed=2, feature_dim=8)


def test_corpus_is_deterministic():
    """Test the same spec always synthesizes the same items."""
    a = make_synthetic_corpus(SMALL)
    b = make_synthetic_corpus(SMALL)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.motion.data, y.motion.data)
        np.testing.assert_array_equal(x.condition.music, y.condition.music)
        assert x.beats == y.beats
    assert not np.array_equal(a[0].motion.data, a[1].motion.data)


def test_items_have_expected_shapes():
    """Test motion, features and beats agree on the frame count."""
    for item in make_synthetic_corpus(SMALL):
        assert item.motion.data.shape == (60, 151)
        assert item.condition.music.shape == (60, 8)
        assert item.condition.beat.sum() == len(item.beats)
        assert set(np.unique(item.motion.contacts)) <= {0.0, 1.0}


def test_beats_follow_the_tempo():
    """Test beats are spaced by the item's beat period."""
    spec = CorpusSpec(count=4, n_frames=150, seed=0)
    for item in make_synthetic_corpus(spec):
        assert 100.0 <= item.bpm <= 140.0
        period = 60.0 * 30 / item.bpm
        gaps = np.diff(item.beats)
        assert np.all(np.abs(gaps - period) <= 1.0)
        assert len(item.beats) >= 8


def test_root_dips_between_beats():
    """Test the root stays near standing height and is highest on beats."""
    item = make_synthetic_corpus(SMALL)[0]
    height = item.motion.root_translation[:, 1]
    assert height.max() <= 0.92 + 1e-12
    assert height.min() >= 0.91 - 1e-12
    for beat in item.beats:
        assert height[beat] > 0.919


@pytest.mark.parametrize(
    "kwargs",
    [{"count": 0}, {"n_frames": 2}, {"bpm_range": (140.0, 100.0)}, {"fps": 0}],
)
def test_invalid_spec(kwargs):
    """Test impossible corpus specs are refused."""
    with pytest.raises(BadSpec):
        make_synthetic_corpus(CorpusSpec(**kwargs))


def test_write_and_load_corpus(tmp_path):
    """Test a written corpus loads back in index order."""
    items = make_synthetic_corpus(SMALL)
    prov = provenance("make-data", 2, spec_dict(SMALL))
    written = write_corpus(tmp_path, items, prov)
    assert len(written) == 9
    assert (tmp_path / "item_0002.beats.json").exists()
    loaded = load_corpus(tmp_path)
    assert len(loaded) == 3
    for original, restored in zip(items, loaded):
        np.testing.assert_array_equal(original.motion.data, restored.motion.data)
        np.testing.assert_array_equal(original.condition.beat, restored.condition.beat)
        assert restored.beats == original.beats


def test_load_empty_corpus(tmp_path):
    """Test a directory without items is an empty dataset."""
    with pytest.raises(EmptyDataset):
        load_corpus(tmp_path)


def test_load_corpus_frame_mismatch(tmp_path):
    """Test a beat file that disagrees with its motion is refused."""
    write_corpus(tmp_path, make_synthetic_corpus(SMALL)[:1], provenance("x", 0))
    save_beats(tmp_path / "item_0000.beats.json", BeatFile(30, 59, [0]))
    with pytest.raises(ShapeMismatch):
        load_corpus(tmp_path)


def test_spec_dict_is_json_friendly():
    """Test the spec serializes with a list tempo range."""
    raw = spec_dict(SMALL)
    assert raw["bpm_range"] == [100.0, 140.0]
    assert raw["count"] == 3
