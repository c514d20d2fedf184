"""End-to-end tests for the badm-dance command line."""

import hashlib
import json

import numpy as np
import pytest
from scipy.io import wavfile

from badm_dance.cli import build_parser, main
from badm_dance.formats import (
    BeatFile,
    load_motion,
    save_beats,
    save_features,
    save_motion,
)
from badm_dance.motion import MotionSequence

TINY = {
    "num_slices": 2,
    "hidden_dim": 8,
    "heads": 2,
    "decoder_layers": 1,
    "conv_layers": 1,
    "kernel_size": 3,
    "feature_dim": 4,
    "T": 10,
    "ddim_steps": 5,
    "n_frames": 8,
    "batch_size": 2,
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny corpus and a one-epoch checkpoint trained on it."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.json"
    config.write_text(json.dumps(TINY))
    data = root / "data"
    make_data = ["make-data", "--out", str(data), "--count", "3"]
    assert main([*make_data, "--config", str(config)]) == 0
    train = ["train", "--data", str(data), "--out", str(root / "run"), "--epochs", "1"]
    assert main([*train, "--config", str(config), "--no-progress"]) == 0
    return root


def _generate_args(workspace, out, *extra):
    data = workspace / "data"
    return [
        "--ckpt", str(workspace / "run" / "last.bdck"),
        "--features", str(data / "item_0000.features.json"),
        "--beats", str(data / "item_0000.beats.json"),
        "--out", str(out),
        *extra,
    ]


def test_make_data_layout(workspace):
    """Test make-data writes one motion, feature and beat file per item."""
    data = workspace / "data"
    assert len(list(data.glob("*.motion.json"))) == 3
    motion = load_motion(data / "item_0001.motion.json")
    assert motion.data.shape == (8, 151)
    raw = json.loads((data / "item_0001.features.json").read_text())
    assert raw["dim"] == 4
    assert raw["provenance"]["command"].startswith("badm-dance make-data")


def test_make_data_rejects_indivisible_frames(tmp_path):
    """Test 151 frames exits with the validation code."""
    assert main(["make-data", "--out", str(tmp_path), "--frames", "151"]) == 2


def test_train_outputs(workspace):
    """Test training leaves checkpoints and a loss curve."""
    run = workspace / "run"
    assert (run / "best.bdck").exists()
    assert (run / "loss_curve.csv").read_text().count("\n") == 3


def test_generate_is_reproducible(workspace, tmp_path, capsys):
    """Test the same seed gives the same motion and the seed is printed."""
    for name in ("a.json", "b.json"):
        args = _generate_args(workspace, tmp_path / name, "--seed", "3")
        assert main(["generate", *args]) == 0
        assert "seed 3" in capsys.readouterr().out
    a = load_motion(tmp_path / "a.json")
    b = load_motion(tmp_path / "b.json")
    assert a.data.shape == (8, 151)
    np.testing.assert_array_equal(a.data, b.data)


def test_generate_also_writes_tensor(workspace, tmp_path):
    """Test --bdt writes the motion as a tensor block too."""
    bdt = str(tmp_path / "m.bdt")
    args = _generate_args(workspace, tmp_path / "m.json", "--bdt", bdt)
    assert main(["generate", *args]) == 0
    assert (tmp_path / "m.bdt").read_bytes()[:4] == b"BADM"


def test_generate_frame_mismatch(workspace, tmp_path):
    """Test features and beats of different lengths exit with code 2."""
    save_beats(tmp_path / "short.beats.json", BeatFile(30, 6, [0]))
    args = _generate_args(workspace, tmp_path / "m.json")
    args[args.index("--beats") + 1] = str(tmp_path / "short.beats.json")
    assert main(["generate", *args]) == 2


def test_generate_missing_checkpoint(workspace, tmp_path):
    """Test an unreadable checkpoint exits with the file error code."""
    args = _generate_args(workspace, tmp_path / "m.json")
    args[args.index("--ckpt") + 1] = str(tmp_path / "nope.bdck")
    assert main(["generate", *args]) == 3


def test_generate_long(workspace, tmp_path):
    """Test long-form generation stitches chunks to the requested length."""
    rng = np.random.default_rng(0)
    save_features(tmp_path / "long.features.json", 30, rng.normal(size=(20, 4)))
    save_beats(tmp_path / "long.beats.json", BeatFile(30, 20, [0, 10]))
    args = _generate_args(workspace, tmp_path / "long.json", "--frames", "18")
    args[args.index("--features") + 1] = str(tmp_path / "long.features.json")
    args[args.index("--beats") + 1] = str(tmp_path / "long.beats.json")
    assert main(["generate-long", *args]) == 0
    assert load_motion(tmp_path / "long.json").n_frames == 18
    assert main(["generate-long", *args, "--inpaint-overlap"]) == 0


def test_generate_long_needs_enough_features(workspace, tmp_path):
    """Test asking for more frames than the features cover exits with code 2."""
    args = _generate_args(workspace, tmp_path / "long.json", "--frames", "40")
    assert main(["generate-long", *args]) == 2


def test_edit_in_between_keeps_known_frames(workspace, tmp_path):
    """Test the in-between preset keeps the first and last frames."""
    known = workspace / "data" / "item_0000.motion.json"
    preset = ["--preset", "in-between", "--keep-frames", "2"]
    args = _generate_args(workspace, tmp_path / "edit.json", "--known", str(known))
    args.extend(preset)
    assert main(["edit", *args]) == 0
    original = load_motion(known).data
    edited = load_motion(tmp_path / "edit.json").data
    np.testing.assert_array_equal(edited[:2], original[:2])
    np.testing.assert_array_equal(edited[-2:], original[-2:])


def test_edit_with_mask_file(workspace, tmp_path):
    """Test a mask file holds the listed joints on every frame."""
    known = workspace / "data" / "item_0000.motion.json"
    mask = tmp_path / "mask.json"
    spec = {"joints": [0, 1], "include_root": False, "include_contacts": False}
    mask.write_text(json.dumps(spec))
    args = _generate_args(workspace, tmp_path / "edit.json", "--known", str(known))
    args.extend(["--mask", str(mask)])
    assert main(["edit", *args]) == 0
    original = load_motion(known).data
    edited = load_motion(tmp_path / "edit.json").data
    np.testing.assert_array_equal(edited[:, :12], original[:, :12])


def test_extract_beats(tmp_path):
    """Test beats are extracted from a click track WAV file."""
    pcm = np.zeros(735 * 60, dtype=np.int16)
    for frame in (5, 20, 35, 50):
        pcm[frame * 735] = 16384
    wavfile.write(tmp_path / "clicks.wav", 22050, pcm)
    out = tmp_path / "clicks.beats.json"
    wav = str(tmp_path / "clicks.wav")
    assert main(["extract-beats", "--wav", wav, "--out", str(out)]) == 0
    raw = json.loads(out.read_text())
    assert raw["frames"] == 60
    assert raw["beats"] == [5, 20, 35, 50]


def test_evaluate_report(workspace, tmp_path):
    """Test evaluate writes a report with every metric."""
    reference = tmp_path / "reference"
    config = str(workspace / "tiny.json")
    make_data = ["make-data", "--out", str(reference), "--count", "3", "--seed", "5"]
    assert main([*make_data, "--config", config]) == 0
    out = tmp_path / "report.json"
    evaluate = [
        "evaluate",
        "--generated",
        str(workspace / "data"),
        "--reference",
        str(reference),
        "--jobs",
        "2",
        "--out",
        str(out),
    ]
    assert main(evaluate) == 0
    report = json.loads(out.read_text())
    assert report["n_generated"] == 3 and report["n_reference"] == 3
    for key in ("div_k", "div_g", "pfc_mean", "fid_k", "fid_g"):
        assert report[key] is not None
    assert "beat_align" in report
    assert report["provenance"]["tool"] == "badm-dance"


def _digest(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _with_condition(args, features, beats):
    args[args.index("--features") + 1] = str(features)
    args[args.index("--beats") + 1] = str(beats)
    return args


def test_generate_rejects_features_longer_than_model(workspace, tmp_path):
    """Test features and beats that agree but not with the model exit with code 2."""
    rng = np.random.default_rng(1)
    save_features(tmp_path / "f.features.json", 30, rng.normal(size=(16, 4)))
    save_beats(tmp_path / "f.beats.json", BeatFile(30, 16, [0, 8]))
    args = _generate_args(workspace, tmp_path / "m.json")
    _with_condition(args, tmp_path / "f.features.json", tmp_path / "f.beats.json")
    assert main(["generate", *args]) == 2
    assert not (tmp_path / "m.json").exists()


@pytest.mark.parametrize("width", [3, 5])
def test_generate_rejects_wrong_feature_width(workspace, tmp_path, width):
    """Test feature files narrower or wider than the model exit with code 2."""
    rng = np.random.default_rng(2)
    save_features(tmp_path / "f.features.json", 30, rng.normal(size=(8, width)))
    args = _generate_args(workspace, tmp_path / "m.json")
    args[args.index("--features") + 1] = str(tmp_path / "f.features.json")
    assert main(["generate", *args]) == 2


def test_edit_rejects_known_motion_of_wrong_length(workspace, tmp_path):
    """Test a known motion longer than the model exits with code 2."""
    known = load_motion(workspace / "data" / "item_0000.motion.json")
    long_known = tmp_path / "known.json"
    save_motion(long_known, MotionSequence(30, np.tile(known.data, (2, 1))))
    args = _generate_args(workspace, tmp_path / "e.json", "--known", str(long_known))
    assert main(["edit", *args, "--preset", "lower-body"]) == 2


def test_evaluate_malformed_motion_file(tmp_path):
    """Test a motion file with ragged rows exits with the file error code."""
    generated = tmp_path / "generated"
    generated.mkdir()
    raw = {"fps": 30, "frames": 2, "dim": 151, "data": [[0.0] * 151, [0.0]]}
    (generated / "bad.motion.json").write_text(json.dumps(raw))
    evaluate = ["evaluate", "--generated", str(generated), "--reference"]
    assert main([*evaluate, str(generated)]) == 3


def test_evaluate_reference_against_itself(workspace, tmp_path):
    """Test a set scored against itself has Fréchet distances of zero."""
    data = str(workspace / "data")
    out = tmp_path / "self.json"
    evaluate = ["evaluate", "--generated", data, "--reference", data]
    assert main([*evaluate, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["fid_k"] <= 1e-6
    assert report["fid_g"] <= 1e-6


def test_generate_long_bytes_are_reproducible(workspace, tmp_path):
    """Test two long-form runs with the same seed write identical bytes."""
    rng = np.random.default_rng(0)
    save_features(tmp_path / "long.features.json", 30, rng.normal(size=(16, 4)))
    save_beats(tmp_path / "long.beats.json", BeatFile(30, 16, [0, 8]))
    out = tmp_path / "long.json"
    args = _generate_args(workspace, out, "--frames", "16", "--seed", "4")
    _with_condition(args, tmp_path / "long.features.json", tmp_path / "long.beats.json")
    digests = []
    for _ in range(2):
        assert main(["generate-long", *args]) == 0
        digests.append(_digest(out))
    assert digests[0] == digests[1]


def test_edit_bytes_are_reproducible(workspace, tmp_path):
    """Test two edit runs with the same seed write identical bytes."""
    known = str(workspace / "data" / "item_0001.motion.json")
    out = tmp_path / "edit.json"
    args = _generate_args(workspace, out, "--known", known, "--seed", "9")
    digests = []
    for _ in range(2):
        assert main(["edit", *args, "--preset", "lower-body"]) == 0
        digests.append(_digest(out))
    assert digests[0] == digests[1]


def test_edit_with_full_mask_returns_known_motion(workspace, tmp_path):
    """Test an empty mask object holds every value of the known motion."""
    known = workspace / "data" / "item_0002.motion.json"
    mask = tmp_path / "all.json"
    mask.write_text("{}")
    args = _generate_args(workspace, tmp_path / "edit.json", "--known", str(known))
    assert main(["edit", *args, "--mask", str(mask)]) == 0
    edited = load_motion(tmp_path / "edit.json").data
    np.testing.assert_array_equal(edited, load_motion(known).data)


def test_edit_with_empty_frame_list_matches_generate(workspace, tmp_path):
    """Test a mask holding no frames samples exactly what generate does."""
    known = str(workspace / "data" / "item_0000.motion.json")
    mask = tmp_path / "none.json"
    mask.write_text(json.dumps({"frames": []}))
    edit = _generate_args(workspace, tmp_path / "e.json", "--known", known)
    assert main(["edit", *edit, "--mask", str(mask), "--seed", "6"]) == 0
    generate = _generate_args(workspace, tmp_path / "g.json", "--seed", "6")
    assert main(["generate", *generate]) == 0
    np.testing.assert_array_equal(
        load_motion(tmp_path / "e.json").data, load_motion(tmp_path / "g.json").data
    )


def test_log_level_from_environment(monkeypatch, tmp_path):
    """Test BADM_LOG_LEVEL sets the command-line logging level."""
    monkeypatch.setenv("BADM_LOG_LEVEL", "WARNING")
    args = build_parser().parse_args(["make-data", "--out", str(tmp_path)])
    assert args.log_level == "WARNING"
