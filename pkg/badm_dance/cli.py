"""Command-line interface for badm-dance.

Exit codes: 0 success, 2 invalid input, 3 unreadable or malformed file,
4 numeric failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
from dotenv import load_dotenv

from . import __version__
from .conditioning import (
    Condition,
    beats_to_vector,
    extract_beats,
    read_wav,
    vector_to_beats,
)
from .config import RunConfig
from .corpus import (
    CorpusSpec,
    load_corpus,
    make_synthetic_corpus,
    spec_dict,
    write_corpus,
)
from .denoiser import BADMDenoiser
from .diffusion import (
    EditMask,
    SamplerConfig,
    long_form_stitch,
    make_schedule,
    sample,
    stitch_weights,
)
from .errors import (
    BadmError,
    DimMismatch,
    FeatureTooShort,
    NumericFailure,
    ShapeMismatch,
)
from .formats import (
    BeatFile,
    load_beats,
    load_features,
    load_motion,
    provenance,
    save_beats,
    save_motion,
    write_tensor_file,
)
from .metrics import evaluate_sets
from .motion import LOWER_BODY_JOINTS, MotionSequence, Skeleton
from .training import load_model, train

logger = logging.getLogger(__name__)


def _command_line(args: argparse.Namespace) -> str:
    return " ".join(getattr(args, "argv", []) or [args.command])


def _config_overrides(args: argparse.Namespace) -> dict:
    names = set(RunConfig.field_names())
    return {k: v for k, v in vars(args).items() if k in names and v is not None}


def _load_condition(
    features_path,
    beats_path,
    n_frames: int | None = None,
    feature_dim: int | None = None,
):
    """Condition from a feature file and a beat file that agree on frames and fps.

    With ``n_frames`` or ``feature_dim`` set, the features must also match the model.
    """
    features = load_features(features_path)
    beat_file = load_beats(beats_path)
    rows = features.data.shape[0]
    if beat_file.frames != rows:
        raise ShapeMismatch(
            f"{beats_path} has {beat_file.frames} frames but {features_path} has {rows}"
        )
    if features.fps and features.fps != beat_file.fps:
        raise ShapeMismatch(
            f"{features_path} is at {features.fps} fps "
            f"but {beats_path} at {beat_file.fps}"
        )
    if n_frames is not None and rows != n_frames:
        raise ShapeMismatch(
            f"{features_path} has {rows} frames, the model expects {n_frames}"
        )
    width = features.data.shape[1]
    if feature_dim is not None and width != feature_dim:
        raise DimMismatch(
            f"{features_path} has {width} feature channels, the model expects "
            f"{feature_dim}"
        )
    beat = beats_to_vector(beat_file.beats, rows)
    return Condition(features.data, beat), beat_file.fps


def _write_motion(args, motion: MotionSequence, seed: int, config: RunConfig) -> None:
    if not np.all(np.isfinite(motion.data)):
        raise NumericFailure(f"Generated motion for {args.out} contains NaN or inf")
    prov = provenance(_command_line(args), seed, config.to_dict())
    save_motion(args.out, motion, prov)
    if getattr(args, "bdt", None):
        write_tensor_file(args.bdt, motion.data)
    logger.info(f"Wrote {motion.n_frames} frames to {args.out}")
    print(f"seed {seed}: wrote {args.out} ({motion.n_frames}x{motion.data.shape[1]})")


def _sampler(config: RunConfig, seed: int, **kwargs) -> SamplerConfig:
    return SamplerConfig(
        guidance_weight=config.guidance,
        ddim_steps=config.ddim_steps,
        seed=seed,
        **kwargs,
    )


def _model_config(args) -> tuple[RunConfig, BADMDenoiser]:
    stored, model = load_model(args.ckpt)
    overrides = {
        k: v
        for k, v in {
            "guidance": args.guidance,
            "ddim_steps": args.ddim_steps,
            "seed": args.seed,
        }.items()
        if v is not None
    }
    config = RunConfig.from_dict({**stored.to_dict(), **overrides}).validate()
    return config, model


def cmd_make_data(args) -> int:
    config = RunConfig.load(args.config, _config_overrides(args))
    spec = CorpusSpec(
        count=args.count,
        n_frames=config.n_frames,
        fps=config.fps,
        bpm_range=(args.bpm_min, args.bpm_max),
        seed=config.seed,
        feature_dim=config.feature_dim,
    )
    items = make_synthetic_corpus(spec)
    prov = provenance(_command_line(args), config.seed, spec_dict(spec))
    write_corpus(args.out, items, prov)
    return 0


def cmd_extract_beats(args) -> int:
    pcm, sample_rate = read_wav(args.wav)
    n_frames = args.frames or int(len(pcm) * args.fps // sample_rate)
    beat = extract_beats(pcm, sample_rate, args.fps, n_frames)
    beats = vector_to_beats(beat)
    save_beats(
        args.out,
        BeatFile(args.fps, n_frames, beats),
        provenance(_command_line(args), None, {"wav": str(args.wav)}),
    )
    logger.info(f"Found {len(beats)} beats in {args.wav}")
    return 0


def cmd_train(args) -> int:
    config = RunConfig.load(args.config, _config_overrides(args))
    dataset = load_corpus(args.data)
    train(
        config,
        dataset,
        out_dir=args.out,
        progress=not args.no_progress,
        command=_command_line(args),
    )
    return 0


def cmd_generate(args) -> int:
    config, model = _model_config(args)
    condition, fps = _load_condition(
        args.features, args.beats, config.n_frames, config.feature_dim
    )
    schedule = make_schedule(config.T, config.schedule)
    motion = sample(model, condition, schedule, _sampler(config, config.seed), fps=fps)
    _write_motion(args, motion, config.seed, config)
    return 0


def cmd_generate_long(args) -> int:
    config, model = _model_config(args)
    condition, fps = _load_condition(
        args.features, args.beats, feature_dim=config.feature_dim
    )
    n, half = config.n_frames, config.n_frames // 2
    total = args.frames or condition.n_frames
    if total <= n:
        raise FeatureTooShort(
            f"Long-form output needs more than {n} frames, got {total}"
        )
    chunks_needed = math.ceil((total - n) / half) + 1
    span = n + (chunks_needed - 1) * half
    if condition.n_frames < span:
        raise FeatureTooShort(
            f"{args.features} has {condition.n_frames} frames; {span} are needed"
        )
    weights = stitch_weights(n, chunks_needed)
    if not np.allclose(weights.sum(axis=0), 1.0, rtol=0.0, atol=1e-12):
        raise NumericFailure("Stitch weights do not sum to one")
    schedule = make_schedule(config.T, config.schedule)
    chunks: list[MotionSequence] = []
    for c in range(chunks_needed):
        start = c * half
        window = Condition(
            condition.music[start : start + n], condition.beat[start : start + n]
        )
        mask = None
        if args.inpaint_overlap and chunks:
            known = np.zeros_like(chunks[-1].data)
            known[:half] = chunks[-1].data[half:]
            mask = EditMask.in_between(known, head=half, tail=0)
        cfg = _sampler(config, config.seed, edit_mask=mask, stream=(c,))
        chunks.append(sample(model, window, schedule, cfg, fps=fps))
        logger.info(f"Chunk {c + 1}/{chunks_needed} done")
    stitched = long_form_stitch(chunks)
    motion = MotionSequence(stitched.fps, stitched.data[:total])
    _write_motion(args, motion, config.seed, config)
    return 0


def cmd_edit(args) -> int:
    config, model = _model_config(args)
    known = load_motion(args.known)
    if known.n_frames != config.n_frames:
        raise ShapeMismatch(
            f"{args.known} has {known.n_frames} frames, the model expects "
            f"{config.n_frames}"
        )
    condition, fps = _load_condition(
        args.features, args.beats, config.n_frames, config.feature_dim
    )
    if args.mask:
        mask = EditMask.from_json(args.mask, known.data)
    elif args.preset == "in-between":
        mask = EditMask.in_between(known.data, args.keep_frames, args.keep_frames)
    else:
        mask = EditMask.body_part(known.data, LOWER_BODY_JOINTS, include_root=True)
    schedule = make_schedule(config.T, config.schedule)
    cfg = _sampler(config, config.seed, edit_mask=mask)
    motion = sample(model, condition, schedule, cfg, fps=known.fps or fps)
    _write_motion(args, motion, config.seed, config)
    return 0


def _motion_files(directory: Path) -> list[Path]:
    files = sorted(directory.glob("*.motion.json"))
    if files:
        return files
    return sorted(p for p in directory.glob("*.json") if ".beats" not in p.name)


def _stem(path: Path) -> str:
    name = path.name
    for suffix in (".motion.json", ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


def cmd_evaluate(args) -> int:
    generated_dir = Path(args.generated)
    beats_dir = Path(args.beats) if args.beats else generated_dir
    generated_files = _motion_files(generated_dir)
    generated = [load_motion(p) for p in generated_files]
    reference = [load_motion(p) for p in _motion_files(Path(args.reference))]
    music_beats = []
    for path in generated_files:
        beat_path = beats_dir / f"{_stem(path)}.beats.json"
        music_beats.append(load_beats(beat_path).beats if beat_path.exists() else None)
    report = evaluate_sets(
        generated, reference, Skeleton.default(), music_beats, jobs=args.jobs
    )
    report["provenance"] = provenance(_command_line(args), None, {"jobs": args.jobs})
    text = json.dumps(report, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        logger.info(f"Wrote evaluation report to {args.out}")
    else:
        print(text, end="")
    return 0


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--ckpt", required=True, help="checkpoint (.bdck)")
    parser.add_argument("--features", required=True, help="music feature file")
    parser.add_argument("--beats", required=True, help="beat JSON file")
    parser.add_argument("--guidance", type=float, help="guidance weight (default 2.0)")
    parser.add_argument("--ddim-steps", type=int, help="sampling steps (default 50)")
    parser.add_argument("--seed", type=int, help="sampling seed (default 0)")
    parser.add_argument("--out", required=True, help="output motion JSON")
    parser.add_argument("--bdt", help="also write the motion as a .bdt tensor")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument(
        "--frames", dest="n_frames", type=int, help="frames per item (150)"
    )
    parser.add_argument("--fps", type=int, help="frame rate (30)")
    parser.add_argument("--feature-dim", type=int, help="music feature width (35)")
    parser.add_argument("--num-slices", type=int, help="slice count K (6)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="badm-dance", description="Music-to-dance diffusion at desk scale."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--log-level",
        default=os.getenv("BADM_LOG_LEVEL", "INFO"),
        help="logging level (default INFO, or BADM_LOG_LEVEL)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="write a synthetic beat-locked corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--bpm-min", type=float, default=100.0)
    p.add_argument("--bpm-max", type=float, default=140.0)
    _add_config_flags(p)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("extract-beats", help="one-hot beats from a WAV file")
    p.add_argument("--wav", required=True)
    p.add_argument("--fps", type=int, default=30)
    p.add_argument("--frames", type=int, help="frames to label (default: whole file)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract_beats)

    p = sub.add_parser("train", help="train a denoiser on a corpus directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoints and curve")
    p.add_argument("--epochs", type=int, help="epochs (200)")
    p.add_argument("--batch-size", type=int, help="batch size (16)")
    p.add_argument("--lr", type=float, help="learning rate (2e-4)")
    p.add_argument("--T", dest="T", type=int, help="diffusion steps (1000)")
    p.add_argument("--hidden-dim", type=int, help="hidden width (128)")
    p.add_argument("--dropout", type=float, help="condition dropout p (0.1)")
    p.add_argument("--no-progress", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample one sequence")
    _add_model_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("generate-long", help="sample and stitch overlapping chunks")
    _add_model_flags(p)
    p.add_argument("--frames", type=int, help="output length (default: feature length)")
    p.add_argument(
        "--inpaint-overlap",
        action="store_true",
        help="hold each chunk's first half to the previous chunk's second half",
    )
    p.set_defaults(func=cmd_generate_long)

    p = sub.add_parser("edit", help="sample with part of a known motion held fixed")
    _add_model_flags(p)
    p.add_argument("--known", required=True, help="known motion JSON")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--mask",
        help="edit mask JSON; a missing frames or joints key keeps all of them, "
        "an empty list keeps none (so {} holds the whole known motion)",
    )
    group.add_argument("--preset", choices=("in-between", "lower-body"))
    p.add_argument("--keep-frames", type=int, default=10)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("evaluate", help="metric report for generated motions")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument(
        "--beats", help="directory of <name>.beats.json (default: generated)"
    )
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = ["badm-dance", *argv]
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except BadmError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except OSError as e:
        logger.error(f"Cannot access {e.filename or ''}: {e.strerror or e}")
        return 3


if __name__ == "__main__":
    sys.exit(main())
