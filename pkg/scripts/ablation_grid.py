#!/usr/bin/env python3
"""
Ablation harness: one training epoch and one sample per variant.

Variants switch off the bidirectional context, the beat input and the local
decoder, and sweep the slice count. Each run prints its losses and the shape of
the sampled motion; no ordering between variants is checked.
"""

import argparse
import dataclasses
import logging
import sys

import numpy as np

from badm_dance.config import RunConfig
from badm_dance.corpus import CorpusSpec, make_synthetic_corpus
from badm_dance.denoiser import BADMDenoiser
from badm_dance.diffusion import SamplerConfig, make_schedule, sample
from badm_dance.errors import BadmError
from badm_dance.motion import FRAME_DIMS
from badm_dance.training import train

logger = logging.getLogger("ablation_grid")

VARIANTS = {
    "full": {},
    "unidirectional": {"bidirectional": False},
    "no-beat": {"use_beat": False},
    "no-local-decoder": {"use_local_decoder": False},
    "K=3": {"num_slices": 3},
    "K=5": {"num_slices": 5},
    "K=6": {"num_slices": 6},
    "K=10": {"num_slices": 10},
}


def run_variant(name: str, config: RunConfig, corpus) -> bool:
    result = train(config, corpus, progress=False)
    model = BADMDenoiser(config.denoiser_config(), result.params)
    schedule = make_schedule(config.T, config.schedule)
    cfg = SamplerConfig(config.guidance, config.ddim_steps, seed=config.seed)
    motion = sample(model, corpus[0].condition, schedule, cfg, fps=config.fps)
    row = result.history[-1]
    ok = motion.data.shape == (config.n_frames, FRAME_DIMS) and bool(
        np.all(np.isfinite(motion.data))
    )
    print(
        f"{'✅' if ok else '❌'} {name:<18} L_simple={row['L_simple']:.4f} "
        f"total={row['total']:.4f} shape={motion.data.shape}"
    )
    return ok


def main():
    parser = argparse.ArgumentParser(description=__doc__.strip().splitlines()[0])
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--count", type=int, default=16)
    parser.add_argument("--only", nargs="*", choices=sorted(VARIANTS))
    args = parser.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    base = RunConfig.load(args.config, {"epochs": 1})
    corpus = make_synthetic_corpus(
        CorpusSpec(
            count=args.count,
            n_frames=base.n_frames,
            fps=base.fps,
            seed=base.seed,
            feature_dim=base.feature_dim,
        )
    )

    print("🔧 Ablation grid")
    print("=" * 30)
    failures = 0
    for name in args.only or VARIANTS:
        try:
            config = dataclasses.replace(base, **VARIANTS[name]).validate()
            failures += not run_variant(name, config, corpus)
        except BadmError as e:
            print(f"❌ {name:<18} {type(e).__name__}: {e}")
            failures += 1
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
