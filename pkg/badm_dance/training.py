"""The training loop: noising, condition dropout, losses, Adan, checkpoints."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from tqdm import tqdm

from .autograd import Tensor, backward
from .conditioning import condition_dropout
from .config import RunConfig
from .corpus import CorpusItem
from .denoiser import BADMDenoiser, forward_batch, init_params, stack_conditions
from .diffusion import make_schedule, q_sample
from .errors import EmptyDataset, NumericFailure, ShapeMismatch
from .formats import Checkpoint, load_checkpoint, provenance, save_checkpoint
from .losses import total_loss
from .motion import Skeleton
from .optim import OptimizerState, adan_step
from .rng import Rng

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("L_simple", "L_pos", "L_vel", "L_foot", "total")


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    best_total: float = math.inf


def _check_dataset(dataset: list[CorpusItem], config: RunConfig) -> int:
    if not dataset:
        raise EmptyDataset("Training needs at least one item")
    n = dataset[0].motion.n_frames
    for i, item in enumerate(dataset):
        if item.motion.n_frames != n or item.condition.n_frames != n:
            raise ShapeMismatch(f"Item {i} has {item.motion.n_frames} frames, not {n}")
        if item.condition.feature_dim != config.feature_dim:
            raise ShapeMismatch(
                f"Item {i} has {item.condition.feature_dim} feature channels, "
                f"config expects {config.feature_dim}"
            )
    if n != config.n_frames:
        raise ShapeMismatch(
            f"Dataset items have {n} frames, config expects {config.n_frames}"
        )
    return n


def loss_curve_csv(history: list[dict], prov: dict) -> str:
    """Loss history as CSV under a provenance comment line."""
    buffer = io.StringIO()
    buffer.write(
        f"# provenance: {prov['tool']} {prov['version']} seed={prov['seed']}\n"
    )
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("epoch",) + LOSS_COLUMNS)
    for row in history:
        writer.writerow([row["epoch"]] + [repr(row[c]) for c in LOSS_COLUMNS])
    return buffer.getvalue()


def train_step(
    params: dict[str, np.ndarray],
    state: OptimizerState,
    batch: list[CorpusItem],
    config: RunConfig,
    rng: Rng,
    skeleton: Skeleton,
    schedule,
):
    """One optimizer update on ``batch``; returns params, state and loss parts."""
    dcfg = config.denoiser_config()
    x0 = np.stack([item.motion.data for item in batch])
    t = rng.spawn(0).integers(1, config.T + 1, size=len(batch))
    noise = rng.spawn(1).normal(x0.shape)
    z_t = np.stack(
        [q_sample(x0[i], int(t[i]), noise[i], schedule) for i in range(len(batch))]
    )
    conditions = [
        condition_dropout(item.condition, config.dropout, rng.spawn(2, i))
        for i, item in enumerate(batch)
    ]
    music, beat = stack_conditions(conditions)
    leaves = {name: Tensor(value, requires_grad=True) for name, value in params.items()}
    x_hat = forward_batch(z_t, t, music, beat, leaves, dcfg)
    loss, parts = total_loss(x0, x_hat, config.loss_weights(), skeleton)
    if not math.isfinite(parts["total"]):
        raise NumericFailure(f"Loss became {parts['total']} (parts {parts})")
    backward(loss)
    grads = {name: leaf.grad for name, leaf in leaves.items()}
    params, state = adan_step(params, grads, state, config.adan_hyper())
    return params, state, parts


def train(
    config: RunConfig,
    dataset: list[CorpusItem],
    seed: int | None = None,
    out_dir: str | Path | None = None,
    skeleton: Skeleton | None = None,
    progress: bool = True,
    command: str = "train",
) -> TrainResult:
    """Train a denoiser from scratch; deterministic for a given seed.

    With ``out_dir`` set, writes ``loss_curve.csv``, ``last.bdck`` (every
    ``checkpoint_every`` epochs and at the end) and ``best.bdck`` (lowest
    epoch-mean total loss).
    """
    seed = config.seed if seed is None else seed
    n_frames = _check_dataset(dataset, config)
    config.denoiser_config().validate(n_frames)
    skeleton = skeleton or Skeleton.default()
    schedule = make_schedule(config.T, config.schedule)
    params = init_params(config.denoiser_config(), seed)
    state = OptimizerState.zeros(params)
    rng = Rng(seed, stream=(5,))
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    prov = provenance(command, seed, config.to_dict())
    result = TrainResult(params)
    logger.info(
        f"Training on {len(dataset)} items x {n_frames} frames for {config.epochs} "
        f"epochs (batch {config.batch_size}, seed {seed})"
    )

    epochs = range(1, config.epochs + 1)
    for epoch in tqdm(epochs, desc="training", disable=not progress):
        order = rng.spawn(epoch).permutation(len(dataset))
        sums = dict.fromkeys(LOSS_COLUMNS, 0.0)
        for b, start in enumerate(range(0, len(dataset), config.batch_size)):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            params, state, parts = train_step(
                params,
                state,
                batch,
                config,
                rng.spawn(epoch, b + 1),
                skeleton,
                schedule,
            )
            for name in LOSS_COLUMNS:
                sums[name] += parts[name] * len(batch)
        row = {"epoch": epoch, **{k: v / len(dataset) for k, v in sums.items()}}
        result.history.append(row)
        logger.info(
            f"epoch {epoch}: L_simple={row['L_simple']:.5f} total={row['total']:.5f}"
        )
        improved = row["total"] < result.best_total
        if improved:
            result.best_total = row["total"]
        if out_dir is None:
            continue
        ckpt = Checkpoint(params, config.to_dict(), prov, epoch)
        if improved:
            save_checkpoint(out_dir / "best.bdck", ckpt)
        if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
            save_checkpoint(out_dir / "last.bdck", ckpt)
            logger.info(f"Saved checkpoint at epoch {epoch} to {out_dir / 'last.bdck'}")

    result.params = params
    if out_dir is not None:
        (out_dir / "loss_curve.csv").write_text(loss_curve_csv(result.history, prov))
    return result


def load_model(path: str | Path) -> tuple[RunConfig, BADMDenoiser]:
    """The run configuration and inference model stored in a checkpoint."""
    ckpt = load_checkpoint(path)
    config = RunConfig.from_dict(ckpt.config, source=str(path))
    return config, BADMDenoiser(config.denoiser_config(), ckpt.params)
