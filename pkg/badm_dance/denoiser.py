"""The bidirectional autoregressive denoiser.

The noisy sequence is cut into K slices. Slice k attends to the prediction
already made for slice k - 1 and to the still-noisy slice k + 1, is decoded by a
FiLM-modulated MLP stack driven by the music, beat and timestep, and the
concatenated slices are refined by a residual 1-D convolution stack (the local
information decoder). Contact channels leave through a sigmoid.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from .autograd import Tensor, as_tensor, concat, no_grad
from .conditioning import Condition, partition_bounds
from .errors import NotDivisible, ShapeMismatch
from .layers import (
    AttentionWeights,
    conv1d,
    cross_attention,
    film,
    gelu,
    init_uniform,
    linear,
    timestep_embedding,
)
from .motion import FRAME_DIMS, POSE_DIMS
from .rng import Rng

logger = logging.getLogger(__name__)

MIN_SLICE_FRAMES = 4

Params = Mapping[str, "Tensor | np.ndarray"]


@dataclass(frozen=True)
class DenoiserConfig:
    num_slices: int = 6
    hidden_dim: int = 128
    heads: int = 4
    decoder_layers: int = 2
    conv_layers: int = 2
    kernel_size: int = 5
    feature_dim: int = 35
    bidirectional: bool = True
    use_beat: bool = True
    use_local_decoder: bool = True

    def validate(self, n_frames: int | None = None) -> "DenoiserConfig":
        if self.num_slices < 1:
            raise NotDivisible(f"Slice count must be >= 1, got {self.num_slices}")
        if self.hidden_dim % self.heads:
            raise ShapeMismatch(
                f"hidden_dim {self.hidden_dim} is not divisible by {self.heads} heads"
            )
        if self.kernel_size % 2 == 0:
            raise ShapeMismatch(f"kernel_size must be odd, got {self.kernel_size}")
        if self.decoder_layers < 1 or self.conv_layers < 1 or self.feature_dim < 1:
            raise ShapeMismatch("Layer counts and feature_dim must be >= 1")
        if n_frames is not None:
            if n_frames % self.num_slices:
                raise NotDivisible(
                    f"{n_frames} frames are not divisible by K={self.num_slices}"
                )
            if n_frames // self.num_slices < MIN_SLICE_FRAMES:
                raise ShapeMismatch(
                    f"Slices of {n_frames // self.num_slices} frames are shorter "
                    f"than {MIN_SLICE_FRAMES}"
                )
        return self

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(config: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape of every parameter; depends on the config alone."""
    h, f, d = config.hidden_dim, config.feature_dim, FRAME_DIMS
    shapes: dict[str, tuple[int, ...]] = {}

    def dense(name, fan_in, fan_out):
        shapes[f"{name}.weight"] = (fan_in, fan_out)
        shapes[f"{name}.bias"] = (fan_out,)

    dense("in_proj", d, h)
    dense("ctx_prev", d, h)
    if config.bidirectional:
        dense("ctx_next", d, h)
    for part in "qkvo":
        dense(f"attn.{part}", h, h)
    dense("time.0", h, h)
    dense("time.1", h, h)
    dense("cond_frame", f + 1, h)
    dense("cond.0", f + 1 + h, h)
    dense("cond.1", h, 2 * h * config.decoder_layers)
    for layer in range(config.decoder_layers):
        dense(f"decoder.{layer}.fc1", h, h)
        dense(f"decoder.{layer}.fc2", h, h)
    dense("out_proj", h, d)
    if config.use_local_decoder:
        widths = [d] + [h] * (config.conv_layers - 1) + [d]
        for c in range(config.conv_layers):
            shapes[f"lid.{c}.weight"] = (config.kernel_size, widths[c], widths[c + 1])
            shapes[f"lid.{c}.bias"] = (widths[c + 1],)
    return shapes


def param_count(config: DenoiserConfig) -> int:
    """Total number of scalar parameters."""
    return int(sum(np.prod(shape) for shape in param_shapes(config).values()))


def init_params(config: DenoiserConfig, seed: int) -> dict[str, np.ndarray]:
    """Seeded uniform weights, zero biases, zero final local-decoder conv."""
    config.validate()
    rng = Rng(seed, stream=(3,))
    last_conv = f"lid.{config.conv_layers - 1}."
    params = {}
    for i, (name, shape) in enumerate(param_shapes(config).items()):
        if name.endswith(".bias") or name.startswith(last_conv):
            params[name] = np.zeros(shape)
            continue
        fan_in = int(np.prod(shape[:-1]))
        params[name] = init_uniform(rng.spawn(i), shape, fan_in)
    return params


def slice_sequence(seq, k: int) -> list:
    """K contiguous equal slices along the frame axis (second to last)."""
    n = seq.shape[-2]
    return [seq[..., a:b, :] for a, b in partition_bounds(n, k)]


def _dense(x, params: Params, name: str) -> Tensor:
    return linear(x, params[f"{name}.weight"], params[f"{name}.bias"])


def _attention_weights(params: Params) -> AttentionWeights:
    return AttentionWeights(
        *(params[f"attn.{p}.{kind}"] for p in "qkvo" for kind in ("weight", "bias"))
    )


def bidirectional_context(
    prev_out: Tensor | None,
    next_noise: Tensor | None,
    template: Tensor,
    params: Params,
    config: DenoiserConfig,
) -> Tensor:
    """Hidden-width context tokens ``[prev; next]`` for one slice.

    ``template`` is the current noise slice [B, L, 151]; a missing side
    becomes L zero tokens. Without bidirectional context only the previous
    side is used.
    """
    template = as_tensor(template)
    zeros = Tensor(np.zeros(template.shape[:-1] + (config.hidden_dim,)))
    for side in (prev_out, next_noise):
        if side is not None and as_tensor(side).shape != template.shape:
            raise ShapeMismatch(f"Context slice {side.shape} vs {template.shape}")
    prev = zeros if prev_out is None else _dense(prev_out, params, "ctx_prev")
    if not config.bidirectional:
        return prev
    nxt = zeros if next_noise is None else _dense(next_noise, params, "ctx_next")
    return concat([prev, nxt], axis=-2)


def condition_token(music, beat, t, params: Params, config: DenoiserConfig):
    """FiLM (gamma_raw, beta) pairs per decoder layer from the pooled condition.

    ``music`` is [B, L, F], ``beat`` [B, L] and ``t`` [B].
    """
    h = config.hidden_dim
    t_emb = Tensor(timestep_embedding(np.asarray(t), h))
    t_tok = _dense(gelu(_dense(t_emb, params, "time.0")), params, "time.1")
    pooled = Tensor(
        np.concatenate([music.mean(axis=-2), beat.mean(axis=-1)[..., None]], axis=-1)
    )
    fused = concat([pooled, t_tok], axis=-1)
    film_params = _dense(gelu(_dense(fused, params, "cond.0")), params, "cond.1")
    pairs = []
    for layer in range(config.decoder_layers):
        base = 2 * h * layer
        pairs.append(
            (
                film_params[..., base : base + h],
                film_params[..., base + h : base + 2 * h],
            )
        )
    return pairs


def denoise_slice(
    z_k,
    context: Tensor,
    c_k: np.ndarray,
    b_k: np.ndarray,
    t,
    params: Params,
    config: DenoiserConfig,
) -> Tensor:
    """Predict the clean slice [B, L, 151] from its noise, context and condition."""
    z_k = as_tensor(z_k)
    if z_k.shape[-1] != FRAME_DIMS:
        raise ShapeMismatch(f"Slice must end in {FRAME_DIMS} values: {z_k.shape}")
    c_k = np.asarray(c_k, dtype=np.float64)
    b_k = np.asarray(b_k, dtype=np.float64)
    if not config.use_beat:
        b_k = np.zeros_like(b_k)
    if c_k.shape[-2] != z_k.shape[-2] or c_k.shape[-1] != config.feature_dim:
        raise ShapeMismatch(f"Condition slice {c_k.shape} vs noise slice {z_k.shape}")
    h = _dense(z_k, params, "in_proj")
    weights = _attention_weights(params)
    h = h + cross_attention(h, context, context, config.heads, weights)
    per_frame = Tensor(np.concatenate([c_k, b_k[..., None]], axis=-1))
    h = h + _dense(per_frame, params, "cond_frame")
    tokens = condition_token(c_k, b_k, t, params, config)
    for layer, (gamma_raw, beta) in enumerate(tokens):
        u = film(h, gamma_raw + 1.0, beta)
        name = f"decoder.{layer}"
        h = h + _dense(gelu(_dense(u, params, f"{name}.fc1")), params, f"{name}.fc2")
    return _dense(h, params, "out_proj")


def local_info_decode(x: Tensor, params: Params, config: DenoiserConfig) -> Tensor:
    """Residual same-padded convolution stack over the whole sequence."""
    x = as_tensor(x)
    if x.shape[-1] != FRAME_DIMS:
        raise ShapeMismatch(f"Local decoder input must end in {FRAME_DIMS}")
    if not config.use_local_decoder:
        return x
    y = x
    for c in range(config.conv_layers):
        y = conv1d(y, params[f"lid.{c}.weight"], params[f"lid.{c}.bias"])
        if c < config.conv_layers - 1:
            y = gelu(y)
    return x + y


def forward_batch(
    z_t,
    t,
    music: np.ndarray,
    beat: np.ndarray,
    params: Params,
    config: DenoiserConfig,
) -> Tensor:
    """Denoise a batch ``z_t`` [B, N, 151] at steps ``t`` [B]."""
    z_t = as_tensor(z_t)
    if z_t.ndim != 3 or z_t.shape[-1] != FRAME_DIMS:
        raise ShapeMismatch(f"Batch must be B x N x {FRAME_DIMS}, got {z_t.shape}")
    config.validate(z_t.shape[1])
    t = np.broadcast_to(np.asarray(t), (z_t.shape[0],))
    bounds = partition_bounds(z_t.shape[1], config.num_slices)
    outputs: list[Tensor] = []
    prev = None
    for k, (a, b) in enumerate(bounds):
        z_k = z_t[:, a:b, :]
        nxt = None
        if k + 1 < len(bounds):
            nxt = z_t[:, bounds[k + 1][0] : bounds[k + 1][1], :]
        context = bidirectional_context(prev, nxt, z_k, params, config)
        prev = denoise_slice(
            z_k, context, music[:, a:b], beat[:, a:b], t, params, config
        )
        outputs.append(prev)
    x = local_info_decode(concat(outputs, axis=1), params, config)
    return concat([x[..., :POSE_DIMS], x[..., POSE_DIMS:].sigmoid()], axis=-1)


def forward(z_t, t: int, condition: Condition, params: Params, config: DenoiserConfig):
    """Denoise one sequence ``z_t`` [N, 151]; returns a Tensor [N, 151]."""
    z_t = as_tensor(z_t)
    if z_t.shape[0] != condition.n_frames:
        raise ShapeMismatch(
            f"Noise has {z_t.shape[0]} frames, condition {condition.n_frames}"
        )
    music, beat = condition.inputs()
    out = forward_batch(
        z_t.reshape((1,) + z_t.shape), [t], music[None], beat[None], params, config
    )
    return out[0]


def stack_conditions(conditions: Sequence[Condition]) -> tuple[np.ndarray, np.ndarray]:
    """Batch music [B, N, F] and beat [B, N] arrays."""
    inputs = [c.inputs() for c in conditions]
    return np.stack([m for m, _ in inputs]), np.stack([b for _, b in inputs])


class BADMDenoiser:
    """Inference wrapper: ``model(z_t, t, condition) -> x_hat`` as numpy."""

    def __init__(self, config: DenoiserConfig, params: Mapping[str, np.ndarray]):
        self.config = config.validate()
        expected = param_shapes(config)
        for name, shape in expected.items():
            if name not in params or tuple(np.shape(params[name])) != shape:
                raise ShapeMismatch(f"Parameter {name} missing or not {shape}")
        self.params = {
            name: np.asarray(params[name], dtype=np.float64) for name in expected
        }
        logger.debug(f"Denoiser ready with {param_count(config)} parameters")

    @classmethod
    def initialize(cls, config: DenoiserConfig, seed: int) -> "BADMDenoiser":
        return cls(config, init_params(config, seed))

    def __call__(self, z_t, t: int, condition: Condition) -> np.ndarray:
        with no_grad():
            return forward(z_t, t, condition, self.params, self.config).data
