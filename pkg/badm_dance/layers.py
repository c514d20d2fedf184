"""Differentiable building blocks used by the denoiser."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .autograd import Tensor, as_tensor, concat, softmax
from .errors import EmptyContext, ShapeMismatch
from .rng import Rng

_GELU_SCALE = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


def init_uniform(rng: Rng, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    """Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(fan_in)
    return (2.0 * rng.uniform(shape) - 1.0) * bound


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` over the last axis of ``x``."""
    x, weight = as_tensor(x), as_tensor(weight)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(
            f"Linear input {x.shape} does not match weight {weight.shape}"
        )
    if x.ndim == 1:
        out = (x.reshape(1, -1) @ weight).reshape(weight.shape[1])
    else:
        out = x @ weight
    if bias is not None:
        if as_tensor(bias).shape != (weight.shape[1],):
            raise ShapeMismatch(f"Bias must have {weight.shape[1]} values")
        out = out + bias
    return out


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    inner = (x + x**3 * _GELU_CUBIC) * _GELU_SCALE
    return x * 0.5 * (inner.tanh() + 1.0)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None) -> Tensor:
    """Temporal convolution with zero "same" padding.

    ``x`` is [..., N, C_in] and ``kernels`` is [k, C_in, C_out] with odd k; the
    output keeps length N.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if kernels.ndim != 3 or kernels.shape[1] != x.shape[-1]:
        raise ShapeMismatch(f"Kernel {kernels.shape} does not fit input {x.shape}")
    k = kernels.shape[0]
    if k % 2 == 0:
        raise ShapeMismatch(f"Kernel size must be odd, got {k}")
    half = k // 2
    n = x.shape[-2]
    if half:
        pad = Tensor(np.zeros(x.shape[:-2] + (half, x.shape[-1])))
        padded = concat([pad, x, pad], axis=-2)
    else:
        padded = x
    out = None
    for j in range(k):
        term = padded[..., j : j + n, :] @ kernels[j]
        out = term if out is None else out + term
    if bias is not None:
        out = out + bias
    return out


def film(h: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Feature-wise modulation ``gamma * h + beta``, broadcast over frames.

    ``gamma`` and ``beta`` are [..., C] for ``h`` [..., N, C].
    """
    h, gamma, beta = as_tensor(h), as_tensor(gamma), as_tensor(beta)
    if gamma.shape[-1] != h.shape[-1] or beta.shape[-1] != h.shape[-1]:
        raise ShapeMismatch(
            f"FiLM parameters {gamma.shape}/{beta.shape} do not match {h.shape}"
        )
    lead = gamma.shape[:-1]
    gamma = gamma.reshape(lead + (1, gamma.shape[-1]))
    beta = beta.reshape(beta.shape[:-1] + (1, beta.shape[-1]))
    return h * gamma + beta


class AttentionWeights(NamedTuple):
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor


def _split_heads(x: Tensor, heads: int) -> Tensor:
    lead, length, dim = x.shape[:-2], x.shape[-2], x.shape[-1]
    x = x.reshape(lead + (length, heads, dim // heads))
    return x.swapaxes(-3, -2)


def _merge_heads(x: Tensor) -> Tensor:
    x = x.swapaxes(-3, -2)
    lead, length = x.shape[:-3], x.shape[-3]
    return x.reshape(lead + (length, x.shape[-2] * x.shape[-1]))


def cross_attention(
    query: Tensor,
    keys: Tensor,
    values: Tensor,
    heads: int,
    weights: AttentionWeights,
) -> Tensor:
    """Multi-head scaled dot-product attention of ``query`` over ``keys``.

    ``query`` is [..., Lq, D]; ``keys`` and ``values`` are [..., Lk, D]. The
    result has the query's shape.
    """
    query, keys, values = as_tensor(query), as_tensor(keys), as_tensor(values)
    if keys.shape[-2] == 0:
        raise EmptyContext("Attention needs at least one context token")
    dim = query.shape[-1]
    if dim % heads:
        raise ShapeMismatch(f"Width {dim} is not divisible by {heads} heads")
    if keys.shape != values.shape or keys.shape[-1] != dim:
        raise ShapeMismatch(f"Keys {keys.shape} and values {values.shape} disagree")
    q = _split_heads(linear(query, weights.wq, weights.bq), heads)
    k = _split_heads(linear(keys, weights.wk, weights.bk), heads)
    v = _split_heads(linear(values, weights.wv, weights.bv), heads)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dim // heads))
    context = softmax(scores, axis=-1) @ v
    return linear(_merge_heads(context), weights.wo, weights.bo)


def timestep_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer steps ``t`` (scalar or [B]) -> [..., dim]."""
    t = np.asarray(t, dtype=np.float64)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = t[..., None] * freqs
    emb = np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros(emb.shape[:-1] + (1,))], axis=-1)
    return emb
