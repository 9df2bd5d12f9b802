"""Contextual token encoders producing the embedding matrix consumed by the head.

An encoder maps ``(ids, mask)`` of length ``N`` to a ``k x N`` matrix whose
column ``i`` embeds token ``i``; column 0 is the ⟨CLS⟩ position and columns
with ``mask == 0`` are exactly zero. Batched inputs carry a leading axis.

:class:`ToyEncoder` is a small post-norm transformer trained from scratch.
Anything satisfying :class:`Encoder` can replace it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

import crab.tensor as T
from crab.errors import ConfigError, ContractError, DimensionError
from crab.rng import XorShift64Star
from crab.tensor import Tensor


@dataclass
class EncodedSequence:
    """``b`` is ``[k, N]`` or ``[batch, k, N]``; ``mask`` is ``[N]`` or ``[batch, N]``."""

    b: Tensor
    mask: np.ndarray


class Encoder(Protocol):
    dim: int
    max_len: int

    def encode(self, ids: np.ndarray, mask: np.ndarray) -> EncodedSequence: ...

    def parameters(self) -> dict[str, Tensor]: ...


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    dim: int = 64
    max_len: int = 64
    layers: int = 2
    heads: int = 2
    alpha: float = 0.01
    ln_eps: float = 1e-5

    def __post_init__(self):
        if self.layers < 1:
            raise ConfigError(f"need at least one layer, got {self.layers}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be >= 2, got {self.max_len}")
        if self.vocab_size < 3 or self.dim < 1 or self.heads < 1:
            raise ConfigError(f"bad encoder extents: {self}")
        if self.dim % self.heads:
            raise ConfigError(f"dim {self.dim} not divisible by {self.heads} attention heads")


LAYER_WEIGHTS = ("wq", "wk", "wv", "wo", "ff1", "ff2", "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias")


def sinusoidal_positions(n: int, dim: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    rate = np.exp(-math.log(10000.0) * (2 * (np.arange(dim) // 2)) / dim)
    angle = pos * rate[None, :]
    return np.where(np.arange(dim) % 2 == 0, np.sin(angle), np.cos(angle))


def xavier(rng: XorShift64Star, rows: int, cols: int) -> Tensor:
    limit = math.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, (rows, cols)), requires_grad=True)


def expected_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    k = config.dim
    out = {"embedding": (config.vocab_size, k)}
    per_layer = {"wq": (k, k), "wk": (k, k), "wv": (k, k), "wo": (k, k), "ff1": (k, 4 * k), "ff2": (4 * k, k),
                 "ln1_gain": (k,), "ln1_bias": (k,), "ln2_gain": (k,), "ln2_bias": (k,)}
    for i in range(config.layers):
        out.update({f"layer{i}.{name}": shape for name, shape in per_layer.items()})
    return out


@dataclass
class ToyEncoderParams:
    embedding: Tensor
    layers: list[dict[str, Tensor]]

    def named(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        for i, layer in enumerate(self.layers):
            out.update({f"layer{i}.{name}": layer[name] for name in LAYER_WEIGHTS})
        return out

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], n_layers: int) -> ToyEncoderParams:
        layers = [{name: Tensor(arrays[f"layer{i}.{name}"], requires_grad=True) for name in LAYER_WEIGHTS}
                  for i in range(n_layers)]
        return cls(Tensor(arrays["embedding"], requires_grad=True), layers)

    @classmethod
    def init(cls, config: EncoderConfig, rng: XorShift64Star) -> ToyEncoderParams:
        k = config.dim
        embedding = xavier(rng, config.vocab_size, k)
        layers = []
        for _ in range(config.layers):
            layers.append({
                "wq": xavier(rng, k, k), "wk": xavier(rng, k, k),
                "wv": xavier(rng, k, k), "wo": xavier(rng, k, k),
                "ff1": xavier(rng, k, 4 * k), "ff2": xavier(rng, 4 * k, k),
                "ln1_gain": Tensor(np.ones(k), requires_grad=True),
                "ln1_bias": Tensor(np.zeros(k), requires_grad=True),
                "ln2_gain": Tensor(np.ones(k), requires_grad=True),
                "ln2_bias": Tensor(np.zeros(k), requires_grad=True),
            })
        return cls(embedding, layers)


class ToyEncoder:
    """Token + sinusoidal position embeddings followed by ``layers`` blocks of

    masked multi-head self-attention, residual, layer norm, LeakyReLU
    feed-forward, residual, layer norm.
    """

    def __init__(self, config: EncoderConfig, params: ToyEncoderParams):
        self.config = config
        self.params = params
        self.positions = sinusoidal_positions(config.max_len, config.dim)

    @classmethod
    def init(cls, config: EncoderConfig, rng: XorShift64Star) -> ToyEncoder:
        return cls(config, ToyEncoderParams.init(config, rng))

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def max_len(self) -> int:
        return self.config.max_len

    def parameters(self) -> dict[str, Tensor]:
        return self.params.named()

    def _attention(self, x: Tensor, layer: dict[str, Tensor], key_mask: np.ndarray) -> Tensor:
        h = self.config.heads
        d = self.config.dim // h
        q, k, v = x @ layer["wq"], x @ layer["wk"], x @ layer["wv"]
        outs = []
        for j in range(h):
            qj, kj, vj = (T.take(t, j * d, (j + 1) * d) for t in (q, k, v))
            scores = (qj @ T.transpose(kj)) * (1.0 / math.sqrt(d))
            outs.append(T.masked_softmax(scores, key_mask) @ vj)
        return T.concat(outs) @ layer["wo"]

    def attention_weights(self, ids: np.ndarray, mask: np.ndarray, layer: int = 0) -> list[np.ndarray]:
        """Per-head attention matrices of one layer (rows are queries)."""
        x, key_mask = self._embed(ids, mask)
        for lw in self.params.layers[:layer]:
            x = self._block(x, lw, key_mask)
        lw = self.params.layers[layer]
        h = self.config.heads
        d = self.config.dim // h
        q, k = (x @ lw["wq"]).data, (x @ lw["wk"]).data
        out = []
        for j in range(h):
            s = q[..., j * d:(j + 1) * d] @ np.swapaxes(k[..., j * d:(j + 1) * d], -1, -2) / math.sqrt(d)
            out.append(T.masked_softmax(Tensor(s), key_mask).data)
        return out

    def _block(self, x: Tensor, layer: dict[str, Tensor], key_mask: np.ndarray) -> Tensor:
        eps, alpha = self.config.ln_eps, self.config.alpha
        x = T.layer_norm(x + self._attention(x, layer, key_mask), layer["ln1_gain"], layer["ln1_bias"], eps)
        ff = T.leaky_relu(x @ layer["ff1"], alpha) @ layer["ff2"]
        return T.layer_norm(x + ff, layer["ln2_gain"], layer["ln2_bias"], eps)

    def _embed(self, ids: np.ndarray, mask: np.ndarray) -> tuple[Tensor, np.ndarray]:
        ids = np.asarray(ids)
        mask = np.asarray(mask)
        n = self.config.max_len
        if ids.shape != mask.shape or ids.shape[-1] != n or ids.ndim not in (1, 2):
            raise DimensionError(f"ids {ids.shape} / mask {mask.shape} must both end in max_len {n}")
        if not np.all(mask[..., 0] == 1):
            raise ContractError("position 0 (⟨CLS⟩) must be unmasked")
        x = T.embedding(self.params.embedding, ids) + self.positions
        # keys broadcast over query rows
        return x, mask[..., None, :].astype(bool)

    def encode(self, ids: np.ndarray, mask: np.ndarray) -> EncodedSequence:
        x, key_mask = self._embed(ids, mask)
        for layer in self.params.layers:
            x = self._block(x, layer, key_mask)
        x = x * np.asarray(mask, dtype=np.float64)[..., :, None]
        return EncodedSequence(T.transpose(x), np.asarray(mask))


def split_cls(seq: EncodedSequence) -> tuple[Tensor, Tensor]:
    """Column 0 (the sentence embedding) and columns 1..N-1 (the token embeddings)."""
    n = seq.b.shape[-1]
    if n < 2:
        raise ContractError(f"need at least 2 positions to split off ⟨CLS⟩, got {n}")
    return T.take(seq.b, 0, 1), T.take(seq.b, 1, n)
