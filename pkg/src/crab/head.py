"""Class-representation head: token-wise and sentence-wise matching scores,
the aggregation network, and the fused normalised output.

Shapes for one example (a leading batch axis is also accepted everywhere)::

    b_prime  k x (N-1)        token embeddings without ⟨CLS⟩
    e        k x 1            ⟨CLS⟩ embedding
    A[i]     c x k            one token-wise class representation per head
    T[i]     c x (N-1)        A[i] @ b_prime
    T'[i]    c x h1           leaky(T[i] @ W_fc1 + b_fc1), W_fc1 shared by heads
    T''      c x (m*h1)       column concatenation of the T'[i]
    V        c x h2           leaky(T'' @ W_fc2 + b_fc2)
    z        c x 1            V @ W_lin
    w        c x 1            S @ e
    s        c x 1            z/(|z|+eps) + w/(|w|+eps)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

import crab.tensor as T
from crab.encoder import EncodedSequence, split_cls, xavier
from crab.errors import ConfigError, DimensionError
from crab.rng import XorShift64Star
from crab.tensor import Tensor

NORM_EPS = 1e-12
OUTPUT_MODES = ("softmax", "sigmoid")


@dataclass(frozen=True)
class CrabConfig:
    c: int
    m: int = 4
    n_minus_1: int = 63
    k: int = 64
    h1: int = 64
    h2: int = 128
    alpha: float = 0.01
    output_mode: str = "softmax"
    sentence_layer_enabled: bool = True

    def __post_init__(self):
        for name in ("c", "m", "n_minus_1", "k", "h1", "h2"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.output_mode not in OUTPUT_MODES:
            raise ConfigError(f"output_mode must be one of {OUTPUT_MODES}, got {self.output_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CrabParams:
    A: list[Tensor]
    S: Tensor
    W_fc1: Tensor
    b_fc1: Tensor
    W_fc2: Tensor
    b_fc2: Tensor
    W_lin: Tensor

    def named(self) -> dict[str, Tensor]:
        out = {f"A{i}": a for i, a in enumerate(self.A)}
        out.update(S=self.S, W_fc1=self.W_fc1, b_fc1=self.b_fc1, W_fc2=self.W_fc2, b_fc2=self.b_fc2,
                   W_lin=self.W_lin)
        return out

    def check(self, config: CrabConfig) -> None:
        for name, t in self.named().items():
            want = expected_shapes(config).get(name)
            if want is None or t.shape != want:
                raise DimensionError(f"head parameter {name} has shape {t.shape}, config expects {want}")

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray], m: int) -> CrabParams:
        def leaf(name):
            return Tensor(arrays[name], requires_grad=True)

        return cls([leaf(f"A{i}") for i in range(m)], leaf("S"), leaf("W_fc1"), leaf("b_fc1"),
                   leaf("W_fc2"), leaf("b_fc2"), leaf("W_lin"))

    @classmethod
    def init(cls, config: CrabConfig, rng: XorShift64Star) -> CrabParams:
        c, k = config.c, config.k
        A = [xavier(rng, c, k) for _ in range(config.m)]
        S = xavier(rng, c, k)
        W_fc1 = xavier(rng, config.n_minus_1, config.h1)
        W_fc2 = xavier(rng, config.m * config.h1, config.h2)
        W_lin = xavier(rng, config.h2, 1)
        return cls(A, S, W_fc1, Tensor(np.zeros(config.h1), requires_grad=True),
                   W_fc2, Tensor(np.zeros(config.h2), requires_grad=True), W_lin)


def expected_shapes(config: CrabConfig) -> dict[str, tuple[int, ...]]:
    shapes = {f"A{i}": (config.c, config.k) for i in range(config.m)}
    shapes.update(S=(config.c, config.k), W_fc1=(config.n_minus_1, config.h1), b_fc1=(config.h1,),
                  W_fc2=(config.m * config.h1, config.h2), b_fc2=(config.h2,), W_lin=(config.h2, 1))
    return shapes


def token_interactions(b_prime: Tensor, A: Sequence[Tensor]) -> list[Tensor]:
    """Matching score of every class against every token, one map per head."""
    return [T.matmul(a, b_prime) for a in A]


def sentence_interaction(e: Tensor, S: Tensor) -> Tensor:
    return T.matmul(S, e)


def aggregate(interactions: Sequence[Tensor], params: CrabParams, config: CrabConfig) -> Tensor:
    """Collapse the per-head token maps into one score per class."""
    if len(interactions) != config.m or len(params.A) != config.m:
        raise DimensionError(f"expected {config.m} heads, got {len(interactions)} maps / {len(params.A)} A")
    for t in interactions:
        if t.shape[-2:] != (config.c, config.n_minus_1):
            raise DimensionError(f"interaction map {t.shape} vs config ({config.c}, {config.n_minus_1})")
    hidden = [T.leaky_relu(t @ params.W_fc1 + params.b_fc1, config.alpha) for t in interactions]
    joined = T.concat(hidden, axis=-1)
    v = T.leaky_relu(joined @ params.W_fc2 + params.b_fc2, config.alpha)
    return v @ params.W_lin


def unit(x: Tensor) -> Tensor:
    """``x / (|x|_2 + eps)`` per column vector."""
    return x / (T.l2_norm(x, axis=-2) + NORM_EPS)


def fuse_scores(z: Tensor, w: Tensor | None, config: CrabConfig) -> tuple[Tensor, Tensor]:
    """Return ``(probs, pre_activation)``.

    With the sentence layer disabled ``w`` is ignored and only ``z`` is normalised.
    """
    s = unit(z)
    if config.sentence_layer_enabled:
        if w is None or w.shape != z.shape:
            raise DimensionError(f"sentence scores {None if w is None else w.shape} vs token scores {z.shape}")
        s = s + unit(w)
    if config.output_mode == "sigmoid":
        return T.sigmoid(s), s
    return T.exp(T.log_softmax(s, axis=-2)), s


def class_scores(seq: EncodedSequence, params: CrabParams, config: CrabConfig) -> tuple[Tensor, Tensor]:
    """Full head: ``(probs, pre_activation)``; both are ``c x 1`` (or ``batch x c x 1``)."""
    if seq.b.shape[-2] != config.k or seq.b.shape[-1] != config.n_minus_1 + 1:
        raise DimensionError(f"encoded sequence {seq.b.shape} vs head (k={config.k}, N={config.n_minus_1 + 1})")
    e, b_prime = split_cls(seq)
    z = aggregate(token_interactions(b_prime, params.A), params, config)
    w = sentence_interaction(e, params.S) if config.sentence_layer_enabled else None
    return fuse_scores(z, w, config)


def forward(seq: EncodedSequence, params: CrabParams, config: CrabConfig) -> Tensor:
    return class_scores(seq, params, config)[0]


def predict(probs) -> int | np.ndarray:
    """Arg-max class; ``np.argmax`` already resolves ties to the lowest id.

    Accepts ``c``, ``c x 1`` or ``batch x c x 1`` probabilities.
    """
    p = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    if p.ndim == 3:
        return np.argmax(p[..., 0], axis=-1)
    return int(np.argmax(p.reshape(-1)))
