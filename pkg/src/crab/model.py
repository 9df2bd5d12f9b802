"""A complete classifier: normalisation rules, vocabulary, encoder and head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from crab import head
from crab.encoder import EncoderConfig, ToyEncoder
from crab.errors import ConfigError
from crab.head import CrabConfig, CrabParams
from crab.rng import XorShift64Star, derive_seed
from crab.tensor import Tensor
from crab.text import NormRules, Vocab, encode_ids, normalize, tokenize

ENCODER_INIT_STREAM = 1
HEAD_INIT_STREAM = 2


@dataclass
class CrabModel:
    encoder: ToyEncoder
    head_params: CrabParams
    head_config: CrabConfig
    vocab: Vocab
    rules: NormRules
    class_names: list[str]

    def __post_init__(self):
        enc = self.encoder.config
        if enc.dim != self.head_config.k or enc.max_len != self.head_config.n_minus_1 + 1:
            raise ConfigError(f"encoder (k={enc.dim}, N={enc.max_len}) does not feed head "
                              f"(k={self.head_config.k}, N-1={self.head_config.n_minus_1})")
        if enc.vocab_size != len(self.vocab):
            raise ConfigError(f"encoder vocab_size {enc.vocab_size} != vocab length {len(self.vocab)}")
        if self.head_config.c != len(self.class_names):
            raise ConfigError(f"head has {self.head_config.c} classes, names list {len(self.class_names)}")
        self.head_params.check(self.head_config)

    @classmethod
    def init(cls, vocab: Vocab, rules: NormRules, class_names: Sequence[str], seed: int, *,
             dim: int = 64, max_len: int = 64, layers: int = 2, attn_heads: int = 2, heads: int = 4,
             h1: int = 64, h2: int = 128, alpha: float = 0.01, output_mode: str = "softmax",
             sentence_layer: bool = True) -> CrabModel:
        enc_cfg = EncoderConfig(len(vocab), dim=dim, max_len=max_len, layers=layers, heads=attn_heads, alpha=alpha)
        head_cfg = CrabConfig(c=len(class_names), m=heads, n_minus_1=max_len - 1, k=dim, h1=h1, h2=h2,
                              alpha=alpha, output_mode=output_mode, sentence_layer_enabled=sentence_layer)
        encoder = ToyEncoder.init(enc_cfg, XorShift64Star(derive_seed(seed, ENCODER_INIT_STREAM)))
        params = CrabParams.init(head_cfg, XorShift64Star(derive_seed(seed, HEAD_INIT_STREAM)))
        return cls(encoder, params, head_cfg, vocab, rules, list(class_names))

    @property
    def max_len(self) -> int:
        return self.encoder.config.max_len

    def parameters(self) -> dict[str, Tensor]:
        out = {f"encoder.{k}": v for k, v in self.encoder.parameters().items()}
        out.update({f"head.{k}": v for k, v in self.head_params.named().items()})
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.parameters().items()}

    def restore(self, arrays: dict[str, np.ndarray]) -> None:
        for k, t in self.parameters().items():
            t.data = arrays[k].copy()

    def encode_texts(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Normalise, tokenise and id-encode raw texts into ``[batch, N]`` arrays."""
        n = self.max_len
        ids = np.zeros((len(texts), n), dtype=np.int64)
        mask = np.zeros((len(texts), n), dtype=np.int64)
        for i, text in enumerate(texts):
            ids[i], mask[i] = encode_ids(tokenize(normalize(text, self.rules)), self.vocab, n)
        return ids, mask

    def scores(self, ids: np.ndarray, mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """``(probs, pre_activation)`` on the tape, each ``[batch, c, 1]``."""
        return head.class_scores(self.encoder.encode(ids, mask), self.head_params, self.head_config)

    def predict_proba(self, ids: np.ndarray, mask: np.ndarray, chunk: int = 256) -> np.ndarray:
        """``[batch, c]`` probabilities, evaluated in chunks."""
        out = [self.scores(ids[s:s + chunk], mask[s:s + chunk])[0].data[..., 0]
               for s in range(0, len(ids), chunk)]
        return np.concatenate(out) if out else np.zeros((0, self.head_config.c))

    def predict_texts(self, texts: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        ids, mask = self.encode_texts(texts)
        probs = self.predict_proba(ids, mask)
        return np.argmax(probs, axis=-1), probs
