"""Seeded synthetic corpora with class-correlated vocabularies, for experiments and tests."""

from __future__ import annotations

from typing import Sequence

from crab.dataset import LabeledCorpus, LabeledExample
from crab.rng import XorShift64Star

TABLE1_CLASSES = ("normal", "abusive", "spam", "hateful")
TABLE1_COUNTS = (53851, 27150, 14030, 4965)

_SYLLABLES = ("ka", "lo", "mi", "ren", "tu", "zo", "vel", "sha", "pri", "dun", "eko", "bax")


def _word(rng: XorShift64Star) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(3))


def synthetic_corpus(counts: Sequence[int], seed: int, *, class_names: Sequence[str] | None = None,
                     class_vocab: int = 6, shared_vocab: int = 12, min_len: int = 4, max_len: int = 10,
                     signal: float = 0.5) -> LabeledCorpus:
    """Corpus where each token comes from the class's own word list with probability ``signal``,
    otherwise from a list shared by all classes.

    Word lists are disjoint. Rows are shuffled so labels are interleaved.
    """
    names = tuple(class_names) if class_names is not None else tuple(f"class{k}" for k in range(len(counts)))
    if len(names) != len(counts):
        raise ValueError(f"{len(counts)} counts for {len(names)} class names")
    if not 0.0 <= signal <= 1.0:
        raise ValueError(f"signal must lie in [0, 1], got {signal}")
    rng = XorShift64Star(seed)
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < shared_vocab + class_vocab * len(counts):
        w = _word(rng)
        if w not in seen:
            seen.add(w)
            words.append(w)
    shared = words[:shared_vocab]
    own = [words[shared_vocab + k * class_vocab: shared_vocab + (k + 1) * class_vocab] for k in range(len(counts))]

    examples = []
    for k, n in enumerate(counts):
        for _ in range(n):
            length = min_len + rng.below(max_len - min_len + 1)
            toks = [rng.choice(own[k]) if rng.random() < signal else rng.choice(shared) for _ in range(length)]
            examples.append(LabeledExample(" ".join(toks), k))
    rng.shuffle(examples)
    return LabeledCorpus(examples, list(names))


def separable_corpus(seed: int, n: int = 40, num_classes: int = 4) -> LabeledCorpus:
    """Balanced corpus in which every token is class-specific."""
    per = [n // num_classes + (1 if k < n % num_classes else 0) for k in range(num_classes)]
    return synthetic_corpus(per, seed, signal=1.0, shared_vocab=0, min_len=3, max_len=6)


def imbalanced_corpus(seed: int, n: int = 400, signal: float = 0.5) -> LabeledCorpus:
    """Four classes in proportion 8:4:2:1 named after the Twitter corpus classes."""
    weights = (8, 4, 2, 1)
    per = [n * w // sum(weights) for w in weights]
    per[0] += n - sum(per)
    return synthetic_corpus(per, seed, class_names=TABLE1_CLASSES, signal=signal)


def dummy_rows(counts: Sequence[int], class_names: Sequence[str]) -> LabeledCorpus:
    """One placeholder row per example, text ``row<i>``; used for split bookkeeping checks."""
    examples, i = [], 0
    for k, n in enumerate(counts):
        for _ in range(n):
            examples.append(LabeledExample(f"row{i}", k))
            i += 1
    return LabeledCorpus(examples, list(class_names))
