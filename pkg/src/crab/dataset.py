"""Labelled corpora: the TSV file format, class counts, stratified splits and batching.

Corpus file layout (UTF-8)::

    #classes<TAB>normal<TAB>abusive<TAB>spam<TAB>hateful
    normal<TAB>some tweet text
    spam<TAB>another\\tone with an escaped tab

Inside text, backslash, tab, newline and carriage return are written as
``\\\\``, ``\\t``, ``\\n`` and ``\\r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TypeVar

from crab.errors import ConfigError, LabelError, ParseError, StratificationError
from crab.rng import XorShift64Star, derive_seed

HEADER_TAG = "#classes"

_ESCAPES = {"\\": "\\\\", "\t": "\\t", "\n": "\\n", "\r": "\\r"}
_UNESCAPES = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}

T = TypeVar("T")


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: int


@dataclass
class LabeledCorpus:
    examples: list[LabeledExample]
    class_names: list[str]

    def __post_init__(self):
        if not self.class_names:
            raise ConfigError("a corpus needs at least one class name")
        if len(set(self.class_names)) != len(self.class_names):
            raise ConfigError(f"duplicate class names in {self.class_names}")
        c = len(self.class_names)
        for i, ex in enumerate(self.examples):
            if not 0 <= ex.label < c:
                raise LabelError(f"example {i} has label {ex.label} outside [0, {c})")

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def texts(self) -> list[str]:
        return [ex.text for ex in self.examples]

    @property
    def labels(self) -> list[int]:
        return [ex.label for ex in self.examples]

    def subset(self, indices: Sequence[int]) -> LabeledCorpus:
        return LabeledCorpus([self.examples[i] for i in indices], list(self.class_names))

    def with_texts(self, texts: Sequence[str]) -> LabeledCorpus:
        return LabeledCorpus([LabeledExample(t, ex.label) for t, ex in zip(texts, self.examples, strict=True)],
                             list(self.class_names))


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.ratios) != 3 or any(r < 0 for r in self.ratios):
            raise ConfigError(f"need three non-negative ratios, got {self.ratios}")
        if abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"ratios must sum to 1, got {self.ratios} (sum {sum(self.ratios)})")


def escape_text(text: str) -> str:
    return "".join(_ESCAPES.get(ch, ch) for ch in text)


def unescape_text(text: str, line: int | None = None) -> str:
    out, i = [], 0
    while i < len(text):
        ch = text[i]
        if ch == "\\":
            if i + 1 >= len(text) or text[i + 1] not in _UNESCAPES:
                raise ParseError(f"bad escape sequence at column {i + 1}", line)
            out.append(_UNESCAPES[text[i + 1]])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def parse_corpus(content: str) -> LabeledCorpus:
    lines = content.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("missing #classes header", 1)
    header = lines[0].rstrip("\r").split("\t")
    if header[0] != HEADER_TAG or len(header) < 2 or not all(header[1:]):
        raise ParseError(f"header must be '{HEADER_TAG}<TAB>name...'", 1)
    names = header[1:]
    if len(set(names)) != len(names):
        raise ParseError(f"duplicate class names in header: {names}", 1)
    index = {name: i for i, name in enumerate(names)}
    examples = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        label, sep, text = line.partition("\t")
        if not sep:
            raise ParseError("expected label<TAB>text", lineno)
        if label not in index:
            raise LabelError(f"unknown label {label!r}; declared classes are {names}", lineno)
        examples.append(LabeledExample(unescape_text(text, lineno), index[label]))
    return LabeledCorpus(examples, names)


def load_corpus(path: str | Path) -> LabeledCorpus:
    try:
        content = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc})") from None
    return parse_corpus(content)


def dump_corpus(corpus: LabeledCorpus) -> str:
    rows = ["\t".join([HEADER_TAG, *corpus.class_names])]
    rows += [f"{corpus.class_names[ex.label]}\t{escape_text(ex.text)}" for ex in corpus.examples]
    return "\n".join(rows) + "\n"


def save_corpus(corpus: LabeledCorpus, path: str | Path) -> None:
    Path(path).write_text(dump_corpus(corpus), encoding="utf-8", newline="")


def class_distribution(corpus: LabeledCorpus) -> list[int]:
    counts = [0] * corpus.num_classes
    for ex in corpus.examples:
        counts[ex.label] += 1
    return counts


def _floor(x: float) -> int:
    # products like 0.29 * 100 land a hair under the integer
    return math.floor(x + 1e-9)


def split_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor-then-remainder allocation of ``n`` items; the last set absorbs rounding."""
    first = _floor(ratios[0] * n)
    second = _floor((ratios[0] + ratios[1]) * n) - first
    return first, second, n - first - second


def stratified_split_indices(labels: Sequence[int], class_names: Sequence[str],
                             spec: SplitSpec) -> tuple[list[int], list[int], list[int]]:
    """Per-class seeded shuffle, then floor allocation. Each returned list is in corpus order."""
    by_class: list[list[int]] = [[] for _ in class_names]
    for i, y in enumerate(labels):
        by_class[y].append(i)
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for k, members in enumerate(by_class):
        if not members:
            raise StratificationError(f"class {class_names[k]!r} has no examples")
        XorShift64Star(derive_seed(spec.seed, k)).shuffle(members)
        a, b, _ = split_sizes(len(members), spec.ratios)
        parts[0].extend(members[:a])
        parts[1].extend(members[a:a + b])
        parts[2].extend(members[a + b:])
    return tuple(sorted(p) for p in parts)  # type: ignore[return-value]


def stratified_split(corpus: LabeledCorpus, spec: SplitSpec) -> tuple[LabeledCorpus, LabeledCorpus, LabeledCorpus]:
    idx = stratified_split_indices(corpus.labels, corpus.class_names, spec)
    return tuple(corpus.subset(i) for i in idx)  # type: ignore[return-value]


def batches(items: Sequence[T], batch_size: int, shuffle_seed: int | None = None) -> list[list[T]]:
    """Consecutive chunks of a seeded permutation; the final short batch is kept.

    ``shuffle_seed=None`` keeps the input order.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(len(items)))
    if shuffle_seed is not None:
        XorShift64Star(shuffle_seed).shuffle(order)
    return [[items[i] for i in order[s:s + batch_size]] for s in range(0, len(order), batch_size)]
