"""Tweet normalisation, tokenisation, vocabulary and fixed-length id encoding."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from crab.errors import ConfigError, ParseError

PAD, UNK, CLS = "⟨PAD⟩", "⟨UNK⟩", "⟨CLS⟩"
RESERVED = (PAD, UNK, CLS)
PAD_ID, UNK_ID, CLS_ID = 0, 1, 2

RULES_HEADER = "# crab-norm-rules v1"

_SPECIAL_RE = re.compile(r"⟨[A-Z_]+⟩")
_TOKEN_RE = re.compile(r"⟨[A-Z_]+⟩|\w+|[^\w\s]")
_BRACKETED_RE = re.compile(r"⟨[A-Z_]+⟩|[⟨⟩]")
_HASHTAG_RE = re.compile(r"#(\w+)")
# presentation selectors, joiners and skin tones carry no sentiment of their own
_MODIFIERS_RE = re.compile("[️︎‍\U0001f3fb-\U0001f3ff]")
_RANGE_RE = re.compile(r"U\+([0-9A-Fa-f]{4,6})(?:\.\.U\+([0-9A-Fa-f]{4,6}))?")
_MAX_PASSES = 8


@dataclass(frozen=True)
class Rule:
    pattern: str
    token: str
    regex: re.Pattern = field(compare=False, repr=False)


def _compile(pattern: str) -> re.Pattern:
    if pattern.startswith("re:"):
        return re.compile(pattern[3:], re.IGNORECASE)
    m = _RANGE_RE.fullmatch(pattern)
    if m:
        lo = chr(int(m.group(1), 16))
        hi = chr(int(m.group(2) or m.group(1), 16))
        return re.compile(f"[{re.escape(lo)}-{re.escape(hi)}]")
    if pattern.isascii():
        # a word-character edge must not be glued to a word ("XD" in "XDR")
        before = r"(?<!\w)" if re.match(r"\w", pattern) else ""
        after = r"(?!\w)" if re.match(r"\w", pattern[-1]) else ""
        return re.compile(before + re.escape(pattern) + after, re.IGNORECASE)
    return re.compile(re.escape(pattern))


@dataclass(frozen=True)
class NormRules:
    """An ordered rule table plus the source text it was parsed from."""

    rules: tuple[Rule, ...]
    source: str = ""
    url_token: str = "⟨URL⟩"
    mention_token: str = "⟨USER⟩"

    @property
    def tokens(self) -> frozenset[str]:
        """Every special token normalisation can emit, reserved ones included."""
        return frozenset(r.token for r in self.rules) | frozenset(RESERVED)

    @classmethod
    def parse(cls, text: str) -> NormRules:
        rules = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if lineno == 1 and line.startswith("# crab-norm-rules") and line.strip() != RULES_HEADER:
                raise ParseError(f"unsupported rule file version {line.strip()!r}", lineno)
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise ParseError("expected pattern<TAB>token", lineno)
            pattern, token = parts[0], parts[1].strip()
            if not _SPECIAL_RE.fullmatch(token):
                raise ParseError(f"token {token!r} is not of the form ⟨NAME⟩", lineno)
            try:
                regex = _compile(pattern)
            except re.error as exc:
                raise ParseError(f"bad pattern {pattern!r}: {exc}", lineno) from None
            rules.append(Rule(pattern, token, regex))
        return cls(tuple(rules), text)

    @classmethod
    def load(cls, path: str | Path) -> NormRules:
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> NormRules:
        text = resources.files("crab").joinpath("data/norm_rules.tsv").read_text(encoding="utf-8")
        return cls.parse(text)


def _one_pass(text: str, rules: NormRules) -> str:
    known = rules.tokens

    def unbracket(m: re.Match) -> str:
        s = m.group(0)
        if s in known:
            return s
        return s[1:-1] if len(s) > 1 else {"⟨": "<", "⟩": ">"}[s]

    text = _MODIFIERS_RE.sub("", text)
    text = _BRACKETED_RE.sub(unbracket, text)

    # (priority, regex, replacement or None for hashtags); lower priority wins ties
    sources = [(-1, _SPECIAL_RE, "")]
    sources += [(i, r.regex, r.token) for i, r in enumerate(rules.rules)]
    sources.append((len(rules.rules), _HASHTAG_RE, None))
    pending = {prio: rx.search(text) for prio, rx, _ in sources}
    by_prio = {prio: (rx, rep) for prio, rx, rep in sources}

    out, cursor = [], 0
    while True:
        live = [(m.start(), -(m.end() - m.start()), prio) for prio, m in pending.items() if m is not None]
        if not live:
            break
        start, neg_len, prio = min(live)
        m = pending[prio]
        out.append(text[cursor:start].lower())
        rep = by_prio[prio][1]
        if rep is None:
            out.append(f" {m.group(1).lower()} ")
        elif rep == "":
            out.append(f" {m.group(0)} ")
        else:
            out.append(f" {rep} ")
        cursor = m.end() if m.end() > start else start + 1
        for p, pm in pending.items():
            if pm is not None and pm.start() < cursor:
                pending[p] = by_prio[p][0].search(text, cursor)
    out.append(text[cursor:].lower())
    return " ".join("".join(out).split())


def normalize(raw: str, rules: NormRules | None = None) -> str:
    """Map links, mentions and emoji/emoticons to special tokens, strip hashtag marks,
    lowercase and collapse whitespace.

    No stemming, lemmatisation or stopword removal happens here. The result is a
    fixed point: ``normalize(normalize(x)) == normalize(x)``.
    """
    rules = rules or default_rules()
    text = raw
    for _ in range(_MAX_PASSES):
        nxt = _one_pass(text, rules)
        if nxt == text:
            break
        text = nxt
    return text


_DEFAULT: NormRules | None = None


def default_rules() -> NormRules:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = NormRules.default()
    return _DEFAULT


def tokenize(text: str) -> list[str]:
    """Split on whitespace and detach punctuation; ``⟨NAME⟩`` tokens stay whole.

    >>> tokenize("don't stop.")
    ['don', "'", 't', 'stop', '.']
    """
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


@dataclass
class Vocab:
    """Bijective token/id map with the reserved tokens at ids 0, 1, 2."""

    itos: list[str]
    stoi: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.itos[:3]) != RESERVED:
            raise ConfigError(f"vocab must start with {RESERVED}, got {self.itos[:3]}")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ConfigError("vocab contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def dumps(self) -> str:
        return "".join(tok + "\n" for tok in self.itos)

    @classmethod
    def loads(cls, text: str) -> Vocab:
        return cls(text.split("\n")[:-1] if text.endswith("\n") else text.split("\n"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Vocab:
        return cls.loads(Path(path).read_text(encoding="utf-8"))


def build_vocab(corpus: Iterable[Sequence[str]], min_count: int = 1, max_size: int | None = None) -> Vocab:
    """Most frequent tokens first, ties lexicographic, after the reserved tokens.

    ``max_size`` caps the number of non-reserved entries.
    """
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    counts = Counter(tok for tokens in corpus for tok in tokens if tok not in RESERVED)
    ranked = sorted((tok for tok, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocab(list(RESERVED) + ranked)


def encode_ids(tokens: Sequence[str], vocab: Vocab, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """⟨CLS⟩ followed by at most ``max_len - 1`` ids, right-truncated and ⟨PAD⟩-filled.

    Returns ``(ids, mask)``, both int64 of length ``max_len``.
    """
    if max_len < 2:
        raise ConfigError(f"max_len must be >= 2, got {max_len}")
    body = [vocab.id(t) for t in tokens[: max_len - 1]]
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.int64)
    ids[0] = CLS_ID
    ids[1:1 + len(body)] = body
    mask[:1 + len(body)] = 1
    return ids, mask


def decode_ids(ids: Sequence[int], vocab: Vocab) -> list[str]:
    """Tokens for the real positions, reserved tokens dropped."""
    return [vocab.itos[i] for i in ids if i not in (PAD_ID, CLS_ID)]
