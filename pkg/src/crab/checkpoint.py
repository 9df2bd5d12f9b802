"""Single-file binary model format.

Layout (little-endian)::

    b"CRAB" | u32 version | u32 section count
    per section: u16 name length | name (utf-8) | u64 offset | u64 length | u32 crc32
    section payloads, in table order

Sections: ``config`` and ``meta`` (JSON), ``vocab`` and ``rules`` (their text
formats), ``encoder`` and ``head`` (named float64 arrays). Output is a pure
function of the model and metadata, so identical runs give identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import asdict
import struct
import zlib
from pathlib import Path
from typing import Any

import numpy as np

from crab import encoder as enc_mod, head as head_mod
from crab.encoder import EncoderConfig, ToyEncoder, ToyEncoderParams
from crab.errors import CorruptModelError, CrabError
from crab.head import CrabConfig, CrabParams
from crab.model import CrabModel
from crab.text import NormRules, Vocab

MAGIC = b"CRAB"
VERSION = 1
SECTIONS = ("config", "vocab", "rules", "encoder", "head", "meta")


def pack_arrays(arrays: dict[str, np.ndarray]) -> bytes:
    """``u32 count``, then per array: ``u16 name len, name, u8 ndim, u32 dims..., f64 data``."""
    out = [struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(a.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes, what: str):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptModelError(f"{self.what}: truncated at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def unpack_arrays(buf: bytes, what: str = "arrays") -> dict[str, np.ndarray]:
    r = _Reader(buf, what)
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8", errors="strict")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf):
        raise CorruptModelError(f"{what}: {len(buf) - r.pos} trailing bytes")
    return arrays


def _json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def dumps(model: CrabModel, meta: dict | None = None) -> bytes:
    enc = model.encoder
    config = {"encoder": asdict(enc.config), "head": model.head_config.to_dict(),
              "class_names": list(model.class_names)}
    payloads = {
        "config": _json(config),
        "vocab": model.vocab.dumps().encode("utf-8"),
        "rules": model.rules.source.encode("utf-8"),
        "encoder": pack_arrays({k: t.data for k, t in enc.parameters().items()}),
        "head": pack_arrays({k: t.data for k, t in model.head_params.named().items()}),
        "meta": _json(meta or {}),
    }
    names = [n.encode("utf-8") for n in SECTIONS]
    table_size = sum(2 + len(n) + 8 + 8 + 4 for n in names)
    offset = len(MAGIC) + 8 + table_size
    table, body = [], []
    for name, raw in zip(SECTIONS, names):
        data = payloads[name]
        table.append(struct.pack("<H", len(raw)) + raw + struct.pack("<QQI", offset, len(data), zlib.crc32(data)))
        body.append(data)
        offset += len(data)
    return MAGIC + struct.pack("<II", VERSION, len(SECTIONS)) + b"".join(table) + b"".join(body)


def read_sections(buf: bytes) -> dict[str, bytes]:
    if buf[:4] != MAGIC:
        raise CorruptModelError("not a model file (bad magic)")
    r = _Reader(buf, "header")
    r.take(4)
    version, count = r.unpack("<II")
    if version != VERSION:
        raise CorruptModelError(f"unsupported model file version {version}")
    sections = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8", errors="replace")
        offset, length, crc = r.unpack("<QQI")
        if offset + length > len(buf):
            raise CorruptModelError(f"section {name!r} runs past end of file")
        data = buf[offset:offset + length]
        if zlib.crc32(data) != crc:
            raise CorruptModelError(f"section {name!r} fails its checksum")
        sections[name] = data
    missing = [s for s in SECTIONS if s not in sections]
    if missing:
        raise CorruptModelError(f"missing sections: {', '.join(missing)}")
    return sections


def loads(buf: bytes) -> tuple[CrabModel, dict]:
    """Rebuild the model and its metadata; any inconsistency is a ``CorruptModelError``."""
    sections = read_sections(buf)
    try:
        config = json.loads(sections["config"].decode("utf-8"))
        meta = json.loads(sections["meta"].decode("utf-8"))
        enc_cfg = EncoderConfig(**config["encoder"])
        head_cfg = CrabConfig(**config["head"])
        vocab = Vocab.loads(sections["vocab"].decode("utf-8"))
        rules = NormRules.parse(sections["rules"].decode("utf-8"))
        enc_arrays = unpack_arrays(sections["encoder"], "encoder")
        head_arrays = unpack_arrays(sections["head"], "head")
        _check_shapes("encoder", enc_arrays, enc_mod.expected_shapes(enc_cfg))
        _check_shapes("head", head_arrays, head_mod.expected_shapes(head_cfg))
        encoder = ToyEncoder(enc_cfg, ToyEncoderParams.from_named(enc_arrays, enc_cfg.layers))
        params = CrabParams.from_named(head_arrays, head_cfg.m)
        model = CrabModel(encoder, params, head_cfg, vocab, rules, list(config["class_names"]))
    except CorruptModelError:
        raise
    except (CrabError, KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise CorruptModelError(f"inconsistent model file: {exc}") from exc
    return model, meta


def _check_shapes(what: str, arrays: dict[str, np.ndarray], expected: dict[str, tuple[int, ...]]) -> None:
    if set(arrays) != set(expected):
        raise CorruptModelError(f"{what} weights {sorted(arrays)} do not match config {sorted(expected)}")
    for name, shape in expected.items():
        if arrays[name].shape != shape:
            raise CorruptModelError(f"{what} weight {name} has shape {arrays[name].shape}, config implies {shape}")


def save(path: str | Path, model: CrabModel, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, meta))


def load(path: str | Path) -> tuple[CrabModel, dict]:
    return loads(Path(path).read_bytes())
