"""Vocabulary reduction on token sequences and cluster-uniform random decoding."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .mapping import ClusterMapping

SEQ_MAGIC = b"SEQ1"
SEQ_VERSION = 1
_SEQ_HEADER = struct.Struct("<4sIQQ")


@dataclass(frozen=True, eq=False)
class TokenSequence:
    tokens: np.ndarray
    vocab: int

    def __post_init__(self) -> None:
        t = np.asarray(self.tokens)
        if t.ndim != 1:
            raise ValidationError(f"token sequence must be 1-D, got shape {t.shape}")
        t = t.astype(np.int64)
        if self.vocab < 1:
            raise ValidationError(f"vocab must be positive, got {self.vocab}")
        bad = np.flatnonzero((t < 0) | (t >= self.vocab))
        if bad.size:
            i = int(bad[0])
            raise ValidationError(f"token {int(t[i])} at position {i} outside vocab [0, {self.vocab})")
        t.setflags(write=False)
        object.__setattr__(self, "tokens", t)

    def __len__(self) -> int:
        return self.tokens.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenSequence):
            return NotImplemented
        return self.vocab == other.vocab and np.array_equal(self.tokens, other.tokens)


def coarsen(seq: TokenSequence, m: ClusterMapping) -> TokenSequence:
    if seq.vocab != m.n:
        raise ValidationError(f"sequence vocab {seq.vocab} does not match mapping n={m.n}")
    return TokenSequence(m.assign[seq.tokens], m.k)


def decode_random(seq: TokenSequence, m: ClusterMapping, seed: int, offset: int = 0) -> TokenSequence:
    """Replace each coarse index by a uniformly drawn member of its cluster.

    Position ``p`` always consumes the ``offset + p``-th draw of the PCG64
    stream for ``seed``, so a long sequence can be decoded in chunks (passing
    each chunk's start as ``offset``) with the same result as in one pass.
    """
    if seq.vocab != m.k:
        raise ValidationError(f"sequence vocab {seq.vocab} does not match mapping k={m.k}")
    bitgen = np.random.PCG64(seed)
    if offset:
        bitgen.advance(offset)
    u = np.random.Generator(bitgen).random(len(seq))
    order, offsets = m.member_table()
    sizes = m.sizes[seq.tokens]
    pick = np.minimum((u * sizes).astype(np.int64), sizes - 1)
    return TokenSequence(order[offsets[seq.tokens] + pick], m.n)


def empirical_distribution(seq: TokenSequence) -> np.ndarray:
    if len(seq) == 0:
        raise ValidationError("empirical distribution of an empty sequence is undefined")
    return np.bincount(seq.tokens, minlength=seq.vocab) / len(seq)


# --- file formats ---------------------------------------------------------


def sequence_to_text(seq: TokenSequence) -> str:
    body = "".join(f"{t}\n" for t in seq.tokens.tolist())
    return f"# vocab={seq.vocab}\n{body}"


def sequence_to_binary(seq: TokenSequence) -> bytes:
    return _SEQ_HEADER.pack(SEQ_MAGIC, SEQ_VERSION, seq.vocab, len(seq)) + seq.tokens.astype("<u4").tobytes()


def parse_sequence(raw: bytes, vocab: int | None = None) -> TokenSequence:
    """Decode either sequence encoding; ``vocab`` is required for headerless text."""
    if raw[:4] == SEQ_MAGIC:
        if len(raw) < _SEQ_HEADER.size:
            raise FormatError("SEQ1 header truncated")
        _, version, v, length = _SEQ_HEADER.unpack_from(raw)
        if version != SEQ_VERSION:
            raise FormatError(f"unsupported SEQ1 version {version}")
        if len(raw) != _SEQ_HEADER.size + 4 * length:
            raise FormatError(f"SEQ1 payload size mismatch for L={length}")
        tokens = np.frombuffer(raw, dtype="<u4", offset=_SEQ_HEADER.size)
        return TokenSequence(tokens, int(v))
    try:
        lines = raw.decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise FormatError("sequence file is neither SEQ1 binary nor ASCII text") from None
    declared = None
    tokens = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if lineno == 1 and line[1:].strip().startswith("vocab="):
                try:
                    declared = int(line[1:].strip()[len("vocab="):])
                except ValueError:
                    raise FormatError(f"bad vocab header {line!r}") from None
                continue
            raise FormatError(f"line {lineno}: unexpected comment {line!r}")
        if not line.isdigit():
            raise FormatError(f"line {lineno}: expected an unsigned integer, got {line!r}")
        tokens.append(int(line))
    if declared is None:
        declared = vocab
    if declared is None:
        raise ValidationError("text sequence has no '# vocab=V' header and no vocab was supplied")
    return TokenSequence(np.array(tokens, dtype=np.int64), declared)


def load_sequence(path: str | Path, vocab: int | None = None) -> TokenSequence:
    return parse_sequence(Path(path).read_bytes(), vocab)


def save_sequence(seq: TokenSequence, path: str | Path, binary: bool | None = None) -> None:
    path = Path(path)
    if binary is None:
        binary = path.suffix.lower() in (".bin", ".seq1")
    if binary:
        path.write_bytes(sequence_to_binary(seq))
    else:
        path.write_text(sequence_to_text(seq), encoding="ascii")
