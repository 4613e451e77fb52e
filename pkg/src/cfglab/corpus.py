"""Packing samples into fixed-width training windows.

Each sample is wrapped as BOS + x + EOS; samples are concatenated in
order, the stream is cut at one uniformly random offset in
[0, window_length), and the remainder is split into consecutive
windows.  The trailing partial window is dropped.  BOS and EOS are the
two ids immediately above the largest terminal id.

Binary layout (little-endian):

    magic 'CFGC' | u32 version=1 | u32 window_length | u32 window count
    | u32 vocab size | windows as u16 token ids
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

MAGIC = b"CFGC"
VERSION = 1


@dataclass(frozen=True)
class PackedCorpus:
    windows: np.ndarray  # (count, window_length) uint16
    vocab_size: int  # BOS == vocab_size - 2, EOS == vocab_size - 1
    window_length: int
    offset: int  # random cut position actually used
    grammar_hash: str = ""
    seed: int | None = None

    @property
    def bos(self):
        return self.vocab_size - 2

    @property
    def eos(self):
        return self.vocab_size - 1


def pack_corpus(samples, window_length, rng, grammar_hash="", seed=None):
    if window_length < 2:
        raise ValueError("window_length must be at least 2")
    max_t = max((max(x) for x in samples if x), default=0)
    bos, eos = max_t + 1, max_t + 2
    stream = []
    for x in samples:
        stream.append(bos)
        stream.extend(x)
        stream.append(eos)
    offset = int(rng.integers(window_length))
    body = stream[offset:]
    count = len(body) // window_length
    windows = np.asarray(
        body[: count * window_length], dtype=np.uint16
    ).reshape(count, window_length)
    return PackedCorpus(
        windows=windows,
        vocab_size=eos + 1,
        window_length=window_length,
        offset=offset,
        grammar_hash=grammar_hash,
        seed=seed,
    )


@dataclass(frozen=True)
class UnpackedSample:
    tokens: tuple[int, ...]
    partial: bool  # cut at the stream head or tail


def unpack_stream(corpus):
    """Recover the samples from a corpus packed with offset 0.

    Samples that straddle the dropped head/tail of the stream come back
    flagged partial.
    """
    flat = corpus.windows.reshape(-1)
    bad = flat[flat >= corpus.vocab_size]
    if bad.size:
        raise FormatError(f"token id {int(bad[0])} outside the vocabulary")
    bos, eos = corpus.bos, corpus.eos
    out = []
    current = None
    head_partial = flat.size > 0 and int(flat[0]) != bos
    if head_partial:
        current = []
    for tok in flat.tolist():
        if tok == bos:
            if current is not None:
                out.append(UnpackedSample(tuple(current), True))
            current = []
        elif tok == eos:
            if current is not None:
                out.append(UnpackedSample(tuple(current), False))
            current = None
        else:
            if current is not None:
                current.append(tok)
    if current is not None:
        out.append(UnpackedSample(tuple(current), True))
    return out


def write_corpus(corpus):
    header = struct.pack(
        "<4sIIII",
        MAGIC,
        VERSION,
        corpus.window_length,
        corpus.windows.shape[0],
        corpus.vocab_size,
    )
    return header + corpus.windows.astype("<u2").tobytes()


def read_corpus(data):
    if len(data) < 20 or data[:4] != MAGIC:
        raise FormatError("not a corpus file (bad magic)")
    _, version, window_length, count, vocab = struct.unpack("<4sIIII", data[:20])
    if version != VERSION:
        raise FormatError(f"unsupported corpus version {version}")
    need = 20 + count * window_length * 2
    if len(data) < need:
        raise FormatError("corpus file truncated")
    windows = np.frombuffer(data[20:need], dtype="<u2").reshape(count, window_length)
    return PackedCorpus(
        windows=windows.copy(),
        vocab_size=vocab,
        window_length=window_length,
        offset=0,
        grammar_hash="",
        seed=None,
    )
