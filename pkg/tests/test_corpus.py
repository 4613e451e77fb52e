import numpy as np
import pytest

from cfglab import rng as rngmod
from cfglab.corpus import (
    PackedCorpus,
    pack_corpus,
    read_corpus,
    unpack_stream,
    write_corpus,
)
from cfglab.errors import FormatError

SAMPLES = [(4, 4, 5, 5), (4, 5, 5, 5)]


class _FixedOffset:
    def __init__(self, offset):
        self.offset = offset

    def integers(self, *_args, **_kwargs):
        return self.offset


def test_window6_offset0():
    corpus = pack_corpus(SAMPLES, 6, _FixedOffset(0))
    b, e = corpus.bos, corpus.eos
    assert corpus.windows.tolist() == [[b, 4, 4, 5, 5, e], [b, 4, 5, 5, 5, e]]


def test_window4_offset0():
    corpus = pack_corpus(SAMPLES, 4, _FixedOffset(0))
    b, e = corpus.bos, corpus.eos
    assert corpus.windows.tolist() == [[b, 4, 4, 5], [5, e, b, 4], [5, 5, 5, e]]


def test_sentinel_ids_sit_above_terminals():
    corpus = pack_corpus(SAMPLES, 6, _FixedOffset(0))
    assert corpus.bos == 6 and corpus.eos == 7 and corpus.vocab_size == 8


def test_token_count_conservation():
    rng = rngmod.stream(5)
    samples = [tuple(rng.integers(1, 6, size=rng.integers(2, 9))) for _ in range(37)]
    for seed in range(5):
        corpus = pack_corpus(samples, 16, rngmod.stream(seed))
        stream_len = sum(len(x) + 2 for x in samples)
        dropped = (stream_len - corpus.offset) % 16
        assert corpus.windows.size + dropped == stream_len - corpus.offset


def test_determinism():
    a = pack_corpus(SAMPLES * 10, 8, rngmod.stream(9))
    b = pack_corpus(SAMPLES * 10, 8, rngmod.stream(9))
    assert a.offset == b.offset
    assert (a.windows == b.windows).all()


def test_unpack_round_trip():
    corpus = pack_corpus(SAMPLES, 6, _FixedOffset(0))
    out = unpack_stream(corpus)
    assert [s.tokens for s in out if not s.partial] == list(SAMPLES)


def test_unpack_flags_tail_partial():
    corpus = pack_corpus(SAMPLES, 4, _FixedOffset(0))
    # drop the last window so the final sample loses its EOS
    truncated = PackedCorpus(
        windows=corpus.windows[:2],
        vocab_size=corpus.vocab_size,
        window_length=4,
        offset=0,
    )
    out = unpack_stream(truncated)
    complete = [s for s in out if not s.partial]
    partial = [s for s in out if s.partial]
    assert [s.tokens for s in complete] == [(4, 4, 5, 5)]
    assert len(partial) == 1


def test_unpack_rejects_unknown_token():
    corpus = pack_corpus(SAMPLES, 6, _FixedOffset(0))
    bad = corpus.windows.copy()
    bad[0, 1] = 999
    with pytest.raises(FormatError):
        unpack_stream(
            PackedCorpus(windows=bad, vocab_size=corpus.vocab_size, window_length=6, offset=0)
        )


def test_binary_round_trip_byte_exact():
    corpus = pack_corpus(SAMPLES * 7, 8, rngmod.stream(3))
    blob = write_corpus(corpus)
    again = read_corpus(blob)
    assert write_corpus(again) == blob
    assert (again.windows == corpus.windows).all()
    assert again.vocab_size == corpus.vocab_size


def test_binary_rejects_bad_magic_and_truncation():
    corpus = pack_corpus(SAMPLES, 6, _FixedOffset(0))
    blob = write_corpus(corpus)
    with pytest.raises(FormatError):
        read_corpus(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        read_corpus(blob[:-3])
