import numpy as np
import pytest

from cfglab import rng as rngmod
from cfglab.errors import FormatError, NonFiniteError, StochasticityError
from cfglab.sampler import boundaries, sample_derivation
from cfglab.tensordump import (
    SequenceDump,
    TensorDump,
    boundary_mass_attention,
    fixture_from_derivations,
    one_hot_ancestors,
    read_dump,
    synthesize_fixture,
    uniform_window_attention,
    validate_dump,
    write_dump,
)


def _tiny_dump(rng, n=5, layers=2, heads=1, dim=3):
    seqs = []
    for _ in range(2):
        att = np.zeros((layers, heads, n * (n + 1) // 2), dtype=np.float32)
        at = 0
        for j in range(n):
            row = rng.random(j + 1)
            att[:, :, at : at + j + 1] = (row / row.sum()).astype(np.float32)
            at += j + 1
        seqs.append(
            SequenceDump(
                tokens=np.arange(n, dtype=np.uint16),
                hidden=rng.standard_normal((layers, n, dim)).astype(np.float32),
                attention=att,
            )
        )
    return TensorDump(
        grammar_hash="0" * 64, layers=layers, heads=heads, dim=dim, max_len=n, sequences=seqs
    )


def test_round_trip_byte_identical():
    dump = _tiny_dump(rngmod.stream(1))
    blob = write_dump(dump)
    again = read_dump(blob)
    assert write_dump(again) == blob
    assert again.layers == dump.layers and again.heads == dump.heads
    for a, b in zip(again.sequences, dump.sequences):
        assert (a.tokens == b.tokens).all()
        assert (a.hidden == b.hidden).all()
        assert (a.attention == b.attention).all()


def test_row_sum_violation():
    dump = _tiny_dump(rngmod.stream(2))
    dump.sequences[0].attention[0, 0, 0] = 0.9  # first row is the single j=0 weight
    with pytest.raises(StochasticityError):
        write_dump(dump)


def test_nonfinite_detection():
    dump = _tiny_dump(rngmod.stream(3))
    dump.sequences[1].hidden[0, 0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        validate_dump(dump)


def test_truncation_detection():
    blob = write_dump(_tiny_dump(rngmod.stream(4)))
    with pytest.raises(FormatError):
        read_dump(blob[: len(blob) - 7])
    with pytest.raises(FormatError):
        read_dump(b"YYYY" + blob[4:])
    with pytest.raises(FormatError):
        read_dump(blob + b"\x00")


def test_attention_matrix_is_lower_triangular():
    dump = _tiny_dump(rngmod.stream(5))
    mat = dump.sequences[0].attention_matrix(0, 0)
    n = dump.sequences[0].n
    assert mat.shape == (n, n)
    assert np.allclose(np.triu(mat, k=1), 0.0)
    assert np.allclose(mat.sum(axis=1), 1.0, atol=1e-4)


def test_uniform_window_head1_attends_self_only():
    att = uniform_window_attention(6, heads=3)
    # head index 0 has window 2^1 - 1 = 1: weight 1 on the query itself
    at = 0
    for j in range(6):
        row = att[0, at : at + j + 1]
        assert row[-1] == 1.0
        assert row[:-1].sum() == 0.0
        at += j + 1


def test_uniform_window_rows_sum_to_one():
    att = uniform_window_attention(9, heads=4)
    at = 0
    for j in range(9):
        for h in range(4):
            assert abs(att[h, at : at + j + 1].sum() - 1.0) < 1e-6
        at += j + 1


def test_uniform_window_fixture_validates(depth4):
    dump, derivs = synthesize_fixture(depth4, 4, "uniform_window", rngmod.stream(6))
    validate_dump(dump)
    assert len(derivs) == 4
    assert dump.sequences[0].n == len(derivs[0].x)


def test_planted_fixture_linear_readout_is_exact(depth4):
    dump, derivs = synthesize_fixture(depth4, 6, "planted", rngmod.stream(7), noise=0.0)
    validate_dump(dump)
    sizes = [len(lv) for lv in depth4.levels[:-1]]
    offsets = np.cumsum([0] + sizes)
    for seq, deriv in zip(dump.sequences, derivs):
        enc = seq.hidden[0]
        for k in range(depth4.depth - 1):
            block = enc[:, offsets[k] : offsets[k + 1]]
            pred = block.argmax(axis=1)
            index = {s: i for i, s in enumerate(depth4.levels[k])}
            truth = np.array([index[s] for s in deriv.anc_sym[k]])
            assert (pred == truth).all()


def test_planted_attention_bumps_most_adjacent_end(depth4):
    d = sample_derivation(depth4, rngmod.stream(8, 0))
    deepest = boundaries(d).deepest
    n = len(d.x)
    packed = boundary_mass_attention(n, deepest, depth4.depth, beta=8.0)
    at = 0
    for j in range(n):
        row = packed[at : at + j + 1]
        at += j + 1
        assert abs(row.sum() - 1.0) < 1e-5
        prev_ends = [i for i in range(j) if deepest[i] < depth4.depth]
        if prev_ends:
            assert int(np.argmax(row)) == prev_ends[-1]
        else:
            assert np.allclose(row, row[0])


def test_one_hot_shift_displaces_signal(depth4):
    d = sample_derivation(depth4, rngmod.stream(9, 0))
    enc = one_hot_ancestors(d, depth4, shift=0)
    shifted = one_hot_ancestors(d, depth4, shift=1)
    assert (shifted[1:] == enc[:-1]).all()
    assert (shifted[0] == enc[0]).all()  # first position keeps its own code
