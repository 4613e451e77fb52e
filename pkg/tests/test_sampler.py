import io

import pytest

from cfglab import rng as rngmod
from cfglab.errors import InconsistentDerivation
from cfglab.grammar import CfgSynthSpec, make_cfg, synthesize_cfg
from cfglab.parser import membership
from cfglab.samplefile import read_annotated, write_annotated
from cfglab.sampler import (
    Derivation,
    boundaries,
    sample_derivation,
    string_length_bounds,
)


def test_toy_output_distribution(toy):
    counts = {}
    for i in range(1000):
        d = sample_derivation(toy, rngmod.stream(7, i))
        counts[d.x] = counts.get(d.x, 0) + 1
    assert set(counts) == {(4, 4, 5, 5), (4, 5, 5, 5)}
    freq = counts[(4, 4, 5, 5)] / 1000
    assert 0.45 <= freq <= 0.55


def test_single_rule_grammar_is_deterministic():
    cfg = make_cfg([(1,), (2, 3), (4, 5)], [(1, (2, 3)), (2, (4, 5)), (3, (5, 4))])
    a = sample_derivation(cfg, rngmod.stream(1, 0))
    b = sample_derivation(cfg, rngmod.stream(2, 999))
    assert a == b
    assert a.x == (4, 5, 5, 4)


def test_toy_forced_annotations(toy):
    for i in range(50):
        d = sample_derivation(toy, rngmod.stream(11, i))
        if d.x == (4, 4, 5, 5):
            assert d.anc_sym[1] == (2, 2, 3, 3)
            assert d.anc_idx[1] == (1, 1, 2, 2)
            assert d.anc_idx[0] == (1, 1, 1, 1)
            return
    pytest.fail("never sampled 4 4 5 5")


def test_sampling_deterministic_given_seed(depth4):
    a = sample_derivation(depth4, rngmod.stream(5, 3))
    b = sample_derivation(depth4, rngmod.stream(5, 3))
    assert a == b


def test_boundaries_toy(toy):
    d = next(
        sample_derivation(toy, rngmod.stream(11, i))
        for i in range(50)
        if sample_derivation(toy, rngmod.stream(11, i)).x == (4, 4, 5, 5)
    )
    prof = boundaries(d)
    assert prof.ends[1] == (0, 1, 0, 1)
    assert prof.ends[0] == (0, 0, 0, 1)
    assert prof.deepest == (3, 2, 3, 1)


def test_final_position_closes_every_level(depth4):
    for i in range(20):
        d = sample_derivation(depth4, rngmod.stream(21, i))
        prof = boundaries(d)
        n = len(d.x)
        assert all(row[n - 1] == 1 for row in prof.ends)


def test_depth2_boundary():
    cfg = make_cfg([(1,), (2, 3)], [(1, (2, 3))])
    d = sample_derivation(cfg, rngmod.stream(0, 0))
    prof = boundaries(d)
    assert prof.ends[0] == (0, 1)
    assert prof.deepest == (2, 1)


def test_boundaries_pure_function_of_indices(depth4):
    # recomputation from the ancestor-index matrix alone matches
    for i in range(10):
        d = sample_derivation(depth4, rngmod.stream(31, i))
        prof = boundaries(d)
        n = len(d.x)
        for k, row in enumerate(prof.ends):
            expected = tuple(
                1 if (j == n - 1 or d.anc_idx[k][j] != d.anc_idx[k][j + 1]) else 0
                for j in range(n)
            )
            assert row == expected
        for j in range(n):
            lvls = [k + 1 for k in range(d.depth - 1) if prof.ends[k][j]]
            assert prof.deepest[j] == (min(lvls) if lvls else d.depth)


def test_boundaries_rejects_nonmonotone_indices(toy):
    d = sample_derivation(toy, rngmod.stream(3, 0))
    broken = Derivation(
        x=d.x,
        symbols=d.symbols,
        parents=d.parents,
        anc_idx=(d.anc_idx[0], (2, 1, 2, 2), d.anc_idx[2]),
        anc_sym=d.anc_sym,
    )
    with pytest.raises(InconsistentDerivation):
        boundaries(broken)


def test_samples_are_members_and_in_bounds(depth4):
    lo, hi = string_length_bounds(depth4)
    for i in range(50):
        d = sample_derivation(depth4, rngmod.stream(41, i))
        assert lo <= len(d.x) <= hi
        assert membership(depth4, d.x)


def test_length_bounds_toy(toy):
    assert string_length_bounds(toy) == (4, 4)


def test_length_bounds_depth7():
    spec = CfgSynthSpec(sizes=(1, 3, 3, 3, 3, 3, 3), degree_set=frozenset({2}), seed=77)
    cfg = synthesize_cfg(spec)
    lo, hi = string_length_bounds(cfg)
    assert hi <= 3**6 == 729
    assert lo >= 2**6


def test_annotated_file_round_trip(depth4):
    derivs = [sample_derivation(depth4, rngmod.stream(51, i)) for i in range(8)]
    buf = io.StringIO()
    write_annotated(buf, derivs, "ab" * 32, perturbed=[i % 2 == 0 for i in range(8)])
    buf.seek(0)
    records = read_annotated(buf)
    assert len(records) == 8
    for i, rec in enumerate(records):
        assert rec.derivation == derivs[i]
        assert rec.grammar_hash == "ab" * 32
        assert rec.perturbed == (i % 2 == 0)
