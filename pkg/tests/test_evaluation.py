import io

import pytest

from cfglab import rng as rngmod
from cfglab.errors import Exhausted, FormatError
from cfglab.evaluation import (
    CompletionRecord,
    collision_count,
    diversity_table,
    filter_grammatical,
    generation_accuracy,
    marginal_diff,
    marginal_table,
    read_completions,
    span_symbols,
    write_completions,
)
from cfglab.grammar import CfgSynthSpec, synthesize_cfg
from cfglab.parser import annotate
from cfglab.sampler import sample_derivation


def _toy_pool(toy, xs):
    return [annotate(toy, x) for x in xs]


def test_accuracy_toy_examples(toy):
    records = [
        CompletionRecord((4, 5), (5, 5)),  # 4555 is a member
        CompletionRecord((4, 5), (5, 4)),  # 4554 is not
    ]
    assert generation_accuracy(toy, records) == 0.5


def test_accuracy_ground_truth_completions(toy):
    # completions cut from true samples are members by construction
    records = []
    for i in range(20):
        d = sample_derivation(toy, rngmod.stream(5, i))
        records.append(CompletionRecord(d.x[:2], d.x[2:]))
    assert generation_accuracy(toy, records) == 1.0


def test_accuracy_too_short_completions(toy):
    records = [CompletionRecord((4,), ()), CompletionRecord((4, 5), ())]
    assert generation_accuracy(toy, records) == 0.0


def test_accuracy_permutation_invariant(toy):
    records = [
        CompletionRecord((4, 5), (5, 5)),
        CompletionRecord((4, 5), (5, 4)),
        CompletionRecord((4, 4), (5, 5)),
    ]
    base = generation_accuracy(toy, records)
    assert generation_accuracy(toy, records[::-1]) == base


def test_filter_grammatical_counts(toy):
    good = CompletionRecord((4, 5), (5, 5))
    bad = CompletionRecord((4, 5), (5, 4))
    stream = [good, bad, good, good, bad, good, good, good, good, bad]
    kept, consumed = filter_grammatical(toy, stream, 5)
    assert len(kept) == 5
    assert consumed == 7  # the fifth grammatical record is the seventh read
    kept, consumed = filter_grammatical(toy, [good] * 5, 5)
    assert consumed == 5
    with pytest.raises(Exhausted):
        filter_grammatical(toy, [good, bad, good, bad], 3)


def test_collision_count_of_example_multiset():
    assert collision_count([1, 2, 2, 3]) == 1


def test_span_symbols_dedup(toy):
    d = annotate(toy, (4, 4, 5, 5))
    assert span_symbols(d, 2, 0, 3) == (2, 3)
    assert span_symbols(d, 3, 0, 3) == (4, 4, 5, 5)
    assert span_symbols(d, 2, 0, 1) == (2,)


def test_diversity_toy_pool(toy):
    table = diversity_table(toy, _toy_pool(toy, [(4, 4, 5, 5), (4, 5, 5, 5)]))
    cell = table.cells[(2, 3)]
    assert cell == {(4, 4): 1, (4, 5): 1}
    assert table.distinct(2, 3) == 2
    assert table.collisions(2, 3) == 0


def test_diversity_duplicate_pool(toy):
    table = diversity_table(toy, _toy_pool(toy, [(4, 4, 5, 5), (4, 4, 5, 5)]))
    assert table.cells[(2, 3)] == {(4, 4): 2}
    assert table.distinct(2, 3) == 1
    assert table.collisions(2, 3) == 1


def test_diversity_n_duplicates_collisions(depth4):
    n = 7
    d = sample_derivation(depth4, rngmod.stream(13, 0))
    table = diversity_table(depth4, [d] * n)
    assert table.cells
    for key in table.cells:
        assert table.collisions(*key) == table.total(*key) - table.distinct(*key)
        assert table.total(*key) % n == 0  # everything appears in multiples of n
    # per-occurrence duplicates: every cell whose totals come from a single
    # occurrence per copy has exactly n copies of each element
    root_cells = [k for k in table.cells if k[0] == depth4.root]
    for key in root_cells:
        assert table.distinct(*key) == len(table.cells[key])
        assert set(table.cells[key].values()) == {n}
        assert table.collisions(*key) == table.total(*key) - table.distinct(*key)


def test_diversity_diagonal_is_degenerate(toy):
    table = diversity_table(toy, _toy_pool(toy, [(4, 4, 5, 5)]))
    assert set(table.cells[(2, 2)].keys()) == {(2,)}
    assert set(table.cells[(3, 2)].keys()) == {(3,)}


def test_marginal_rows_sum_to_one(depth4):
    pool = [sample_derivation(depth4, rngmod.stream(17, i)) for i in range(200)]
    table = marginal_table(pool)
    for level in range(1, depth4.depth + 1):
        for pos in range(1, table.cutoff + 1):
            total = table.totals[level - 1, pos - 1]
            if total == 0:
                continue
            s = sum(
                table.prob(level, sym, pos) for sym in depth4.levels[level - 1]
            )
            assert abs(s - 1.0) < 1e-9


def test_marginal_root_position_one(toy):
    pool = [sample_derivation(toy, rngmod.stream(19, i)) for i in range(10)]
    table = marginal_table(pool)
    assert table.prob(2, 2, 1) == 1.0  # toy root rule forces symbol 2 first
    assert table.prob(1, 1, 1) == 1.0


def test_marginal_identical_pools_diff_zero(depth4):
    pool = [sample_derivation(depth4, rngmod.stream(23, i)) for i in range(50)]
    _, max_abs = marginal_diff(marginal_table(pool), marginal_table(pool))
    assert max_abs == 0.0


def test_marginal_independent_pools_concentrate():
    # equal-length grammar so every position is fully populated
    spec = CfgSynthSpec(
        sizes=(1, 3, 3, 3),
        degree_set=frozenset({2}),
        seed=3,
        body_lengths=frozenset({2}),
    )
    cfg = synthesize_cfg(spec)
    pool_a = [sample_derivation(cfg, rngmod.stream(100, i)) for i in range(10_000)]
    pool_b = [sample_derivation(cfg, rngmod.stream(200, i)) for i in range(10_000)]
    _, max_abs = marginal_diff(marginal_table(pool_a), marginal_table(pool_b))
    assert max_abs < 0.05


def test_completion_file_round_trip():
    records = [
        CompletionRecord((4, 5), (5, 5), "m"),
        CompletionRecord((), (4, 5, 5, 5), "m"),
    ]
    buf = io.StringIO()
    write_completions(buf, records)
    buf.seek(0)
    again = read_completions(buf, source="m")
    assert again == records


def test_completion_file_rejects_mismatched_cut():
    with pytest.raises(FormatError):
        read_completions(io.StringIO("c=3\t4 5\t5 5\n"))
    with pytest.raises(FormatError):
        read_completions(io.StringIO("whatever\n"))
