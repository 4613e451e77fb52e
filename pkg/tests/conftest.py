import numpy as np
import pytest

from cfglab import rng as rngmod
from cfglab.grammar import CfgSynthSpec, make_cfg, synthesize_cfg, toy_grammar


@pytest.fixture
def toy():
    return toy_grammar()


@pytest.fixture
def depth4():
    """Small depth-4 grammar with full coverage, used across modules."""
    spec = CfgSynthSpec(sizes=(1, 3, 3, 3), degree_set=frozenset({2}), seed=101)
    return synthesize_cfg(spec)


def random_small_cfg(rng, max_depth=4, max_syms=3):
    """Random tiny grammar for oracle-equivalence sweeps."""
    depth = int(rng.integers(2, max_depth + 1))
    sizes = (1,) + tuple(int(rng.integers(1, max_syms + 1)) for _ in range(depth - 1))
    spec = CfgSynthSpec(
        sizes=sizes,
        degree_set=frozenset({int(rng.integers(1, 3))}),
        distinct_consecutive=False,
        seed=int(rng.integers(1 << 30)),
    )
    return synthesize_cfg(spec)


@pytest.fixture
def stream():
    return rngmod.stream
