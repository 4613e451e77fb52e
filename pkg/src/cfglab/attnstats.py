"""Attention-pattern diagnostics over exported dumps.

Two passes: first a position profile (mean attention as a function of
query-key distance, pooled over sequences), then residual statistics
where that profile is subtracted so what remains is content-driven.
The boundary-conditioned aggregates ask whether residual attention
concentrates on tokens that close subtrees, and, for pairs of such
tokens, how it decays with the ancestor-index distance between them.

Cells are (mean, count); a cell with no pairs is reported as empty,
never as zero, and cells with fewer than MIN_CELL_COUNT pairs carry a
low-support flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPool, MisalignedAnnotations

MIN_CELL_COUNT = 10  # below this a mean is flagged low-support


@dataclass
class PositionProfile:
    mean: np.ndarray  # (layers, heads, max_n) mean attention at distance p
    cumulative: np.ndarray  # (layers, heads, max_n) mean prefix mass at distance p
    pair_count: np.ndarray  # (max_n,) pairs contributing to each distance
    pool_size: int

    def lookup(self, layer, head, p):
        return float(self.mean[layer, head, p]) if p < self.mean.shape[2] else 0.0


def _dense_attention(seq):
    """(layers, heads, n, n) float64 with zeros above the diagonal."""
    n = seq.n
    layers, heads, _ = seq.attention.shape
    out = np.zeros((layers, heads, n, n), dtype=np.float64)
    at = 0
    for j in range(n):
        out[:, :, j, : j + 1] = seq.attention[:, :, at : at + j + 1]
        at += j + 1
    return out


def position_profile(dumps):
    """Pool the per-distance attention means over one or more dumps."""
    dumps = list(dumps)
    if not dumps or all(not d.sequences for d in dumps):
        raise EmptyPool("no sequences in the attention pool")
    layers, heads = dumps[0].layers, dumps[0].heads
    max_n = max(seq.n for d in dumps for seq in d.sequences)
    total = np.zeros((layers, heads, max_n))
    cum_total = np.zeros((layers, heads, max_n))
    count = np.zeros(max_n, dtype=np.int64)
    pool = 0
    for dump in dumps:
        for seq in dump.sequences:
            pool += 1
            att = _dense_attention(seq)
            n = seq.n
            prefix = att.cumsum(axis=3)
            for p in range(n):
                js = np.arange(p, n)
                total[:, :, p] += att[:, :, js, js - p].sum(axis=2)
                cum_total[:, :, p] += prefix[:, :, js, js - p].sum(axis=2)
                count[p] += js.size
    safe = np.where(count == 0, 1, count)
    return PositionProfile(
        mean=total / safe,
        cumulative=cum_total / safe,
        pair_count=count,
        pool_size=pool,
    )


def residual(dump, profile):
    """Stream per-sequence residuals A - mean(A at that distance).

    Yields (sequence index, (layers, heads, n, n) array); residuals are
    never materialized for the whole pool at once.
    """
    for si, seq in enumerate(dump.sequences):
        att = _dense_attention(seq)
        n = seq.n
        B = np.zeros_like(att)
        for j in range(n):
            dists = j - np.arange(j + 1)
            B[:, :, j, : j + 1] = att[:, :, j, : j + 1] - profile.mean[:, :, dists]
        yield si, B


@dataclass
class GridCell:
    total: float = 0.0
    count: int = 0

    def add(self, values):
        v = np.asarray(values)
        self.total += float(v.sum())
        self.count += v.size

    @property
    def mean(self):
        return self.total / self.count if self.count else None

    @property
    def low_support(self):
        return 0 < self.count < MIN_CELL_COUNT


@dataclass
class Grid:
    cells: dict = field(default_factory=dict)

    def at(self, key):
        cell = self.cells.get(key)
        if cell is None:
            cell = self.cells[key] = GridCell()
        return cell

    def mean(self, key):
        cell = self.cells.get(key)
        return None if cell is None else cell.mean

    def count(self, key):
        cell = self.cells.get(key)
        return 0 if cell is None else cell.count


def _check_alignment(dump, profiles):
    if len(profiles) != len(dump.sequences):
        raise MisalignedAnnotations(
            f"{len(dump.sequences)} sequences but {len(profiles)} annotation profiles"
        )
    for si, (seq, prof) in enumerate(zip(dump.sequences, profiles)):
        if seq.n != len(prof.deepest):
            raise MisalignedAnnotations(
                f"sequence {si}: dump length {seq.n} != annotation length {len(prof.deepest)}"
            )


def end_targeting_grid(dump, profiles, profile, levels=(2, 3, 4, 5), deltas=(-2, -1, 0, 1, 2)):
    """Mean residual toward keys i where i+delta closes a level-l subtree.

    Keys are grouped by the deepest (closest-to-root) level whose subtree
    ends at i+delta; all query positions j >= i contribute.
    Returns Grid keyed (layer, head, level, delta).
    """
    _check_alignment(dump, profiles)
    layers, heads = dump.layers, dump.heads
    grid = Grid()
    for (si, B), prof in zip(residual(dump, profile), profiles):
        n = B.shape[2]
        deepest = prof.deepest
        boundary_levels = len(prof.ends)  # deeper values are the sentinel
        for level in levels:
            if level > boundary_levels:
                continue
            for delta in deltas:
                keys = [
                    i
                    for i in range(n)
                    if 0 <= i + delta < n and deepest[i + delta] == level
                ]
                if not keys:
                    continue
                for l in range(layers):
                    for h in range(heads):
                        for i in keys:
                            grid.at((l, h, level, delta)).add(B[l, h, i:, i])
    return grid


def end_to_end_grid(dump, profiles, profile, level, offsets=(-1, 0, 1)):
    """Mean residual over pairs whose offset positions both close level-`level`.

    Returns Grid keyed (layer, head, delta1, delta2) where i+delta1 and
    j+delta2 are level-`level` subtree ends (delta1 on the key, delta2 on
    the query).
    """
    _check_alignment(dump, profiles)
    layers, heads = dump.layers, dump.heads
    grid = Grid()
    for (si, B), prof in zip(residual(dump, profile), profiles):
        n = B.shape[2]
        if level - 1 >= len(prof.ends):
            continue
        ends = prof.ends[level - 1]
        for d1 in offsets:
            keys = [i for i in range(n) if 0 <= i + d1 < n and ends[i + d1]]
            for d2 in offsets:
                queries = [j for j in range(n) if 0 <= j + d2 < n and ends[j + d2]]
                if not keys or not queries:
                    continue
                qarr = np.asarray(queries)
                for l in range(layers):
                    for h in range(heads):
                        for i in keys:
                            js = qarr[qarr >= i]
                            if js.size:
                                grid.at((l, h, d1, d2)).add(B[l, h, js, i])
    return grid


def end_to_end_by_distance(dump, profiles, profile):
    """Residual between subtree-closing tokens, by ancestor-index distance.

    For a key i with deepest end level l and query j >= i with deepest
    end level l2, the distance r is the difference of their level-l
    ancestor indices.  Tokens that close nothing (sentinel level) are
    excluded.  Cells at r=0 for l >= l2 are marked empty: such pairs
    cannot share a level-l ancestor.  Returns (per-layer-head grid keyed
    (layer, head, l2, l, r), aggregate grid keyed (l2, l, r)).
    """
    _check_alignment(dump, profiles)
    layers, heads = dump.layers, dump.heads
    per = Grid()
    agg = Grid()
    for (si, B), deriv_prof in zip(residual(dump, profile), profiles):
        n = B.shape[2]
        deepest = deriv_prof.deepest
        sentinel = len(deriv_prof.ends) + 1
        for i in range(n):
            lkey = deepest[i]
            if lkey >= sentinel:
                continue
            for j in range(i, n):
                lquery = deepest[j]
                if lquery >= sentinel:
                    continue
                r = deriv_prof.anc_of(lkey, j) - deriv_prof.anc_of(lkey, i)
                for l in range(layers):
                    for h in range(heads):
                        per.at((l, h, lquery, lkey, r)).add(B[l, h, j, i])
                agg.at((lquery, lkey, r)).add(B[:, :, j, i])
    # forced-empty diagonal: same-or-deeper keys cannot sit at distance 0
    for grid in (per, agg):
        for key in list(grid.cells):
            lquery, lkey, r = key[-3], key[-2], key[-1]
            if r == 0 and lkey >= lquery:
                del grid.cells[key]
    return per, agg


@dataclass(frozen=True)
class SequenceAnnotation:
    """Boundary profile plus ancestor indices, aligned to one dump sequence."""

    ends: tuple
    deepest: tuple
    anc_idx: tuple

    def anc_of(self, level, pos):
        return self.anc_idx[level - 1][pos]


def annotation_for(deriv):
    from .sampler import boundaries

    prof = boundaries(deriv)
    return SequenceAnnotation(ends=prof.ends, deepest=prof.deepest, anc_idx=deriv.anc_idx)
