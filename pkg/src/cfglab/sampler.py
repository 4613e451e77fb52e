"""Sampling annotated strings from a leveled grammar.

Expansion is breadth-first by level: the whole level-l sequence is
rewritten into level l+1 before moving on, one uniform rule draw per
symbol.  Alongside the terminal string we keep, for every terminal
position i and level l, the index and symbol of its level-l ancestor,
plus parent links between consecutive levels.

Levels and ancestor indices are 1-based throughout, matching the text
formats; Python containers are indexed with the usual 0-based offsets.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InconsistentDerivation
from .grammar import validate_cfg


@dataclass(frozen=True)
class Derivation:
    """One sampled or parsed string with full tree annotations.

    symbols[k]  - level-(k+1) symbol sequence; symbols[-1] == x
    parents[k]  - for k >= 1, parent index (1-based) of each level-(k+1)
                  symbol within level k; parents[0] is empty
    anc_idx[k]  - for each terminal position, 1-based index of its
                  level-(k+1) ancestor; anc_idx[-1][i] == i+1
    anc_sym[k]  - the ancestor's symbol id
    """

    x: tuple[int, ...]
    symbols: tuple[tuple[int, ...], ...]
    parents: tuple[tuple[int, ...], ...]
    anc_idx: tuple[tuple[int, ...], ...]
    anc_sym: tuple[tuple[int, ...], ...]

    @property
    def depth(self):
        return len(self.symbols)

    def __len__(self):
        return len(self.x)


@dataclass(frozen=True)
class BoundaryProfile:
    """Per-position subtree-end indicators.

    ends[k][i] is 1 when position i+1 is the last terminal of its
    level-(k+1) ancestor's subtree (k+1 ranges over 1..L-1; the final
    position closes every level by convention).  deepest[i] is the
    smallest such level, i.e. the boundary closest to the root, with
    sentinel L when position i+1 closes nothing.
    """

    ends: tuple[tuple[int, ...], ...]
    deepest: tuple[int, ...]


def ancestors_from_parents(symbols, parents):
    """Derive the per-terminal ancestor matrices from parent links."""
    depth = len(symbols)
    n = len(symbols[-1])
    anc_idx = [None] * depth
    anc_idx[depth - 1] = tuple(range(1, n + 1))
    for k in range(depth - 2, -1, -1):
        par = parents[k + 1]
        above = anc_idx[k + 1]
        anc_idx[k] = tuple(par[j - 1] for j in above)
    anc_sym = tuple(
        tuple(symbols[k][j - 1] for j in anc_idx[k]) for k in range(depth)
    )
    return tuple(anc_idx), anc_sym


def derivation_from_levels(symbols, parents):
    anc_idx, anc_sym = ancestors_from_parents(symbols, parents)
    return Derivation(
        x=tuple(symbols[-1]),
        symbols=tuple(tuple(s) for s in symbols),
        parents=tuple(tuple(p) for p in parents),
        anc_idx=anc_idx,
        anc_sym=anc_sym,
    )


def sample_derivation(cfg, rng):
    """Draw one string with annotations; uniform rule choice per symbol."""
    symbols = [[cfg.root]]
    parents = [()]
    for _ in range(cfg.depth - 1):
        cur = symbols[-1]
        nxt = []
        par = []
        for pos, s in enumerate(cur, start=1):
            rules = cfg.rules_of(s)
            rule = rules[int(rng.integers(len(rules)))]
            nxt.extend(rule.body)
            par.extend([pos] * len(rule.body))
        symbols.append(nxt)
        parents.append(par)
    return derivation_from_levels(symbols, parents)


def regenerate_terminals(cfg, level_symbols, level, rng):
    """Expand a level-`level` symbol sequence down to terminals.

    Fresh uniform rule choices below the given level; used by the
    training-data perturbations.  Returns a full Derivation rooted at the
    original tree only from `level` down, so callers treat the result as
    a terminal sequence provider.
    """
    symbols = [list(level_symbols)]
    parents = [()]
    for _ in range(cfg.depth - level):
        cur = symbols[-1]
        nxt = []
        par = []
        for pos, s in enumerate(cur, start=1):
            rules = cfg.rules_of(s)
            rule = rules[int(rng.integers(len(rules)))]
            nxt.extend(rule.body)
            par.extend([pos] * len(rule.body))
        symbols.append(nxt)
        parents.append(par)
    return tuple(symbols[-1])


def boundaries(deriv):
    """Compute the boundary profile; a pure function of the ancestor indices."""
    depth = deriv.depth
    n = len(deriv.x)
    ends = []
    for k in range(depth - 1):
        row = deriv.anc_idx[k]
        prev = None
        for v in row:
            if prev is not None and v < prev:
                raise InconsistentDerivation(
                    f"ancestor indices at level {k + 1} are not nondecreasing"
                )
            prev = v
        ends.append(tuple(
            1 if (i == n - 1 or row[i] != row[i + 1]) else 0 for i in range(n)
        ))
    deepest = []
    for i in range(n):
        lvl = depth  # sentinel: nothing closes here
        for k in range(depth - 1):
            if ends[k][i]:
                lvl = k + 1
                break
        deepest.append(lvl)
    return BoundaryProfile(ends=tuple(ends), deepest=tuple(deepest))


def string_length_bounds(cfg):
    """Exact (min, max) terminal length over the language.

    Per-symbol dynamic programming over rule bodies, bottom-up; never
    samples.
    """
    report = validate_cfg(cfg)
    if not report.ok:
        raise ValueError(f"invalid grammar: {report.violations[0].message}")
    lo = {t: 1 for t in cfg.terminals}
    hi = {t: 1 for t in cfg.terminals}
    for level in reversed(cfg.levels[:-1]):
        for s in level:
            spans_lo = []
            spans_hi = []
            for r in cfg.rules_of(s):
                spans_lo.append(sum(lo[b] for b in r.body))
                spans_hi.append(sum(hi[b] for b in r.body))
            lo[s] = min(spans_lo)
            hi[s] = max(spans_hi)
    return lo[cfg.root], hi[cfg.root]
