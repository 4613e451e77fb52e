"""Chart parsing: membership, canonical annotation, and the brute-force oracle.

The chart is level-stratified: a rule's body symbols sit exactly one
level below its head, so cells for level-l symbols only combine cells
of level l+1 and the fill proceeds from the terminals up to the root.
Length-3 bodies are handled natively with two split points; the grammar
is never binarized, so recovered annotations live in the grammar's own
levels.

Cell storage is one end-position bitmask per (symbol, start), which the
compiled kernel sweeps word-wise; correctness does not depend on that
layout (the pure-Python backend produces identical charts).

Annotation ties break lexicographically: smallest rule index, then
smallest first split, then smallest second split, chosen top-down from
the root.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._backend import COMPILED, kernel  # noqa: F401  (COMPILED re-exported)
from .errors import BudgetExceeded, NotInLanguage, UnknownSymbol
from .sampler import derivation_from_levels, string_length_bounds


@dataclass(frozen=True)
class _Plan:
    """Kernel-ready encoding of a grammar (local dense indices per level)."""

    depth: int
    nt_syms: tuple  # per chart level: tuple of symbol ids
    t_syms: tuple
    t_index: dict
    rules_arrays: tuple  # per chart level: (heads, blens, b0, b1, b2) int32
    rules_local: tuple  # per chart level: per local head: ((index, body_locals), ...)
    len_bounds: tuple


@lru_cache(maxsize=256)
def plan_for(cfg):
    depth = cfg.depth
    nt_levels = cfg.levels[:-1]
    t_syms = cfg.terminals
    t_index = {t: i for i, t in enumerate(t_syms)}
    nt_index = [{s: i for i, s in enumerate(level)} for level in nt_levels]

    rules_arrays = []
    rules_local = []
    for k, level in enumerate(nt_levels):
        child_index = t_index if k == depth - 2 else nt_index[k + 1]
        heads, blens, b0, b1, b2 = [], [], [], [], []
        local = [[] for _ in level]
        for s in level:
            for r in cfg.rules_of(s):
                body = tuple(child_index[b] for b in r.body)
                heads.append(nt_index[k][s])
                blens.append(len(body))
                b0.append(body[0])
                b1.append(body[1])
                b2.append(body[2] if len(body) == 3 else 0)
                local[nt_index[k][s]].append((r.index, body))
        rules_arrays.append(tuple(np.asarray(a, dtype=np.int32) for a in (heads, blens, b0, b1, b2)))
        rules_local.append(tuple(tuple(rs) for rs in local))
    return _Plan(
        depth=depth,
        nt_syms=tuple(tuple(lv) for lv in nt_levels),
        t_syms=tuple(t_syms),
        t_index=t_index,
        rules_arrays=tuple(rules_arrays),
        rules_local=tuple(rules_local),
        len_bounds=string_length_bounds(cfg),
    )


class Chart:
    """Filled chart for one input; truth queries plus witness recovery."""

    def __init__(self, cfg, plan, n, cand, ends):
        self.cfg = cfg
        self._plan = plan
        self.n = n
        self._cand = cand
        self._ends = ends  # per chart level: uint64 (nsyms, n, words)

    def has(self, level0, sym_local, i, j):
        """True iff the level-(level0+1) symbol derives positions i..j (0-based)."""
        if i < 0 or j >= self.n or i > j:
            return False
        row = self._ends[level0][sym_local, i]
        return bool((int(row[j >> 6]) >> (j & 63)) & 1)

    @property
    def accepted(self):
        return self.n > 0 and self.has(0, 0, 0, self.n - 1)

    def admits_terminal(self, i, t_local):
        return bool(self._cand[i, t_local])

    def backlink(self, level0, sym_local, i, j):
        """Lexicographically least witness (rule index, split points) for a true cell."""
        plan = self._plan
        leaf = level0 == plan.depth - 2
        for rule_index, body in plan.rules_local[level0][sym_local]:
            if leaf:
                if j - i + 1 != len(body):
                    continue
                if all(self._cand[i + off, t] for off, t in enumerate(body)):
                    return rule_index, ()
                continue
            if len(body) == 2:
                for k in range(i, j):
                    if self.has(level0 + 1, body[0], i, k) and self.has(level0 + 1, body[1], k + 1, j):
                        return rule_index, (k,)
            else:
                for k1 in range(i, j - 1):
                    if not self.has(level0 + 1, body[0], i, k1):
                        continue
                    for k2 in range(k1 + 1, j):
                        if self.has(level0 + 1, body[1], k1 + 1, k2) and self.has(
                            level0 + 1, body[2], k2 + 1, j
                        ):
                            return rule_index, (k1, k2)
        return None

    def derivation(self):
        """Extract the canonical (lexicographically least) parse."""
        if not self.accepted:
            raise NotInLanguage("input is not derivable from the root")
        plan = self._plan
        symbols = [[self.cfg.root]]
        parents = [()]
        spans = [(0, self.n - 1, 0)]  # (i, j, local symbol) per node of current level
        for level0 in range(plan.depth - 1):
            next_syms = []
            next_par = []
            next_spans = []
            leaf = level0 == plan.depth - 2
            for pos, (i, j, s_local) in enumerate(spans, start=1):
                witness = self.backlink(level0, s_local, i, j)
                assert witness is not None, "true cell lost its witness"
                rule_index, splits = witness
                body = dict(plan.rules_local[level0][s_local])[rule_index]
                if leaf:
                    for off in range(len(body)):
                        next_syms.append(self._leaf_symbol(i + off, body[off]))
                        next_par.append(pos)
                else:
                    cuts = (i - 1,) + splits + (j,)
                    for c in range(len(body)):
                        ci, cj = cuts[c] + 1, cuts[c + 1]
                        next_syms.append(plan.nt_syms[level0 + 1][body[c]])
                        next_par.append(pos)
                        next_spans.append((ci, cj, body[c]))
            symbols.append(next_syms)
            parents.append(next_par)
            spans = next_spans
        return derivation_from_levels(symbols, parents)

    def _leaf_symbol(self, i, t_local):
        return self._plan.t_syms[t_local]


def _candidates_for(plan, x):
    n = len(x)
    cand = np.zeros((n, len(plan.t_syms)), dtype=np.uint8)
    for i, t in enumerate(x):
        loc = plan.t_index.get(t)
        if loc is None:
            raise UnknownSymbol(f"{t} is not a terminal of this grammar")
        cand[i, loc] = 1
    return cand


def parse_chart(cfg, x, cand=None):
    """Fill the chart for x (or for explicit per-position candidate sets)."""
    plan = plan_for(cfg)
    if cand is None:
        cand = _candidates_for(plan, tuple(x))
    n = cand.shape[0]
    nsyms = [len(lv) for lv in plan.nt_syms]
    ends = kernel.fill(n, cand, nsyms, list(plan.rules_arrays))
    return Chart(cfg, plan, n, cand, ends)


def membership(cfg, x):
    """Decide x in L(cfg)."""
    x = tuple(x)
    plan = plan_for(cfg)
    cand = _candidates_for(plan, x)  # unknown symbols are an error even on quick reject
    lo, hi = plan.len_bounds
    if not lo <= len(x) <= hi:
        return False
    return parse_chart(cfg, x, cand).accepted


def annotate(cfg, x):
    """Canonical derivation of a member string (lexicographically least parse)."""
    x = tuple(x)
    plan = plan_for(cfg)
    cand = _candidates_for(plan, x)
    lo, hi = plan.len_bounds
    if not lo <= len(x) <= hi:
        raise NotInLanguage(f"length {len(x)} outside derivable range [{lo}, {hi}]")
    return parse_chart(cfg, x, cand).derivation()


def count_parses(cfg, x, cap=None):
    """Number of distinct parse trees of x (diagnostic; capped when asked)."""
    x = tuple(x)
    plan = plan_for(cfg)
    try:
        cand = _candidates_for(plan, x)
    except UnknownSymbol:
        return 0
    chart = parse_chart(cfg, x, cand)
    if not chart.accepted:
        return 0
    memo = {}

    def rec(level0, s_local, i, j):
        key = (level0, s_local, i, j)
        got = memo.get(key)
        if got is not None:
            return got
        total = 0
        leaf = level0 == plan.depth - 2
        for _, body in plan.rules_local[level0][s_local]:
            if leaf:
                if j - i + 1 == len(body) and all(
                    cand[i + off, t] for off, t in enumerate(body)
                ):
                    total += 1
            elif len(body) == 2:
                for k in range(i, j):
                    if chart.has(level0 + 1, body[0], i, k) and chart.has(level0 + 1, body[1], k + 1, j):
                        total += rec(level0 + 1, body[0], i, k) * rec(level0 + 1, body[1], k + 1, j)
                        if cap is not None and total >= cap:
                            memo[key] = total
                            return total
            else:
                for k1 in range(i, j - 1):
                    if not chart.has(level0 + 1, body[0], i, k1):
                        continue
                    left = rec(level0 + 1, body[0], i, k1)
                    for k2 in range(k1 + 1, j):
                        if chart.has(level0 + 1, body[1], k1 + 1, k2) and chart.has(
                            level0 + 1, body[2], k2 + 1, j
                        ):
                            total += (
                                left
                                * rec(level0 + 1, body[1], k1 + 1, k2)
                                * rec(level0 + 1, body[2], k2 + 1, j)
                            )
                            if cap is not None and total >= cap:
                                memo[key] = total
                                return total
        memo[key] = total
        return total

    return rec(0, 0, 0, len(x) - 1)


def is_unambiguous(cfg, x):
    return count_parses(cfg, x, cap=2) == 1


def brute_force_language(cfg, max_len, budget=10**6):
    """All member strings of length <= max_len, by exhaustive rule expansion.

    Independent of the chart path: per-symbol string sets are built
    bottom-up by concatenating every rule-body combination.  The budget
    caps the number of concatenations formed.
    """
    remaining = budget
    sets = {t: {(t,)} for t in cfg.terminals}
    for level in reversed(cfg.levels[:-1]):
        for s in level:
            acc = set()
            for r in cfg.rules_of(s):
                partial = {()}
                for b in r.body:
                    grown = set()
                    for u in partial:
                        for v in sets[b]:
                            remaining -= 1
                            if remaining < 0:
                                raise BudgetExceeded(f"more than {budget} expansions")
                            w = u + v
                            if len(w) <= max_len:
                                grown.add(w)
                    partial = grown
                    if not partial:
                        break
                acc |= partial
            sets[s] = acc
    return sets[cfg.root]
