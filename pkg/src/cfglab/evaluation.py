"""Scoring model output against a grammar.

Three instruments:

* generation accuracy - the fraction of prefix+completion records whose
  concatenation is a member string;
* diversity tables - for each nonterminal a and deeper level l2, the
  multiset of level-l2 ancestor-symbol sequences generated under
  occurrences of a, with distinct and collision counts (zero collisions
  in an M-sample pool certifies on the order of M^2 generative options
  by the birthday argument);
* marginal tables - empirical probability of each symbol appearing as
  the level-l ancestor of position i.

Completion records arrive as files; nothing here ever calls a model.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import Exhausted, FormatError
from .parser import membership

MARGINAL_DENSE_QUANTILE = 0.999  # positions past this length quantile go to the sparse tail


@dataclass(frozen=True)
class CompletionRecord:
    prefix: tuple[int, ...]
    completion: tuple[int, ...]
    source: str = ""


def read_completions(fp, source=""):
    """One record per line: `c=<int>\\t<prefix ids>\\t<completion ids>`."""
    out = []
    for line_no, raw in enumerate(fp, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not parts[0].startswith("c="):
            raise FormatError(f"line {line_no}: expected 'c=<int>\\t<prefix>\\t<completion>'")
        try:
            c = int(parts[0][2:])
            prefix = tuple(int(t) for t in parts[1].split())
            completion = tuple(int(t) for t in parts[2].split())
        except ValueError:
            raise FormatError(f"line {line_no}: non-integer token id") from None
        if c != len(prefix):
            raise FormatError(f"line {line_no}: c={c} but prefix has {len(prefix)} tokens")
        out.append(CompletionRecord(prefix, completion, source))
    return out


def write_completions(fp, records):
    for r in records:
        fp.write(
            "c={}\t{}\t{}\n".format(
                len(r.prefix),
                " ".join(map(str, r.prefix)),
                " ".join(map(str, r.completion)),
            )
        )


def record_is_grammatical(cfg, record):
    return membership(cfg, record.prefix + record.completion)


def generation_accuracy(cfg, records):
    if not records:
        raise ValueError("no completion records")
    good = sum(1 for r in records if record_is_grammatical(cfg, r))
    return good / len(records)


def filter_grammatical(cfg, records, m):
    """First m grammatical records in stream order, plus how many were read."""
    kept = []
    consumed = 0
    for r in records:
        consumed += 1
        if record_is_grammatical(cfg, r):
            kept.append(r)
            if len(kept) == m:
                return kept, consumed
    raise Exhausted(f"only {len(kept)} grammatical records, needed {m}")


# ---------------------------------------------------------------------------
# Diversity
# ---------------------------------------------------------------------------


def span_symbols(deriv, level, i, j):
    """Level-`level` ancestor symbols over positions i..j (0-based,
    inclusive), deduplicated by ancestor index."""
    idx_row = deriv.anc_idx[level - 1]
    sym_row = deriv.anc_sym[level - 1]
    out = []
    prev = None
    for k in range(i, j + 1):
        if idx_row[k] != prev:
            out.append(sym_row[k])
            prev = idx_row[k]
    return tuple(out)


@dataclass
class DiversityTable:
    cells: dict = field(default_factory=dict)  # (symbol, l2) -> Counter of sequences

    def add(self, symbol, l2, seq):
        self.cells.setdefault((symbol, l2), Counter())[seq] += 1

    def total(self, symbol, l2):
        return sum(self.cells.get((symbol, l2), Counter()).values())

    def distinct(self, symbol, l2):
        return len(self.cells.get((symbol, l2), Counter()))

    def collisions(self, symbol, l2):
        return self.total(symbol, l2) - self.distinct(symbol, l2)


def collision_count(multiset):
    """Total multiplicity minus number of distinct elements."""
    c = Counter(multiset)
    return sum(c.values()) - len(c)


def diversity_table(cfg, pool):
    """Aggregate generation multisets over the pool.

    An occurrence of symbol a at level l1 is a maximal run of constant
    level-l1 ancestor index; each occurrence contributes its level-l2
    ancestor sequence for every l2 in {l1, ..., L}.
    """
    depth = cfg.depth
    table = DiversityTable()
    for deriv in pool:
        n = len(deriv.x)
        for l1 in range(1, depth):
            idx_row = deriv.anc_idx[l1 - 1]
            sym_row = deriv.anc_sym[l1 - 1]
            start = 0
            for k in range(1, n + 1):
                if k == n or idx_row[k] != idx_row[start]:
                    symbol = sym_row[start]
                    for l2 in range(l1, depth + 1):
                        table.add(symbol, l2, span_symbols(deriv, l2, start, k - 1))
                    start = k
    return table


def diversity_rows(cfg, table):
    """CSV-ready rows (level, symbol, l2, distinct, collisions, total)."""
    rows = []
    for l1 in range(1, cfg.depth):
        for symbol in cfg.levels[l1 - 1]:
            for l2 in range(l1, cfg.depth + 1):
                if (symbol, l2) in table.cells:
                    rows.append(
                        (
                            l1,
                            symbol,
                            l2,
                            table.distinct(symbol, l2),
                            table.collisions(symbol, l2),
                            table.total(symbol, l2),
                        )
                    )
    return rows


# ---------------------------------------------------------------------------
# Marginals
# ---------------------------------------------------------------------------


@dataclass
class MarginalTable:
    depth: int
    cutoff: int  # dense position limit (length quantile of the pool)
    counts: dict  # (level, symbol) -> int64 array of length cutoff
    totals: np.ndarray  # (depth, cutoff) samples covering each position
    tail: dict  # (level, position 1-based) -> Counter(symbol -> count)

    def prob(self, level, symbol, pos):
        """P[level-`level` ancestor of position `pos` (1-based) == symbol]."""
        if pos <= self.cutoff:
            row = self.counts.get((level, symbol))
            total = self.totals[level - 1, pos - 1]
            if row is None or total == 0:
                return 0.0
            return float(row[pos - 1]) / float(total)
        cell = self.tail.get((level, pos), Counter())
        total = sum(cell.values())
        return cell.get(symbol, 0) / total if total else 0.0

    def positions(self):
        dense = set(range(1, self.cutoff + 1))
        return sorted(dense | {p for (_, p) in self.tail})


def marginal_table(pool):
    if not pool:
        raise ValueError("empty pool")
    depth = pool[0].depth
    lengths = sorted(len(d.x) for d in pool)
    cutoff = lengths[min(len(lengths) - 1, int(MARGINAL_DENSE_QUANTILE * len(lengths)))]
    counts = {}
    totals = np.zeros((depth, cutoff), dtype=np.int64)
    tail = {}
    for deriv in pool:
        n = len(deriv.x)
        dense_n = min(n, cutoff)
        for level in range(1, depth + 1):
            sym_row = deriv.anc_sym[level - 1]
            totals[level - 1, :dense_n] += 1
            for i in range(dense_n):
                key = (level, sym_row[i])
                row = counts.get(key)
                if row is None:
                    row = counts.setdefault(key, np.zeros(cutoff, dtype=np.int64))
                row[i] += 1
            for i in range(dense_n, n):
                tail.setdefault((level, i + 1), Counter())[sym_row[i]] += 1
    return MarginalTable(depth=depth, cutoff=cutoff, counts=counts, totals=totals, tail=tail)


def marginal_rows(table):
    rows = []
    for (level, symbol), row in sorted(table.counts.items()):
        for pos in range(1, table.cutoff + 1):
            total = table.totals[level - 1, pos - 1]
            if total:
                rows.append((level, symbol, pos, float(row[pos - 1]) / float(total), int(total)))
    for (level, pos), cell in sorted(table.tail.items()):
        total = sum(cell.values())
        for symbol, cnt in sorted(cell.items()):
            rows.append((level, symbol, pos, cnt / total, int(total)))
    return rows


def marginal_diff(a, b):
    """Align two tables on the union of their supports; absent cells read 0.

    Returns (rows, max_abs) with rows (level, symbol, position, pa, pb, diff).
    """
    support = {}
    for table, slot in ((a, 0), (b, 1)):
        for level, symbol, pos, prob, _ in marginal_rows(table):
            support.setdefault((level, symbol, pos), [0.0, 0.0])[slot] = prob
    rows = []
    max_abs = 0.0
    for (level, symbol, pos), (pa, pb) in sorted(support.items()):
        diff = pa - pb
        max_abs = max(max_abs, abs(diff))
        rows.append((level, symbol, pos, pa, pb, diff))
    return rows, max_abs
