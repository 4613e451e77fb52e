"""Leveled context-free grammars.

A grammar has L levels of pairwise-disjoint symbols.  Level 1 is the
single root, level L holds the terminals, and every rule rewrites a
level-l symbol into 2 or 3 symbols of level l+1.  Symbol ids are dense
integers 1..total, assigned level by level, so the level of an id is
determined by the size vector alone.

Rule order within a head is significant: it is the tie-breaking order
used by the chart parser, and the text format preserves it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

from . import rng as rngmod
from .errors import LevelError, ParseError, SynthesisExhausted

RETRY_BUDGET = 1000  # rejection-sampling attempts per head before giving up


@dataclass(frozen=True)
class Rule:
    head: int
    body: tuple[int, ...]
    index: int  # ordinal within the head's rule list, file order


@dataclass(frozen=True)
class Cfg:
    """Immutable leveled grammar; safe to share across threads."""

    levels: tuple[tuple[int, ...], ...]  # levels[k] = symbols of level k+1
    rules: tuple[Rule, ...]  # file order

    @property
    def depth(self):
        return len(self.levels)

    @property
    def sizes(self):
        return tuple(len(lv) for lv in self.levels)

    @property
    def root(self):
        return self.levels[0][0]

    @property
    def terminals(self):
        return self.levels[-1]

    def level_of(self, symbol):
        return _level_map(self)[symbol]

    def rules_of(self, head):
        return _head_map(self).get(head, ())


@lru_cache(maxsize=256)
def _level_map(cfg):
    out = {}
    for k, level in enumerate(cfg.levels):
        for s in level:
            out[s] = k + 1
    return out


@lru_cache(maxsize=256)
def _head_map(cfg):
    out = {}
    for r in cfg.rules:
        out.setdefault(r.head, []).append(r)
    return {h: tuple(rs) for h, rs in out.items()}


def make_cfg(levels, bodies_by_head):
    """Build a Cfg from levels and an iterable of (head, body) pairs.

    Bodies of one head keep their given order; rule indices are assigned
    from it.
    """
    counts = {}
    rules = []
    for head, body in bodies_by_head:
        idx = counts.get(head, 0)
        counts[head] = idx + 1
        rules.append(Rule(head, tuple(body), idx))
    return Cfg(tuple(tuple(lv) for lv in levels), tuple(rules))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    level: int | None = None
    symbol: int | None = None
    rule_index: int | None = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self):
        return not self.violations

    @property
    def ok(self):
        return not self.violations

    def add(self, code, message, **where):
        self.violations.append(Violation(code, message, **where))


def validate_cfg(cfg):
    """Check every structural invariant; violations are report entries."""
    rep = ValidationReport()
    if not cfg.levels:
        rep.add("empty", "grammar has no levels")
        return rep
    if len(cfg.levels[0]) != 1:
        rep.add("root", f"level 1 must hold exactly the root, got {len(cfg.levels[0])} symbols", level=1)

    seen = {}
    for k, level in enumerate(cfg.levels, start=1):
        for s in level:
            if s in seen:
                rep.add("level-overlap", f"symbol {s} appears at levels {seen[s]} and {k}", level=k, symbol=s)
            else:
                seen[s] = k

    heads_with_rules = set()
    for r in cfg.rules:
        heads_with_rules.add(r.head)
        hl = seen.get(r.head)
        if hl is None:
            rep.add("unknown-head", f"rule head {r.head} is not a grammar symbol", symbol=r.head, rule_index=r.index)
            continue
        if hl == cfg.depth:
            rep.add("terminal-head", f"terminal {r.head} has a rule", level=hl, symbol=r.head, rule_index=r.index)
            continue
        if not 2 <= len(r.body) <= 3:
            rep.add(
                "rule-length",
                f"rule length out of range: {r.head} -> {' '.join(map(str, r.body))}",
                level=hl,
                symbol=r.head,
                rule_index=r.index,
            )
        for b in r.body:
            bl = seen.get(b)
            if bl is None:
                rep.add("unknown-body", f"body symbol {b} is not a grammar symbol", symbol=r.head, rule_index=r.index)
            elif bl != hl + 1:
                rep.add(
                    "level-skip",
                    f"rule {r.head} -> ... uses level-{bl} symbol {b}; expected level {hl + 1}",
                    level=hl,
                    symbol=r.head,
                    rule_index=r.index,
                )

    for k, level in enumerate(cfg.levels[:-1], start=1):
        for s in level:
            if s not in heads_with_rules:
                rep.add("unproductive nonterminal", f"nonterminal {s} has no rules", level=k, symbol=s)
    return rep


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CfgSynthSpec:
    """Constraints for random grammar construction.

    body_lengths narrows the allowed rule lengths (subset of {2, 3});
    fixed-length grammars give equal-length strings, which is handy for
    position-resolved statistics.
    """

    sizes: tuple[int, ...]
    degree_set: frozenset[int]
    distinct_consecutive: bool = False
    seed: int | None = None
    body_lengths: frozenset[int] = frozenset({2, 3})

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(self.sizes))
        object.__setattr__(self, "degree_set", frozenset(self.degree_set))
        object.__setattr__(self, "body_lengths", frozenset(self.body_lengths))
        if len(self.sizes) < 2:
            raise ValueError("need at least two levels")
        if self.sizes[0] != 1:
            raise ValueError("level 1 must have exactly one symbol")
        if not self.body_lengths <= {2, 3}:
            raise ValueError("body lengths must be within {2, 3}")
        if not self.degree_set or min(self.degree_set) < 1:
            raise ValueError("degrees must be positive")


def _body_ok(body, distinct_consecutive):
    if not distinct_consecutive:
        return True
    return all(a != b for a, b in zip(body, body[1:]))


def synthesize_cfg(spec, rng=None):
    """Randomly construct a grammar meeting `spec`.

    Per head: draw a degree from the degree set, then rejection-sample
    that many bodies.  Under distinct_consecutive, bodies may not repeat
    a symbol in adjacent positions and one head may not carry two
    identical bodies.  After a level is drawn, a best-effort repair pass
    points unused next-level symbols at existing body slots so synthesized
    grammars do not ship dead symbols.

    Raises SynthesisExhausted when a head cannot be filled within the
    retry budget.
    """
    if rng is None:
        rng = rngmod.stream(0 if spec.seed is None else spec.seed)
    sizes = spec.sizes
    levels = []
    next_id = 1
    for n in sizes:
        levels.append(tuple(range(next_id, next_id + n)))
        next_id += n

    degrees = sorted(spec.degree_set)
    lengths = sorted(spec.body_lengths)
    bodies_by_head = []
    for k in range(len(sizes) - 1):
        child_syms = levels[k + 1]
        level_rules = []
        for head in levels[k]:
            degree = degrees[rng.integers(len(degrees))] if len(degrees) > 1 else degrees[0]
            chosen = []
            attempts = 0
            while len(chosen) < degree:
                attempts += 1
                if attempts > RETRY_BUDGET:
                    raise SynthesisExhausted(
                        f"cannot draw {degree} bodies for head {head} (level {k + 1}) within {RETRY_BUDGET} attempts"
                    )
                blen = lengths[rng.integers(len(lengths))] if len(lengths) > 1 else lengths[0]
                body = tuple(child_syms[j] for j in rng.integers(len(child_syms), size=blen))
                if not _body_ok(body, spec.distinct_consecutive):
                    continue
                if spec.distinct_consecutive and body in chosen:
                    continue
                chosen.append(body)
            level_rules.extend((head, body) for body in chosen)

        level_rules = _repair_coverage(level_rules, child_syms, spec.distinct_consecutive, rng)
        bodies_by_head.extend(level_rules)

    cfg = make_cfg(levels, bodies_by_head)
    report = validate_cfg(cfg)
    assert report.ok, report.violations
    return cfg


def _repair_coverage(level_rules, child_syms, distinct_consecutive, rng):
    """Point uncovered child symbols at random body slots when legal."""
    used = {s for _, body in level_rules for s in body}
    missing = [s for s in child_syms if s not in used]
    if not missing:
        return level_rules
    rules = [(h, list(b)) for h, b in level_rules]
    slots = [(ri, pi) for ri, (_, b) in enumerate(rules) for pi in range(len(b))]
    for sym in missing:
        for _ in range(RETRY_BUDGET):
            ri, pi = slots[rng.integers(len(slots))]
            head, body = rules[ri]
            old = body[pi]
            counted = sum(1 for _, b in rules for s in b if s == old)
            if counted <= 1:
                continue  # would orphan another symbol
            body[pi] = sym
            cand = tuple(body)
            same_head = [tuple(b) for h, b in rules if h == head]
            if _body_ok(cand, distinct_consecutive) and (
                not distinct_consecutive or same_head.count(cand) == 1
            ):
                break
            body[pi] = old
        # coverage is best-effort; an unrepaired symbol leaves the grammar valid
    return [(h, tuple(b)) for h, b in rules]


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------
#
#   cfg <L> <size_1> ... <size_L>
#   <head> -> <b1> <b2> [<b3>]
#
# '#' starts a comment; rule order within a head is significant.


def render_grammar_text(cfg):
    lines = ["cfg {} {}".format(cfg.depth, " ".join(str(n) for n in cfg.sizes))]
    for r in cfg.rules:
        lines.append("{} -> {}".format(r.head, " ".join(str(b) for b in r.body)))
    return "\n".join(lines) + "\n"


def parse_grammar_text(text):
    header = None
    levels = []
    level_of = {}
    bodies = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            parts = line.split()
            if parts[0] != "cfg" or len(parts) < 3:
                raise ParseError(line_no, "expected header 'cfg <L> <sizes...>'")
            try:
                depth = int(parts[1])
                sizes = [int(p) for p in parts[2:]]
            except ValueError:
                raise ParseError(line_no, f"non-integer in header: {line!r}") from None
            if depth != len(sizes):
                raise ParseError(line_no, f"header says {depth} levels but lists {len(sizes)} sizes")
            if any(n < 1 for n in sizes):
                raise ParseError(line_no, "level sizes must be positive")
            next_id = 1
            for k, n in enumerate(sizes, start=1):
                level = tuple(range(next_id, next_id + n))
                levels.append(level)
                for s in level:
                    level_of[s] = k
                next_id += n
            header = (depth, sizes)
            continue
        if "->" not in line:
            raise ParseError(line_no, f"expected '<head> -> <body>': {line!r}")
        head_txt, body_txt = line.split("->", 1)
        try:
            head = int(head_txt)
            body = tuple(int(t) for t in body_txt.split())
        except ValueError:
            raise ParseError(line_no, f"non-integer symbol id: {line!r}") from None
        if not 2 <= len(body) <= 3:
            raise ParseError(line_no, f"rule body must have 2 or 3 symbols, got {len(body)}")
        if head not in level_of:
            raise ParseError(line_no, f"unknown head symbol {head}")
        hl = level_of[head]
        if hl >= len(levels):
            raise LevelError(f"line {line_no}: terminal {head} cannot head a rule")
        for b in body:
            if b not in level_of:
                raise ParseError(line_no, f"unknown body symbol {b}")
            if level_of[b] != hl + 1:
                raise LevelError(
                    f"line {line_no}: symbol {b} is declared at level {level_of[b]} "
                    f"but used at level {hl + 1}"
                )
        bodies.append((head, body))
    if header is None:
        raise ParseError(0, "empty grammar file")
    return make_cfg(levels, bodies)


def grammar_hash(cfg):
    """Content hash of the canonical text rendering (hex)."""
    return hashlib.sha256(render_grammar_text(cfg).encode()).hexdigest()


def load_grammar(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_grammar_text(f.read())


def save_grammar(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_grammar_text(cfg))


def toy_grammar():
    """Three-level reference grammar with language {4455, 4555}."""
    return make_cfg(
        [(1,), (2, 3), (4, 5)],
        [(1, (2, 3)), (2, (4, 4)), (2, (4, 5)), (3, (5, 5))],
    )
