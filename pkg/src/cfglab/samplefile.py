"""Annotated-sample and plain-token text formats.

An annotated file is a sequence of blank-line-separated blocks, one per
sample:

    sample grammar=<sha256 hex>
    perturbed: 1            (optional flag)
    x: 4 4 5 5
    p1: 1 1 1 1
    s1: 1 1 1 1
    p2: 1 1 2 2
    s2: 2 2 3 3
    b: 3 2 3 1

p<l>/s<l> rows cover levels 1..L-1; the terminal-level rows are implied
by x.  The `b` row is the deepest-boundary vector (sentinel L where the
position closes nothing).  '#' starts a comment anywhere.

A plain-token file is one sample per line, space-separated terminal ids.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import FormatError
from .sampler import Derivation, boundaries


@dataclass(frozen=True)
class SampleRecord:
    derivation: Derivation
    grammar_hash: str
    perturbed: bool = False


def _derivation_to_lines(deriv):
    lines = [f"x: {' '.join(map(str, deriv.x))}"]
    for k in range(deriv.depth - 1):
        lines.append(f"p{k + 1}: {' '.join(map(str, deriv.anc_idx[k]))}")
        lines.append(f"s{k + 1}: {' '.join(map(str, deriv.anc_sym[k]))}")
    prof = boundaries(deriv)
    lines.append(f"b: {' '.join(map(str, prof.deepest))}")
    return lines


def write_annotated(fp, derivations, grammar_hash, perturbed=None):
    for idx, deriv in enumerate(derivations):
        fp.write(f"sample grammar={grammar_hash}\n")
        if perturbed is not None and perturbed[idx]:
            fp.write("perturbed: 1\n")
        for line in _derivation_to_lines(deriv):
            fp.write(line + "\n")
        fp.write("\n")


def _rebuild(x, p_rows, s_rows):
    """Reconstruct level sequences and parent links from ancestor matrices."""
    depth = len(p_rows) + 1
    n = len(x)
    symbols = []
    for k in range(depth - 1):
        seq = []
        last = None
        for i in range(n):
            idx = p_rows[k][i]
            if idx != last:
                if idx != len(seq) + 1:
                    raise FormatError(f"p{k + 1} row is not a run sequence 1..m")
                seq.append(s_rows[k][i])
                last = idx
        symbols.append(tuple(seq))
    symbols.append(tuple(x))

    parents = [()]
    for k in range(1, depth):
        m = len(symbols[k])
        par = [0] * m
        if k == depth - 1:
            for i in range(n):
                par[i] = p_rows[k - 1][i]
        else:
            for i in range(n):
                par[p_rows[k][i] - 1] = p_rows[k - 1][i]
        parents.append(tuple(par))

    from .sampler import derivation_from_levels

    deriv = derivation_from_levels(symbols, parents)
    if deriv.anc_idx != tuple(tuple(r) for r in p_rows) + (deriv.anc_idx[-1],):
        raise FormatError("ancestor index rows are internally inconsistent")
    return deriv


_KEY_RE = re.compile(r"^(x|b|perturbed|p\d+|s\d+):$")


def read_annotated(fp):
    """Parse an annotated file into SampleRecord objects."""
    records = []
    block = {}
    ghash = None
    line_no = 0

    def flush():
        nonlocal block, ghash
        if not block:
            return
        if "x" not in block:
            raise FormatError("sample block without an x row")
        x = block["x"]
        depth = 1 + sum(1 for k in block if re.fullmatch(r"p\d+", k))
        p_rows = []
        s_rows = []
        for k in range(1, depth):
            if f"p{k}" not in block or f"s{k}" not in block:
                raise FormatError(f"sample block missing p{k}/s{k} rows")
            p_rows.append(block[f"p{k}"])
            s_rows.append(block[f"s{k}"])
        deriv = _rebuild(x, p_rows, s_rows)
        records.append(
            SampleRecord(
                derivation=deriv,
                grammar_hash=ghash or "",
                perturbed=bool(block.get("perturbed", [0])[0]),
            )
        )
        block = {}
        ghash = None

    for raw in fp:
        line_no += 1
        line = raw.split("#", 1)[0].strip()
        if not line:
            flush()
            continue
        if line.startswith("sample"):
            flush()
            m = re.search(r"grammar=([0-9a-f]+)", line)
            ghash = m.group(1) if m else ""
            continue
        if ":" not in line:
            raise FormatError(f"line {line_no}: expected 'key: values'")
        key, _, rest = line.partition(":")
        key = key.strip()
        if not _KEY_RE.match(key + ":"):
            raise FormatError(f"line {line_no}: unknown row kind {key!r}")
        try:
            block[key] = [int(t) for t in rest.split()]
        except ValueError:
            raise FormatError(f"line {line_no}: non-integer value") from None
    flush()
    return records


def write_tokens(fp, sequences):
    for x in sequences:
        fp.write(" ".join(map(str, x)) + "\n")


def read_tokens(fp):
    out = []
    for line_no, raw in enumerate(fp, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.append(tuple(int(t) for t in line.split()))
        except ValueError:
            raise FormatError(f"line {line_no}: non-integer token id") from None
    return out
