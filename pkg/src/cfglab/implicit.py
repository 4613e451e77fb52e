"""Observable-token extension: terminals as bags of surface tokens.

Each terminal symbol owns a bag of observable token ids with a sampling
distribution over the bag; bags may overlap.  A surface string belongs
to the extended language when some bag-consistent terminal assignment
is a member of the base language, which the chart decides by admitting
every compatible terminal at each leaf cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, InfeasibleSpec
from .parser import parse_chart, plan_for

ZIPF_EXPONENT = 1.0


@dataclass(frozen=True)
class ObservableVocab:
    n_tokens: int  # token ids are 0 .. n_tokens-1
    terminals: tuple[int, ...]
    bags: dict  # terminal -> tuple of token ids
    weights: dict  # terminal -> tuple of probabilities (aligned with bags)

    def label_of(self, token):
        """Bag-membership bit pattern of one token, ordered by terminal."""
        return tuple(1 if token in set(self.bags[t]) else 0 for t in self.terminals)

    def labels(self):
        return [self.label_of(tok) for tok in range(self.n_tokens)]


def _zipf_weights(k, rng):
    ranks = rng.permutation(k) + 1
    w = 1.0 / np.power(ranks.astype(np.float64), ZIPF_EXPONENT)
    return tuple(w / w.sum())


def build_observable_vocab(cfg, n_tokens, disjoint, uniform, rng, overlap=0.5):
    """Assign every terminal a bag over 0..n_tokens-1.

    Disjoint bags partition the token range into near-equal chunks.
    Overlapping bags admit each token independently with probability
    (1+overlap)/|T|, forcing one random token into any bag that came up
    empty.  Non-uniform distributions are Zipf over a shuffled bag.
    """
    terminals = cfg.terminals
    if disjoint and n_tokens < len(terminals):
        raise InfeasibleSpec(f"{n_tokens} tokens cannot cover {len(terminals)} disjoint bags")
    bags = {}
    if disjoint:
        perm = [int(v) for v in rng.permutation(n_tokens)]
        base, extra = divmod(n_tokens, len(terminals))
        at = 0
        for k, t in enumerate(terminals):
            size = base + (1 if k < extra else 0)
            bags[t] = tuple(sorted(perm[at : at + size]))
            at += size
    else:
        p = min(1.0, (1.0 + overlap) / len(terminals))
        for t in terminals:
            mask = rng.random(n_tokens) < p
            toks = [i for i in range(n_tokens) if mask[i]]
            if not toks:
                toks = [int(rng.integers(n_tokens))]
            bags[t] = tuple(toks)
    weights = {}
    for t in terminals:
        k = len(bags[t])
        weights[t] = tuple([1.0 / k] * k) if uniform else _zipf_weights(k, rng)
    return ObservableVocab(
        n_tokens=n_tokens, terminals=tuple(terminals), bags=bags, weights=weights
    )


def sample_observable(deriv, vocab, rng):
    """Draw one surface token per terminal, independently per position."""
    out = []
    for t in deriv.x:
        bag = vocab.bags[t]
        w = vocab.weights[t]
        out.append(bag[int(rng.choice(len(bag), p=w))])
    return tuple(out)


def membership_observable(cfg, vocab, y):
    """True iff some bag-consistent reading of y is in the base language."""
    y = tuple(y)
    if not y:
        return False
    plan = plan_for(cfg)
    token_sets = {t: set(vocab.bags[t]) for t in vocab.terminals}
    cand = np.zeros((len(y), len(plan.t_syms)), dtype=np.uint8)
    for i, tok in enumerate(y):
        for loc, t in enumerate(plan.t_syms):
            if tok in token_sets[t]:
                cand[i, loc] = 1
        # a token outside every bag leaves the row empty: a false verdict
    return parse_chart(cfg, y, cand=cand).accepted


# ---------------------------------------------------------------------------
# Embedding correlation
# ---------------------------------------------------------------------------


def _label_sort_key(label):
    # singleton bags first in bag order, then richer overlap patterns
    return (sum(label), tuple(1 - b for b in label))


def embedding_correlation(embeddings, labels):
    """Cosine similarity of mean-centered embedding rows, grouped by label.

    Rows are reordered so tokens with identical bag patterns are
    contiguous.  Zero-variance rows are degenerate: any similarity
    against them (their diagonal included) reads 0.

    Returns (matrix, order, groups, degenerate) where groups is a list
    of (label, start, stop) spans into the reordered axis.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] != len(labels):
        raise ValueError("one embedding row per labelled token required")
    order = sorted(range(emb.shape[0]), key=lambda i: (_label_sort_key(labels[i]), i))
    emb = emb[order]
    centered = emb - emb.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    degenerate = [i for i in range(len(order)) if norms[i] == 0.0]
    safe = np.where(norms == 0.0, 1.0, norms)
    unit = centered / safe[:, None]
    corr = unit @ unit.T
    for i in degenerate:
        corr[i, :] = 0.0
        corr[:, i] = 0.0
    groups = []
    start = 0
    for k in range(1, len(order) + 1):
        if k == len(order) or labels[order[k]] != labels[order[start]]:
            groups.append((labels[order[start]], start, k))
            start = k
    return corr, order, groups, degenerate


# ---------------------------------------------------------------------------
# Vocab file format:  `bag <t>: <token ids>` / optional `weights <t>: <floats>`
# ---------------------------------------------------------------------------


def write_vocab(fp, vocab):
    fp.write(f"tokens {vocab.n_tokens}\n")
    for t in vocab.terminals:
        fp.write(f"bag {t}: {' '.join(map(str, vocab.bags[t]))}\n")
        w = vocab.weights[t]
        if len(set(w)) > 1:
            fp.write(f"weights {t}: {' '.join(repr(float(v)) for v in w)}\n")


def read_vocab(fp, terminals):
    n_tokens = None
    bags = {}
    weights = {}
    for line_no, raw in enumerate(fp, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "tokens":
            n_tokens = int(parts[1])
        elif parts[0] == "bag":
            t = int(parts[1].rstrip(":"))
            bags[t] = tuple(int(v) for v in parts[2:])
        elif parts[0] == "weights":
            t = int(parts[1].rstrip(":"))
            weights[t] = tuple(float(v) for v in parts[2:])
        else:
            raise FormatError(f"line {line_no}: unknown directive {parts[0]!r}")
    if n_tokens is None:
        raise FormatError("vocab file missing 'tokens' line")
    for t in terminals:
        if t not in bags or not bags[t]:
            raise FormatError(f"terminal {t} has no bag")
        if t not in weights:
            k = len(bags[t])
            weights[t] = tuple([1.0 / k] * k)
        total = sum(weights[t])
        if abs(total - 1.0) > 1e-9:
            raise FormatError(f"weights of terminal {t} sum to {total}, not 1")
        if any(w <= 0 for w in weights[t]):
            raise FormatError(f"weights of terminal {t} must be positive")
    return ObservableVocab(
        n_tokens=n_tokens, terminals=tuple(terminals), bags=bags, weights=weights
    )
