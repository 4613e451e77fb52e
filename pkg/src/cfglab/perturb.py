"""Prefix corruption and training-data perturbations.

Replacement draws are uniform over the full symbol set, original
included; excluding it would change the effective rates.  The fraction
selector flags an exact count of entries rather than coin-flipping each
one, so small corpora hit the requested fraction reproducibly.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PerturbConfig:
    kind: str  # t_random | nt_random | nt_deterministic
    rate: float  # per-element perturbation probability
    gamma: float = 1.0  # fraction of samples perturbed
    rho: float = 0.0  # prefix corruption probability (evaluation side)
    pi: tuple[int, ...] | None = None  # successor map over the deepest NT level
    seed: int | None = None

    def __post_init__(self):
        for name in ("rate", "gamma", "rho"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {v}")
        if self.kind not in ("t_random", "nt_random", "nt_deterministic"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "nt_deterministic" and self.pi is not None:
            if sorted(self.pi) != sorted(set(self.pi)):
                raise ValueError("pi must be a bijection")


def corrupt_prefix(x, c, rho, rng, terminals):
    """Corrupt the first c positions, each selected independently w.p. rho.

    Selected positions are redrawn uniformly from the terminal set (the
    draw may coincide with the original).  Returns only the corrupted
    prefix; positions past c are never touched.
    """
    if c > len(x):
        raise ValueError(f"cut {c} beyond sequence length {len(x)}")
    terminals = tuple(terminals)
    prefix = list(x[:c])
    for i in range(c):
        if rho > 0 and rng.random() < rho:
            prefix[i] = terminals[int(rng.integers(len(terminals)))]
    return tuple(prefix)


def perturb_t_level(x, rate, rng, terminals):
    """Independent per-position terminal replacement."""
    terminals = tuple(terminals)
    out = list(x)
    for i in range(len(out)):
        if rate > 0 and rng.random() < rate:
            out[i] = terminals[int(rng.integers(len(terminals)))]
    return tuple(out)


def perturb_t_level_derivation(deriv, rate, rng, terminals):
    """Terminal-level perturbation keeping the generating tree annotations."""
    from .sampler import derivation_from_levels

    new_x = perturb_t_level(deriv.x, rate, rng, terminals)
    symbols = [list(row) for row in deriv.symbols[:-1]] + [list(new_x)]
    return derivation_from_levels(symbols, [tuple(p) for p in deriv.parents])


def cyclic_pi(symbols, rng):
    """Random cyclic successor map over `symbols`: a derangement for >= 2."""
    order = list(symbols)
    perm = rng.permutation(len(order))
    cycle = [order[int(i)] for i in perm]
    succ = {cycle[i]: cycle[(i + 1) % len(cycle)] for i in range(len(cycle))}
    return tuple(succ[s] for s in symbols)


def perturb_nt_level_derivation(deriv, rate, mode, rng, cfg, pi=None):
    """Perturb the deepest nonterminal level, then regrow the terminals.

    mode 'random': each level-(L-1) symbol is redrawn uniformly from its
    level w.p. `rate`.  mode 'deterministic': selected symbols map
    through the successor permutation `pi`.  Terminals below the
    (possibly modified) sequence are regenerated with fresh uniform rule
    choices either way; the tree above is untouched, so the returned
    derivation records the generating annotations of the perturbed
    sample.
    """
    from .sampler import derivation_from_levels

    depth = cfg.depth
    level_syms = list(deriv.symbols[depth - 2])
    pool = cfg.levels[depth - 2]
    if mode == "deterministic":
        if pi is None:
            raise ValueError("deterministic mode needs a permutation")
        succ = dict(zip(pool, pi))
    for i in range(len(level_syms)):
        if rate > 0 and rng.random() < rate:
            if mode == "random":
                level_syms[i] = pool[int(rng.integers(len(pool)))]
            else:
                level_syms[i] = succ[level_syms[i]]
    terminals = []
    term_par = []
    for pos, s in enumerate(level_syms, start=1):
        rules = cfg.rules_of(s)
        rule = rules[int(rng.integers(len(rules)))]
        terminals.extend(rule.body)
        term_par.extend([pos] * len(rule.body))
    symbols = [list(row) for row in deriv.symbols[: depth - 2]]
    symbols.append(level_syms)
    symbols.append(terminals)
    parents = [tuple(p) for p in deriv.parents[: depth - 1]]
    parents.append(tuple(term_par))
    return derivation_from_levels(symbols, parents)


def perturb_nt_level(deriv, rate, mode, rng, cfg, pi=None):
    """Terminal sequence of the perturbed-and-regrown sample."""
    new = perturb_nt_level_derivation(deriv, rate, mode, rng, cfg, pi=pi)
    return new.x, new.symbols[cfg.depth - 2]


def apply_fraction(samples, gamma, perturb_fn, rng):
    """Perturb exactly round(gamma * N) samples, chosen uniformly.

    Order is preserved; returns (outputs, flags) with one flag per entry.
    """
    n = len(samples)
    k = int(gamma * n + 0.5)  # round half up, reproducibly
    chosen = set(int(i) for i in rng.choice(n, size=k, replace=False)) if k else set()
    out = []
    flags = []
    for i, s in enumerate(samples):
        if i in chosen:
            out.append(perturb_fn(s))
            flags.append(True)
        else:
            out.append(s)
            flags.append(False)
    return out, flags
