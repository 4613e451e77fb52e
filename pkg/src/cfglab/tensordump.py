"""Binary interchange for hidden states and attention weights.

Layout (little-endian, float32 payload):

    magic 'CFGT' | u32 version=1 | 32-byte grammar hash
    | u32 sequence count | u32 layers | u32 heads | u32 hidden dim
    | u32 max sequence length
    per sequence:
      u32 true length n | n x u16 token ids
      | hidden  f32 [layer][position][dim]
      | attention f32 [layer][head][query j][key i <= j]  (packed rows)

Attention above the diagonal is implied zero; packing the causal
triangle halves the file.  Readers validate finiteness and that every
(layer, head, query) row sums to 1 within 1e-4.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .errors import FormatError, NonFiniteError, StochasticityError
from .sampler import boundaries, sample_derivation

MAGIC = b"CFGT"
VERSION = 1
ROW_SUM_TOL = 1e-4


@dataclass
class SequenceDump:
    tokens: np.ndarray  # (n,) uint16
    hidden: np.ndarray  # (layers, n, dim) float32
    attention: np.ndarray  # (layers, heads, n*(n+1)//2) float32, packed rows

    @property
    def n(self):
        return int(self.tokens.shape[0])

    def attention_matrix(self, layer, head):
        """Dense (n, n) view, zeros above the diagonal."""
        n = self.n
        out = np.zeros((n, n), dtype=np.float32)
        packed = self.attention[layer, head]
        at = 0
        for j in range(n):
            out[j, : j + 1] = packed[at : at + j + 1]
            at += j + 1
        return out


@dataclass
class TensorDump:
    grammar_hash: str  # 64 hex chars (zero hash when unbound)
    layers: int
    heads: int
    dim: int
    max_len: int
    sequences: list[SequenceDump] = field(default_factory=list)


def _require(cond, message):
    if not cond:
        raise FormatError(message)


def validate_dump(dump):
    """Raise on non-finite values or non-stochastic attention rows."""
    for si, seq in enumerate(dump.sequences):
        if not np.isfinite(seq.hidden).all():
            raise NonFiniteError(f"sequence {si}: non-finite hidden state")
        if not np.isfinite(seq.attention).all():
            raise NonFiniteError(f"sequence {si}: non-finite attention weight")
        n = seq.n
        at = 0
        sums = np.zeros((dump.layers, dump.heads, n), dtype=np.float64)
        for j in range(n):
            sums[:, :, j] = seq.attention[:, :, at : at + j + 1].astype(np.float64).sum(axis=2)
            at += j + 1
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            l, h, j = (int(v[0]) for v in np.nonzero(bad))
            raise StochasticityError(
                f"sequence {si}: attention row (layer {l}, head {h}, query {j}) "
                f"sums to {sums[l, h, j]:.6f}"
            )


def write_dump(dump, validate=True):
    if validate:
        validate_dump(dump)
    ghash = bytes.fromhex(dump.grammar_hash) if dump.grammar_hash else b"\x00" * 32
    if len(ghash) != 32:
        raise FormatError("grammar hash must be 32 bytes")
    parts = [
        struct.pack(
            "<4sI32sIIIII",
            MAGIC,
            VERSION,
            ghash,
            len(dump.sequences),
            dump.layers,
            dump.heads,
            dump.dim,
            dump.max_len,
        )
    ]
    for seq in dump.sequences:
        n = seq.n
        parts.append(struct.pack("<I", n))
        parts.append(seq.tokens.astype("<u2").tobytes())
        parts.append(seq.hidden.astype("<f4").tobytes())
        parts.append(seq.attention.astype("<f4").tobytes())
    return b"".join(parts)


def read_dump(data, validate=True):
    head_size = struct.calcsize("<4sI32sIIIII")
    _require(len(data) >= head_size, "dump truncated in header")
    magic, version, ghash, count, layers, heads, dim, max_len = struct.unpack(
        "<4sI32sIIIII", data[:head_size]
    )
    _require(magic == MAGIC, "not a tensor dump (bad magic)")
    _require(version == VERSION, f"unsupported dump version {version}")
    dump = TensorDump(
        grammar_hash=ghash.hex(),
        layers=layers,
        heads=heads,
        dim=dim,
        max_len=max_len,
        sequences=[],
    )
    at = head_size
    for si in range(count):
        _require(len(data) >= at + 4, f"dump truncated before sequence {si}")
        (n,) = struct.unpack("<I", data[at : at + 4])
        at += 4
        tok_bytes = n * 2
        hid_bytes = layers * n * dim * 4
        tri = n * (n + 1) // 2
        att_bytes = layers * heads * tri * 4
        _require(
            len(data) >= at + tok_bytes + hid_bytes + att_bytes,
            f"dump truncated inside sequence {si}",
        )
        tokens = np.frombuffer(data[at : at + tok_bytes], dtype="<u2").copy()
        at += tok_bytes
        hidden = (
            np.frombuffer(data[at : at + hid_bytes], dtype="<f4")
            .reshape(layers, n, dim)
            .copy()
        )
        at += hid_bytes
        attention = (
            np.frombuffer(data[at : at + att_bytes], dtype="<f4")
            .reshape(layers, heads, tri)
            .copy()
        )
        at += att_bytes
        dump.sequences.append(SequenceDump(tokens=tokens, hidden=hidden, attention=attention))
    _require(at == len(data), "trailing bytes after final sequence")
    if validate:
        validate_dump(dump)
    return dump


def load_dump(path, validate=True):
    with open(path, "rb") as f:
        return read_dump(f.read(), validate=validate)


def save_dump(dump, path, validate=True):
    with open(path, "wb") as f:
        f.write(write_dump(dump, validate=validate))


# ---------------------------------------------------------------------------
# Fixtures: model-free dumps for exercising the analysis pipeline
# ---------------------------------------------------------------------------


def _pack_rows(rows):
    return np.concatenate([rows[j, : j + 1] for j in range(rows.shape[0])])


def uniform_window_attention(n, heads):
    """Head h spreads weight 1/min(j+1, 2^(h+1)-1) over its trailing window."""
    out = np.zeros((heads, n * (n + 1) // 2), dtype=np.float32)
    for h in range(heads):
        window = (1 << (h + 1)) - 1
        at = 0
        for j in range(n):
            k = min(j + 1, window)
            out[h, at + j + 1 - k : at + j + 1] = 1.0 / k
            at += j + 1
    return out


def boundary_mass_attention(n, deepest, depth, beta=8.0):
    """Each row bumps the latest subtree-closing key strictly before it.

    Concentrating mass on the most adjacent previous end (rather than on
    every end) keeps the end-conditioned statistics clean: a key collects
    mass exactly from the queries it is the most adjacent end for, which
    is the chart-style access pattern the diagnostics are built to
    detect, and end-to-end pairs carry mass only at the smallest ancestor
    distance.
    """
    packed = np.zeros(n * (n + 1) // 2, dtype=np.float32)
    latest = -1
    at = 0
    for j in range(n):
        row = np.ones(j + 1)
        if latest >= 0:
            # ends closer to the root get proportionally more mass
            row[latest] += beta * (depth - deepest[latest])
        packed[at : at + j + 1] = row / row.sum()
        at += j + 1
        if deepest[j] < depth:
            latest = j
    return packed


def one_hot_ancestors(deriv, cfg, shift=0):
    """Per-position concatenated one-hot codes of every nonterminal level.

    shift=s stores position i's code at position i+s (clamped), so probes
    with a locality mask can be exercised against displaced signal.
    """
    depth = cfg.depth
    sizes = [len(cfg.levels[k]) for k in range(depth - 1)]
    offsets = np.cumsum([0] + sizes)
    dim = int(offsets[-1])
    n = len(deriv.x)
    enc = np.zeros((n, dim), dtype=np.float32)
    for k in range(depth - 1):
        index = {s: i for i, s in enumerate(cfg.levels[k])}
        for i in range(n):
            enc[i, offsets[k] + index[deriv.anc_sym[k][i]]] = 1.0
    if shift:
        rolled = np.zeros_like(enc)
        for i in range(n):
            src = max(0, i - shift)
            rolled[i] = enc[src]
        enc = rolled
    return enc


def fixture_from_derivations(cfg, derivations, profile, rng, layers=2, heads=2,
                             dim=None, noise=0.0, shift=0, beta=4.0, grammar_hash=""):
    """Build a dump aligned with the given derivations.

    uniform_window: attention is the fixed trailing-window pattern and
    hidden states are pure noise (the no-signal baseline).  planted:
    hidden states are one-hot ancestor codes (plus optional noise) and
    attention bumps keys at subtree boundaries.
    """
    if profile not in ("uniform_window", "planted"):
        raise ValueError(f"unknown fixture profile {profile!r}")
    depth = cfg.depth
    seqs = []
    plan_dim = dim
    for deriv in derivations:
        n = len(deriv.x)
        if profile == "planted":
            enc = one_hot_ancestors(deriv, cfg, shift=shift)
            if plan_dim is None:
                plan_dim = enc.shape[1]
            if enc.shape[1] < plan_dim:
                enc = np.pad(enc, ((0, 0), (0, plan_dim - enc.shape[1])))
            hidden = np.repeat(enc[None, :, :], layers, axis=0)
            if noise > 0:
                hidden = hidden + noise * rng.standard_normal(hidden.shape)
            deepest = boundaries(deriv).deepest
            att_one = boundary_mass_attention(n, deepest, depth, beta=beta)
            attention = np.repeat(att_one[None, :], layers * heads, axis=0).reshape(
                layers, heads, -1
            )
        else:
            if plan_dim is None:
                plan_dim = 8
            hidden = rng.standard_normal((layers, n, plan_dim))
            hidden[:, :, 0] = 1.0  # constant channel, as real hidden states carry
            att_one = uniform_window_attention(n, heads)
            attention = np.repeat(att_one[None, :, :], layers, axis=0)
        seqs.append(
            SequenceDump(
                tokens=np.asarray(deriv.x, dtype=np.uint16),
                hidden=hidden.astype(np.float32),
                attention=attention.astype(np.float32),
            )
        )
    max_len = max((s.n for s in seqs), default=0)
    return TensorDump(
        grammar_hash=grammar_hash or "0" * 64,
        layers=layers,
        heads=heads,
        dim=int(plan_dim),
        max_len=max_len,
        sequences=seqs,
    )


def synthesize_fixture(cfg, n_sequences, profile, rng, **kwargs):
    """Sample derivations and dress them as a fixture dump."""
    derivations = [sample_derivation(cfg, rng) for _ in range(n_sequences)]
    dump = fixture_from_derivations(cfg, derivations, profile, rng, **kwargs)
    return dump, derivations
