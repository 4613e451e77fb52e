"""Position-attention linear probe over exported hidden states.

The probe mixes hidden states with attention weights that depend only on
token positions: head r carries trainable position embeddings P[i, r],
attention is a softmax over inner products of those embeddings, and the
per-position output averages the heads' linear readouts under that
mixing.  The result stays linear in the hidden states for a fixed
model, so high probe accuracy certifies linearly-decodable structure.

Targets are either the per-level ancestor symbols (one softmax group
per nonterminal level, cross-entropy summed over levels) or the
per-level subtree-end indicators (independent binary logits).  A
locality mask restricts the attention support to |i-k| <= delta and
renormalizes; delta=0 reduces the probe to per-position multinomial
logistic regression on the hidden state.

Training uses decoupled-weight-decay adaptive moments implemented from
the published update equations; losses and gradients accumulate in
float64 regardless of the 32-bit inputs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import Divergence, FormatError, LengthExceeded
from .sampler import boundaries

ADAM_EPS = 1e-8


@dataclass(frozen=True)
class ProbeConfig:
    target: str = "ancestors"  # ancestors | boundaries
    heads: int = 16
    pos_dim: int = 1024
    delta: int | None = None  # None = full span, else |i-k| <= delta
    layer: int = -1  # hidden-state layer consumed from dumps
    learning_rate: float = 0.003
    weight_decay: float = 0.001
    batch_size: int | None = 60  # None = full batch
    iterations: int = 30000
    betas: tuple[float, float] = (0.9, 0.98)
    max_len: int = 512

    def __post_init__(self):
        if self.target not in ("ancestors", "boundaries"):
            raise ValueError(f"unknown probe target {self.target!r}")
        if self.heads < 1 or self.pos_dim < 1:
            raise ValueError("heads and pos_dim must be positive")
        if self.delta is not None and self.delta < 0:
            raise ValueError("delta mask must be nonnegative")


@dataclass
class ProbeModel:
    config: ProbeConfig
    level_sizes: tuple[int, ...]  # classes per level (1s for boundary logits)
    weight: np.ndarray  # (H, out, d) float64; the readout is linear, no bias
    pos: np.ndarray  # (max_len, H, pos_dim) float64

    @property
    def out_dim(self):
        return int(self.weight.shape[1])

    @property
    def hidden_dim(self):
        return int(self.weight.shape[2])

    def level_slices(self):
        offs = np.cumsum([0] + list(self.level_sizes))
        return [slice(int(a), int(b)) for a, b in zip(offs[:-1], offs[1:])]


def init_model(config, hidden_dim, level_sizes, rng):
    out = int(sum(level_sizes))
    return ProbeModel(
        config=config,
        level_sizes=tuple(int(v) for v in level_sizes),
        weight=np.zeros((config.heads, out, hidden_dim)),
        pos=rng.standard_normal((config.max_len, config.heads, config.pos_dim))
        / np.sqrt(config.pos_dim),
    )


def attention_weights(model, n, delta):
    """Row-stochastic (H, n, n) mixing weights from position embeddings."""
    if n > model.pos.shape[0]:
        raise LengthExceeded(f"sequence length {n} exceeds capacity {model.pos.shape[0]}")
    P = model.pos[:n]  # (n, H, d')
    scores = np.einsum("ihd,khd->hik", P, P)
    if delta is not None:
        idx = np.arange(n)
        allowed = np.abs(idx[:, None] - idx[None, :]) <= delta
        scores = np.where(allowed[None, :, :], scores, -np.inf)
    scores = scores - scores.max(axis=2, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=2, keepdims=True)
    return w


def probe_forward(model, hidden, delta="config"):
    """Per-position logits G for one sequence of hidden states."""
    if delta == "config":
        delta = model.config.delta
    E = np.asarray(hidden, dtype=np.float64)
    w = attention_weights(model, E.shape[0], delta)
    per_head = np.einsum("hod,nd->hno", model.weight, E)
    return np.einsum("hik,hko->io", w, per_head) / model.config.heads


def _loss_grad_G(model, G, targets):
    """(loss contribution, dL/dG) for one sequence; sums over positions."""
    slices = model.level_slices()
    dG = np.zeros_like(G)
    loss = 0.0
    if model.config.target == "ancestors":
        for lvl, sl in enumerate(slices):
            logits = G[:, sl]
            logits = logits - logits.max(axis=1, keepdims=True)
            expl = np.exp(logits)
            probs = expl / expl.sum(axis=1, keepdims=True)
            t = targets[lvl]
            n = G.shape[0]
            loss -= np.log(probs[np.arange(n), t] + 1e-300).sum()
            grad = probs.copy()
            grad[np.arange(n), t] -= 1.0
            dG[:, sl] = grad
    else:
        for lvl in range(len(slices)):
            z = G[:, lvl]
            y = targets[lvl].astype(np.float64)
            # stable log(1 + exp(-|z|)) form of the logistic loss
            loss += (np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))).sum()
            dG[:, lvl] = 1.0 / (1.0 + np.exp(-z)) - y
    return loss, dG


def _sequence_grads(model, E, targets, delta):
    """Loss and parameter gradients for one sequence (unnormalized sums)."""
    H = model.config.heads
    n = E.shape[0]
    w = attention_weights(model, n, delta)  # (H, n, n)
    per_head = np.einsum("hod,nd->hno", model.weight, E)
    G = np.einsum("hik,hko->io", w, per_head) / H
    loss, dG = _loss_grad_G(model, G, targets)

    dper_head = np.einsum("hik,io->hko", w, dG) / H  # (H, n, out)
    dW = np.einsum("hno,nd->hod", dper_head, E)

    dw = np.einsum("io,hko->hik", dG, per_head) / H  # (H, n, n)
    inner = (dw * w).sum(axis=2, keepdims=True)
    dS = w * (dw - inner)  # masked entries carry w == 0
    P = model.pos[:n]  # (n, H, d')
    dP = np.einsum("hik,khd->ihd", dS + dS.transpose(0, 2, 1), P)
    return loss, dW, dP, n


class _AdamW:
    """Decoupled-weight-decay adaptive moments (float64 state)."""

    def __init__(self, params, lr, betas, weight_decay):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.wd = weight_decay
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1**self.t)
            vhat = v / (1 - self.b2**self.t)
            p -= self.lr * (mhat / (np.sqrt(vhat) + ADAM_EPS) + self.wd * p)


def probe_train(config, dataset, rng, trace_every=50, level_sizes=None):
    """Fit a probe on (hidden states, targets) pairs.

    dataset: list of (E, targets) with E of shape (n, d) and targets an
    integer array of shape (levels, n).  level_sizes overrides the
    per-level class counts (pass the grammar's level sizes when the pool
    may not exercise every class).  Returns (model, trace) where trace
    rows are (iteration, mean loss per token).
    """
    if not dataset:
        raise ValueError("empty dataset")
    hidden_dim = dataset[0][0].shape[1]
    if level_sizes is not None:
        level_sizes = list(level_sizes)
    elif config.target == "ancestors":
        level_sizes = [int(t.max()) + 1 for t in dataset[0][1]]
        for _, targets in dataset:
            level_sizes = [
                max(a, int(t.max()) + 1) for a, t in zip(level_sizes, targets)
            ]
    else:
        level_sizes = [1] * len(dataset[0][1])
    needed = max(E.shape[0] for E, _ in dataset)
    if needed > config.max_len:
        raise LengthExceeded(f"dataset has length {needed} > capacity {config.max_len}")

    model = init_model(config, hidden_dim, level_sizes, rng)
    data = [(np.asarray(E, dtype=np.float64), np.asarray(t)) for E, t in dataset]
    opt = _AdamW(
        [model.weight, model.pos],
        config.learning_rate,
        config.betas,
        config.weight_decay,
    )
    trace = []
    for it in range(config.iterations):
        if config.batch_size is None or config.batch_size >= len(data):
            batch = data
        else:
            picks = rng.choice(len(data), size=config.batch_size, replace=False)
            batch = [data[int(i)] for i in picks]
        gW = np.zeros_like(model.weight)
        gP = np.zeros_like(model.pos)
        loss_sum = 0.0
        tokens = 0
        for E, targets in batch:
            loss, dW, dP, n = _sequence_grads(model, E, targets, config.delta)
            loss_sum += loss
            gW += dW
            gP[: dP.shape[0]] += dP
            tokens += n
        mean_loss = loss_sum / tokens
        if not np.isfinite(mean_loss):
            raise Divergence(f"loss became non-finite at iteration {it}")
        opt.step([gW / tokens, gP / tokens])
        if it % trace_every == 0 or it == config.iterations - 1:
            trace.append((it, float(mean_loss)))
    return model, trace


def probe_eval(model, dataset):
    """Per-level accuracy; boundary reports include the positive base rate."""
    slices = model.level_slices()
    hits = np.zeros(len(slices))
    pos = np.zeros(len(slices))
    total = 0
    for E, targets in dataset:
        G = probe_forward(model, E)
        total += E.shape[0]
        for lvl, sl in enumerate(slices):
            if model.config.target == "ancestors":
                pred = G[:, sl].argmax(axis=1)
                hits[lvl] += (pred == targets[lvl]).sum()
            else:
                pred = (G[:, lvl] > 0).astype(int)
                hits[lvl] += (pred == targets[lvl]).sum()
                pos[lvl] += targets[lvl].sum()
    out = {}
    for lvl in range(len(slices)):
        entry = {"accuracy": float(hits[lvl]) / total}
        if model.config.target == "boundaries":
            entry["base_rate"] = float(pos[lvl]) / total
        out[lvl + 1] = entry
    return out


# ---------------------------------------------------------------------------
# Targets from annotations
# ---------------------------------------------------------------------------


def probe_targets(cfg, deriv, target):
    """Integer target matrix (levels 1..L-1 by position) for one derivation."""
    depth = cfg.depth
    n = len(deriv.x)
    out = np.zeros((depth - 1, n), dtype=np.int64)
    if target == "ancestors":
        for k in range(depth - 1):
            index = {s: i for i, s in enumerate(cfg.levels[k])}
            out[k] = [index[s] for s in deriv.anc_sym[k]]
    else:
        prof = boundaries(deriv)
        for k in range(depth - 1):
            out[k] = prof.ends[k]
    return out


# ---------------------------------------------------------------------------
# Model file: 'CFGP', float32 parameter payload
# ---------------------------------------------------------------------------

MAGIC = b"CFGP"
VERSION = 1
_TARGET_CODE = {"ancestors": 0, "boundaries": 1}
_TARGET_NAME = {v: k for k, v in _TARGET_CODE.items()}


def write_probe(model):
    cfg = model.config
    head = struct.pack(
        "<4sIIIIIIIii",
        MAGIC,
        VERSION,
        _TARGET_CODE[cfg.target],
        cfg.heads,
        model.hidden_dim,
        cfg.pos_dim,
        model.pos.shape[0],
        len(model.level_sizes),
        -1 if cfg.delta is None else cfg.delta,
        cfg.layer,
    )
    sizes = struct.pack(f"<{len(model.level_sizes)}I", *model.level_sizes)
    payload = b"".join(
        arr.astype("<f4").tobytes() for arr in (model.weight, model.pos)
    )
    return head + sizes + payload


def read_probe(data):
    head_size = struct.calcsize("<4sIIIIIIIii")
    if len(data) < head_size or data[:4] != MAGIC:
        raise FormatError("not a probe model file")
    (_, version, tcode, heads, dim, pos_dim, max_len, n_levels, delta, layer) = struct.unpack(
        "<4sIIIIIIIii", data[:head_size]
    )
    if version != VERSION:
        raise FormatError(f"unsupported probe version {version}")
    at = head_size
    level_sizes = struct.unpack(f"<{n_levels}I", data[at : at + 4 * n_levels])
    at += 4 * n_levels
    out = int(sum(level_sizes))
    config = ProbeConfig(
        target=_TARGET_NAME[tcode],
        heads=heads,
        pos_dim=pos_dim,
        delta=None if delta < 0 else delta,
        layer=layer,
        max_len=max_len,
    )

    def take(shape):
        nonlocal at
        count = int(np.prod(shape))
        arr = np.frombuffer(data[at : at + 4 * count], dtype="<f4")
        if arr.size != count:
            raise FormatError("probe file truncated")
        at += 4 * count
        return arr.reshape(shape).astype(np.float64)

    weight = take((heads, out, dim))
    pos = take((max_len, heads, pos_dim))
    return ProbeModel(
        config=config, level_sizes=tuple(level_sizes), weight=weight, pos=pos
    )
