"""Command-line entry point.

One verb per pipeline stage; every verb writes a manifest into its
output directory before any output file, takes all randomness from a
required --seed (CFGLAB_SEED serves as the default), and emits
machine-readable outputs (CSV for tables, the documented binary and
text formats elsewhere).  Exit codes: 0 success, 1 domain error,
2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, rng as rngmod
from .csvio import heatmap_svg, write_csv
from .errors import CfgLabError
from .manifest import RunManifest, file_hash


def _positive_int(text):
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _int_list(text):
    return [int(t) for t in text.replace(",", " ").split()]


def _add_out(p):
    p.add_argument("--out", required=True, type=Path, help="output directory (gets the manifest)")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=None,
                   help="random seed (falls back to $CFGLAB_SEED)")


def _resolve_seed(args, parser):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CFGLAB_SEED")
    if env is not None:
        return int(env)
    parser.error("--seed is required (or set CFGLAB_SEED)")


def _manifest(args, command, inputs, seed=None):
    flags = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in ("func", "out") and not callable(v)
    }
    m = RunManifest(
        command=command,
        flags=flags,
        seed=seed,
        input_hashes={str(p): file_hash(p) for p in inputs},
        version=__version__,
    )
    m.write(args.out)
    return m


def _load_grammar(path):
    from .grammar import grammar_hash, load_grammar

    cfg = load_grammar(path)
    return cfg, grammar_hash(cfg)


def _read_input_samples(path):
    """Annotated or plain-token file; returns (sequences, records_or_None)."""
    from .samplefile import read_annotated, read_tokens

    with open(path, "r", encoding="utf-8") as f:
        head = f.read(64)
    if head.lstrip().startswith("sample"):
        with open(path, "r", encoding="utf-8") as f:
            records = read_annotated(f)
        return [r.derivation.x for r in records], records
    with open(path, "r", encoding="utf-8") as f:
        return read_tokens(f), None


def _check_hash(records, ghash, what):
    for i, rec in enumerate(records or []):
        if rec.grammar_hash and rec.grammar_hash != ghash:
            raise CfgLabError(
                f"{what}: sample {i} was produced from grammar {rec.grammar_hash[:12]}..., "
                f"not the given grammar ({ghash[:12]}...)"
            )


# ---------------------------------------------------------------------------
# Verb implementations
# ---------------------------------------------------------------------------


def cmd_synth(args, parser):
    from .grammar import CfgSynthSpec, render_grammar_text, synthesize_cfg, validate_cfg

    seed = _resolve_seed(args, parser)
    _manifest(args, "synth", [], seed=seed)
    spec = CfgSynthSpec(
        sizes=tuple(args.sizes),
        degree_set=frozenset(args.degrees),
        distinct_consecutive=args.distinct,
        seed=seed,
        body_lengths=frozenset(args.body_lengths),
    )
    cfg = synthesize_cfg(spec, rngmod.stream(seed))
    report = validate_cfg(cfg)
    assert report.ok
    out = args.out / "grammar.cfg"
    with open(out, "w", encoding="utf-8") as f:
        f.write(render_grammar_text(cfg))
    print(f"wrote {out}")
    return 0


def cmd_validate(args, parser):
    from .grammar import load_grammar, validate_cfg

    _manifest(args, "validate", [args.grammar])
    cfg = load_grammar(args.grammar)
    report = validate_cfg(cfg)
    lines = [
        f"{v.code}\tlevel={v.level}\tsymbol={v.symbol}\trule={v.rule_index}\t{v.message}"
        for v in report.violations
    ]
    with open(args.out / "report.txt", "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))
    for line in lines:
        print(line)
    print(f"{'ok' if report.ok else f'{len(lines)} violation(s)'}")
    return 0 if report.ok else 1


def _sample_one(payload):
    from .grammar import parse_grammar_text
    from .sampler import sample_derivation

    text, seed, index = payload
    cfg = parse_grammar_text(text)
    return sample_derivation(cfg, rngmod.stream(seed, index))


def cmd_sample(args, parser):
    from .grammar import render_grammar_text
    from .samplefile import write_annotated, write_tokens
    from .sampler import sample_derivation

    seed = _resolve_seed(args, parser)
    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "sample", [args.grammar], seed=seed)
    if args.jobs > 1:
        text = render_grammar_text(cfg)
        payloads = [(text, seed, i) for i in range(args.n)]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            derivs = list(pool.map(_sample_one, payloads, chunksize=64))
    else:
        derivs = [sample_derivation(cfg, rngmod.stream(seed, i)) for i in range(args.n)]
    with open(args.out / "samples.txt", "w", encoding="utf-8") as f:
        write_annotated(f, derivs, ghash)
    if args.plain:
        with open(args.out / "samples.tok", "w", encoding="utf-8") as f:
            write_tokens(f, [d.x for d in derivs])
    lens = [len(d.x) for d in derivs]
    print(f"sampled {len(derivs)} strings, lengths {min(lens)}..{max(lens)}")
    return 0


def _check_one(payload):
    from .grammar import parse_grammar_text
    from .parser import membership

    text, x = payload
    return membership(parse_grammar_text(text), x)


def cmd_check(args, parser):
    from .grammar import render_grammar_text
    from .parser import membership

    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "check", [args.grammar, args.input])
    sequences, records = _read_input_samples(args.input)
    _check_hash(records, ghash, "check")
    if args.jobs > 1:
        text = render_grammar_text(cfg)
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            verdicts = list(pool.map(_check_one, [(text, x) for x in sequences], chunksize=64))
    else:
        verdicts = [membership(cfg, x) for x in sequences]
    with open(args.out / "verdicts.txt", "w", encoding="utf-8") as f:
        for i, ok in enumerate(verdicts):
            f.write(f"{i} {'member' if ok else 'nonmember'}\n")
    good = sum(verdicts)
    print(f"{good}/{len(verdicts)} member")
    return 0


def cmd_annotate(args, parser):
    from .parser import annotate
    from .samplefile import write_annotated

    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "annotate", [args.grammar, args.input])
    sequences, _ = _read_input_samples(args.input)
    derivs = []
    for i, x in enumerate(sequences):
        try:
            derivs.append(annotate(cfg, x))
        except CfgLabError as e:
            raise CfgLabError(f"input {i}: {e}") from None
    with open(args.out / "samples.txt", "w", encoding="utf-8") as f:
        write_annotated(f, derivs, ghash)
    print(f"annotated {len(derivs)} samples")
    return 0


def cmd_pack(args, parser):
    from .corpus import pack_corpus, write_corpus

    seed = _resolve_seed(args, parser)
    _manifest(args, "pack", [args.input], seed=seed)
    sequences, records = _read_input_samples(args.input)
    ghash = records[0].grammar_hash if records else ""
    corpus = pack_corpus(
        sequences, args.window, rngmod.stream(seed), grammar_hash=ghash, seed=seed
    )
    with open(args.out / "corpus.bin", "wb") as f:
        f.write(write_corpus(corpus))
    print(
        f"packed {len(sequences)} samples into {corpus.windows.shape[0]} windows "
        f"of {args.window} (offset {corpus.offset}, vocab {corpus.vocab_size})"
    )
    return 0


def cmd_eval_gen(args, parser):
    from .evaluation import generation_accuracy, read_completions, record_is_grammatical

    cfg, _ = _load_grammar(args.grammar)
    _manifest(args, "eval-gen", [args.grammar, args.completions])
    with open(args.completions, "r", encoding="utf-8") as f:
        records = read_completions(f, source=str(args.completions))
    verdicts = [record_is_grammatical(cfg, r) for r in records]
    accuracy = sum(verdicts) / len(records) if records else 0.0
    write_csv(
        args.out / "verdicts.csv",
        ["index", "cut", "grammatical"],
        [(i, len(r.prefix), int(v)) for i, (r, v) in enumerate(zip(records, verdicts))],
    )
    with open(args.out / "accuracy.txt", "w", encoding="utf-8") as f:
        f.write(f"{accuracy:.6f}\n")
    print(f"generation accuracy {accuracy:.4f} over {len(records)} records")
    return 0


def cmd_diversity(args, parser):
    from .evaluation import diversity_rows, diversity_table
    from .samplefile import read_annotated

    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "diversity", [args.grammar, args.samples])
    with open(args.samples, "r", encoding="utf-8") as f:
        records = read_annotated(f)
    _check_hash(records, ghash, "diversity")
    table = diversity_table(cfg, [r.derivation for r in records])
    write_csv(
        args.out / "diversity.csv",
        ["level", "symbol", "l2", "distinct", "collisions", "total"],
        diversity_rows(cfg, table),
    )
    print(f"diversity over {len(records)} samples -> {args.out / 'diversity.csv'}")
    return 0


def cmd_marginal(args, parser):
    from .evaluation import marginal_diff, marginal_rows, marginal_table
    from .samplefile import read_annotated

    inputs = [args.samples] + ([args.samples2] if args.samples2 else [])
    _manifest(args, "marginal", inputs)
    with open(args.samples, "r", encoding="utf-8") as f:
        pool_a = [r.derivation for r in read_annotated(f)]
    table_a = marginal_table(pool_a)
    write_csv(
        args.out / "marginal.csv",
        ["level", "symbol", "position", "prob", "count"],
        marginal_rows(table_a),
    )
    if args.samples2:
        with open(args.samples2, "r", encoding="utf-8") as f:
            pool_b = [r.derivation for r in read_annotated(f)]
        table_b = marginal_table(pool_b)
        write_csv(
            args.out / "marginal2.csv",
            ["level", "symbol", "position", "prob", "count"],
            marginal_rows(table_b),
        )
        rows, max_abs = marginal_diff(table_a, table_b)
        write_csv(
            args.out / "diff.csv",
            ["level", "symbol", "position", "prob_a", "prob_b", "diff"],
            rows,
        )
        with open(args.out / "maxabs.txt", "w", encoding="utf-8") as f:
            f.write(f"{max_abs:.9f}\n")
        print(f"max |diff| = {max_abs:.6f}")
    return 0


def cmd_perturb(args, parser):
    from .perturb import (
        apply_fraction,
        corrupt_prefix,
        cyclic_pi,
        perturb_nt_level_derivation,
        perturb_t_level_derivation,
    )
    from .samplefile import read_annotated, write_annotated, write_tokens

    seed = _resolve_seed(args, parser)
    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "perturb", [args.grammar, args.samples], seed=seed)
    with open(args.samples, "r", encoding="utf-8") as f:
        records = read_annotated(f)
    _check_hash(records, ghash, "perturb")
    derivs = [r.derivation for r in records]

    if args.kind == "prefix":
        rng = rngmod.stream(seed)
        prefixes = [
            corrupt_prefix(d.x, min(args.cut, len(d.x)), args.rho, rng, cfg.terminals)
            for d in derivs
        ]
        with open(args.out / "prefixes.tok", "w", encoding="utf-8") as f:
            write_tokens(f, prefixes)
        print(f"corrupted {len(prefixes)} prefixes at rho={args.rho}, cut={args.cut}")
        return 0

    pi = cyclic_pi(cfg.levels[cfg.depth - 2], rngmod.stream(seed, 1)) if args.kind == "nt_deterministic" else None
    rng = rngmod.stream(seed)

    def one(deriv):
        if args.kind == "t_random":
            return perturb_t_level_derivation(deriv, args.rate, rng, cfg.terminals)
        mode = "random" if args.kind == "nt_random" else "deterministic"
        return perturb_nt_level_derivation(deriv, args.rate, mode, rng, cfg, pi=pi)

    out, flags = apply_fraction(derivs, args.gamma, one, rngmod.stream(seed, 2))
    with open(args.out / "samples.txt", "w", encoding="utf-8") as f:
        write_annotated(f, out, ghash, perturbed=flags)
    print(f"perturbed {sum(flags)}/{len(out)} samples ({args.kind}, rate={args.rate})")
    return 0


def cmd_implicit_sample(args, parser):
    from .implicit import build_observable_vocab, sample_observable, write_vocab
    from .sampler import sample_derivation
    from .samplefile import write_tokens

    seed = _resolve_seed(args, parser)
    cfg, _ = _load_grammar(args.grammar)
    _manifest(args, "implicit-sample", [args.grammar], seed=seed)
    vocab = build_observable_vocab(
        cfg,
        args.ot_size,
        disjoint=not args.overlapping,
        uniform=not args.zipf,
        rng=rngmod.stream(seed, 0),
        overlap=args.overlap,
    )
    with open(args.out / "vocab.txt", "w", encoding="utf-8") as f:
        write_vocab(f, vocab)
    ys = []
    for i in range(args.n):
        deriv = sample_derivation(cfg, rngmod.stream(seed, 1, i))
        ys.append(sample_observable(deriv, vocab, rngmod.stream(seed, 2, i)))
    with open(args.out / "observable.tok", "w", encoding="utf-8") as f:
        write_tokens(f, ys)
    print(f"wrote vocab ({args.ot_size} tokens) and {args.n} observable strings")
    return 0


def cmd_implicit_check(args, parser):
    from .implicit import membership_observable, read_vocab
    from .samplefile import read_tokens

    cfg, _ = _load_grammar(args.grammar)
    _manifest(args, "implicit-check", [args.grammar, args.vocab, args.input])
    with open(args.vocab, "r", encoding="utf-8") as f:
        vocab = read_vocab(f, cfg.terminals)
    with open(args.input, "r", encoding="utf-8") as f:
        ys = read_tokens(f)
    with open(args.out / "verdicts.txt", "w", encoding="utf-8") as f:
        good = 0
        for i, y in enumerate(ys):
            ok = membership_observable(cfg, vocab, y)
            good += ok
            f.write(f"{i} {'member' if ok else 'nonmember'}\n")
    print(f"{good}/{len(ys)} member")
    return 0


def cmd_embed_corr(args, parser):
    from .implicit import embedding_correlation, read_vocab
    from .tensordump import load_dump

    cfg, _ = _load_grammar(args.grammar)
    _manifest(args, "embed-corr", [args.grammar, args.vocab, args.dump])
    with open(args.vocab, "r", encoding="utf-8") as f:
        vocab = read_vocab(f, cfg.terminals)
    dump = load_dump(args.dump)
    seq = dump.sequences[0]
    if seq.n != vocab.n_tokens:
        raise CfgLabError(
            f"embedding dump has {seq.n} rows but the vocabulary has {vocab.n_tokens} tokens"
        )
    emb = seq.hidden[0]
    corr, order, groups, degenerate = embedding_correlation(emb, vocab.labels())
    write_csv(
        args.out / "corr.csv",
        ["row_token", "col_token", "similarity"],
        [
            (order[i], order[j], float(corr[i, j]))
            for i in range(corr.shape[0])
            for j in range(corr.shape[1])
        ],
    )
    write_csv(
        args.out / "groups.csv",
        ["label", "start", "stop"],
        [("".join(map(str, label)), a, b) for label, a, b in groups],
    )
    if args.svg:
        labels = [str(order[i]) for i in range(corr.shape[0])]
        heatmap_svg(
            args.out / "corr.svg",
            [[float(v) for v in row] for row in corr],
            labels,
            labels,
            title="embedding correlation",
        )
    if degenerate:
        print(f"{len(degenerate)} degenerate (zero-variance) rows")
    print(f"correlation over {corr.shape[0]} tokens in {len(groups)} label groups")
    return 0


def cmd_validate_dump(args, parser):
    from .tensordump import load_dump

    _manifest(args, "validate-dump", [args.dump])
    try:
        dump = load_dump(args.dump, validate=True)
    except CfgLabError as e:
        with open(args.out / "report.txt", "w", encoding="utf-8") as f:
            f.write(f"fail {e}\n")
        print(f"fail: {e}")
        return 1
    with open(args.out / "report.txt", "w", encoding="utf-8") as f:
        f.write(
            f"pass sequences={len(dump.sequences)} layers={dump.layers} "
            f"heads={dump.heads} dim={dump.dim}\n"
        )
    print("pass")
    return 0


def cmd_fixture(args, parser):
    from .samplefile import write_annotated
    from .tensordump import fixture_from_derivations, save_dump
    from .sampler import sample_derivation

    seed = _resolve_seed(args, parser)
    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "fixture", [args.grammar], seed=seed)
    derivs = [sample_derivation(cfg, rngmod.stream(seed, i)) for i in range(args.n)]
    dump = fixture_from_derivations(
        cfg,
        derivs,
        args.profile,
        rngmod.stream(seed, args.n),
        layers=args.layers,
        heads=args.heads,
        noise=args.noise,
        shift=args.shift,
        grammar_hash=ghash,
    )
    save_dump(dump, args.out / "fixture.dump")
    with open(args.out / "samples.txt", "w", encoding="utf-8") as f:
        write_annotated(f, derivs, ghash)
    print(f"fixture: {args.n} sequences, profile {args.profile}")
    return 0


def _probe_dataset(args, cfg, ghash):
    from .samplefile import read_annotated
    from .probe import probe_targets
    from .tensordump import load_dump

    dump = load_dump(args.dump)
    if dump.grammar_hash.strip("0") and dump.grammar_hash != ghash:
        raise CfgLabError(
            f"dump was produced from grammar {dump.grammar_hash[:12]}..., not this one"
        )
    with open(args.samples, "r", encoding="utf-8") as f:
        records = read_annotated(f)
    _check_hash(records, ghash, "probe")
    if len(records) != len(dump.sequences):
        raise CfgLabError(
            f"{len(dump.sequences)} dump sequences vs {len(records)} annotated samples"
        )
    layer = args.layer
    dataset = []
    for rec, seq in zip(records, dump.sequences):
        if len(rec.derivation.x) != seq.n:
            raise CfgLabError("annotated sample length disagrees with dump sequence")
        dataset.append(
            (seq.hidden[layer].astype(np.float64), probe_targets(cfg, rec.derivation, args.target))
        )
    return dump, dataset


def cmd_probe_train(args, parser):
    from .probe import ProbeConfig, probe_train, write_probe

    seed = _resolve_seed(args, parser)
    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "probe-train", [args.grammar, args.dump, args.samples], seed=seed)
    dump, dataset = _probe_dataset(args, cfg, ghash)
    config = ProbeConfig(
        target=args.target,
        heads=args.heads,
        pos_dim=args.pos_dim,
        delta=None if args.delta == "none" else int(args.delta),
        layer=args.layer,
        learning_rate=args.lr,
        weight_decay=args.wd,
        batch_size=None if args.batch == 0 else args.batch,
        iterations=args.iters,
        max_len=max(seq.n for seq in dump.sequences),
    )
    level_sizes = (
        [len(lv) for lv in cfg.levels[:-1]] if args.target == "ancestors" else None
    )
    model, trace = probe_train(config, dataset, rngmod.stream(seed), level_sizes=level_sizes)
    with open(args.out / "probe.bin", "wb") as f:
        f.write(write_probe(model))
    write_csv(args.out / "trace.csv", ["iteration", "loss"], trace)
    print(f"trained {args.target} probe: final loss {trace[-1][1]:.4f}")
    return 0


def cmd_probe_eval(args, parser):
    from .probe import probe_eval, read_probe

    cfg, ghash = _load_grammar(args.grammar)
    _manifest(args, "probe-eval", [args.grammar, args.model, args.dump, args.samples])
    with open(args.model, "rb") as f:
        model = read_probe(f.read())
    args.target = model.config.target
    args.layer = model.config.layer
    _, dataset = _probe_dataset(args, cfg, ghash)
    table = probe_eval(model, dataset)
    rows = []
    for level, entry in sorted(table.items()):
        rows.append(
            (level, entry["accuracy"], entry.get("base_rate", ""))
        )
    write_csv(args.out / "accuracy.csv", ["level", "accuracy", "base_rate"], rows)
    for level, acc, base in rows:
        print(f"level {level}: accuracy {acc:.4f}" + (f" (base {base:.4f})" if base != "" else ""))
    return 0


def cmd_attn_stats(args, parser):
    from .attnstats import (
        annotation_for,
        end_targeting_grid,
        end_to_end_by_distance,
        end_to_end_grid,
        position_profile,
    )
    from .samplefile import read_annotated
    from .tensordump import load_dump

    inputs = [args.dump] + ([args.samples] if args.samples else [])
    _manifest(args, "attn-stats", inputs)
    dump = load_dump(args.dump)
    profile = position_profile([dump])
    rows = []
    for l in range(dump.layers):
        for h in range(dump.heads):
            for p in range(profile.mean.shape[2]):
                if profile.pair_count[p]:
                    rows.append(
                        (l, h, p, float(profile.mean[l, h, p]), float(profile.cumulative[l, h, p]),
                         int(profile.pair_count[p]))
                    )
    write_csv(
        args.out / "profile.csv",
        ["layer", "head", "distance", "mean", "cumulative", "pairs"],
        rows,
    )
    if not args.samples:
        print("profile written (no annotations given, boundary grids skipped)")
        return 0

    with open(args.samples, "r", encoding="utf-8") as f:
        records = read_annotated(f)
    annots = [annotation_for(r.derivation) for r in records]

    grid = end_targeting_grid(dump, annots, profile)
    write_csv(
        args.out / "end_targeting.csv",
        ["layer", "head", "level", "delta", "mean", "count", "low_support"],
        [
            (l, h, lvl, d, cell.mean, cell.count, int(cell.low_support))
            for (l, h, lvl, d), cell in sorted(grid.cells.items())
        ],
    )

    grid2 = end_to_end_grid(dump, annots, profile, args.level)
    write_csv(
        args.out / "end_to_end_grid.csv",
        ["layer", "head", "delta1", "delta2", "mean", "count", "low_support"],
        [
            (l, h, d1, d2, cell.mean, cell.count, int(cell.low_support))
            for (l, h, d1, d2), cell in sorted(grid2.cells.items())
        ],
    )

    per, agg = end_to_end_by_distance(dump, annots, profile)
    write_csv(
        args.out / "end_to_end_distance.csv",
        ["layer", "head", "query_level", "key_level", "r", "mean", "count", "low_support"],
        [
            (l, h, lq, lk, r, cell.mean, cell.count, int(cell.low_support))
            for (l, h, lq, lk, r), cell in sorted(per.cells.items())
        ],
    )
    write_csv(
        args.out / "end_to_end_distance_all_layers.csv",
        ["query_level", "key_level", "r", "mean", "count", "low_support"],
        [
            (lq, lk, r, cell.mean, cell.count, int(cell.low_support))
            for (lq, lk, r), cell in sorted(agg.cells.items())
        ],
    )
    if args.svg:
        keys = sorted({(lq, lk) for (lq, lk, r) in agg.cells})
        rs = sorted({r for (_, _, r) in agg.cells})
        matrix = [[agg.mean((lq, lk, r)) for (lq, lk) in keys] for r in rs]
        heatmap_svg(
            args.out / "end_to_end_distance.svg",
            matrix,
            [str(r) for r in rs],
            [f"{lq}->{lk}" for lq, lk in keys],
            title="residual attention by ancestor distance",
        )
    print("attention statistics written")
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="cfglab", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="verb", required=True)

    sp = sub.add_parser("synth", help="synthesize a grammar")
    sp.add_argument("--sizes", required=True, type=_int_list)
    sp.add_argument("--degrees", required=True, type=_int_list)
    sp.add_argument("--distinct", action="store_true",
                    help="forbid equal adjacent body symbols and duplicate bodies")
    sp.add_argument("--body-lengths", type=_int_list, default=[2, 3])
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("validate", help="check grammar invariants")
    sp.add_argument("--grammar", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("sample", help="sample annotated strings")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--n", required=True, type=_positive_int)
    sp.add_argument("--plain", action="store_true", help="also write a plain-token file")
    sp.add_argument("--jobs", type=_positive_int, default=1)
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("check", help="membership verdict per sample")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--input", required=True, type=Path)
    sp.add_argument("--jobs", type=_positive_int, default=1)
    _add_out(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("annotate", help="canonical annotations for member strings")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--input", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_annotate)

    sp = sub.add_parser("pack", help="pack samples into training windows")
    sp.add_argument("--input", required=True, type=Path)
    sp.add_argument("--window", required=True, type=_positive_int)
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_pack)

    sp = sub.add_parser("eval-gen", help="generation accuracy of completions")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--completions", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_eval_gen)

    sp = sub.add_parser("diversity", help="generation diversity multisets")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--samples", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_diversity)

    sp = sub.add_parser("marginal", help="per-position symbol marginals")
    sp.add_argument("--samples", required=True, type=Path)
    sp.add_argument("--samples2", type=Path, default=None,
                    help="second pool; also emit the aligned difference")
    _add_out(sp)
    sp.set_defaults(func=cmd_marginal)

    sp = sub.add_parser("perturb", help="corrupt prefixes or perturb training data")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--samples", required=True, type=Path)
    sp.add_argument("--kind", required=True,
                    choices=["prefix", "t_random", "nt_random", "nt_deterministic"])
    sp.add_argument("--rate", type=float, default=0.15)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--rho", type=float, default=0.15, help="prefix corruption probability")
    sp.add_argument("--cut", type=_positive_int, default=50, help="prefix length")
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_perturb)

    sp = sub.add_parser("implicit-sample", help="observable-token vocabulary and samples")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--n", required=True, type=_positive_int)
    sp.add_argument("--ot-size", required=True, type=_positive_int)
    sp.add_argument("--overlapping", action="store_true")
    sp.add_argument("--zipf", action="store_true", help="non-uniform bag distributions")
    sp.add_argument("--overlap", type=float, default=0.5)
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_implicit_sample)

    sp = sub.add_parser("implicit-check", help="membership in the observable language")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--vocab", required=True, type=Path)
    sp.add_argument("--input", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_implicit_check)

    sp = sub.add_parser("embed-corr", help="embedding correlation grouped by bag labels")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--vocab", required=True, type=Path)
    sp.add_argument("--dump", required=True, type=Path, help="embedding rows as a tensor dump")
    sp.add_argument("--svg", action="store_true")
    _add_out(sp)
    sp.set_defaults(func=cmd_embed_corr)

    sp = sub.add_parser("validate-dump", help="validate a tensor dump")
    sp.add_argument("--dump", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_validate_dump)

    sp = sub.add_parser("fixture", help="model-free dumps for pipeline tests")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--profile", required=True, choices=["uniform_window", "planted"])
    sp.add_argument("--n", required=True, type=_positive_int)
    sp.add_argument("--layers", type=_positive_int, default=2)
    sp.add_argument("--heads", type=_positive_int, default=2)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--shift", type=int, default=0)
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_fixture)

    sp = sub.add_parser("probe-train", help="train a position-attention probe")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--dump", required=True, type=Path)
    sp.add_argument("--samples", required=True, type=Path)
    sp.add_argument("--target", choices=["ancestors", "boundaries"], default="ancestors")
    sp.add_argument("--delta", choices=["none", "0", "1"], default="none")
    sp.add_argument("--heads", type=_positive_int, default=16)
    sp.add_argument("--pos-dim", type=_positive_int, default=1024)
    sp.add_argument("--layer", type=int, default=-1)
    sp.add_argument("--lr", type=float, default=0.003)
    sp.add_argument("--wd", type=float, default=0.001)
    sp.add_argument("--batch", type=int, default=60, help="0 = full batch")
    sp.add_argument("--iters", type=_positive_int, default=30000)
    _add_seed(sp)
    _add_out(sp)
    sp.set_defaults(func=cmd_probe_train)

    sp = sub.add_parser("probe-eval", help="evaluate a trained probe")
    sp.add_argument("--grammar", required=True, type=Path)
    sp.add_argument("--model", required=True, type=Path)
    sp.add_argument("--dump", required=True, type=Path)
    sp.add_argument("--samples", required=True, type=Path)
    _add_out(sp)
    sp.set_defaults(func=cmd_probe_eval)

    sp = sub.add_parser("attn-stats", help="position profile and boundary grids")
    sp.add_argument("--dump", required=True, type=Path)
    sp.add_argument("--samples", type=Path, default=None)
    sp.add_argument("--level", type=_positive_int, default=4,
                    help="level for the end-to-end offset grid")
    sp.add_argument("--svg", action="store_true")
    _add_out(sp)
    sp.set_defaults(func=cmd_attn_stats)

    return p


def dispatch(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except CfgLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
