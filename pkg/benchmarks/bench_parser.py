"""Chart-fill benchmark: compiled extension vs pure-Python fallback.

Usage:
    python benchmarks/bench_parser.py [--n 200] [--sizes 1,3,3,3,3,3,3]
"""

import argparse
import statistics
import sys
import time

from cfglab import rng as rngmod
from cfglab.grammar import CfgSynthSpec, synthesize_cfg
from cfglab.parser import _candidates_for, plan_for
from cfglab.sampler import sample_derivation


def load_backends():
    from cfglab import _chart_py

    backends = [("pure-python", _chart_py)]
    try:
        from cfglab import _chart

        backends.insert(0, ("compiled", _chart))
    except ImportError:
        print("compiled backend unavailable; benchmarking the fallback only")
    return backends


def bench(kernel, plan, cands, nsyms, rules):
    times = []
    for cand in cands:
        t0 = time.perf_counter()
        kernel.fill(cand.shape[0], cand, nsyms, rules)
        times.append(time.perf_counter() - t0)
    return times


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200, help="strings per backend")
    ap.add_argument("--sizes", default="1,3,3,3,3,3,3")
    ap.add_argument("--degrees", default="3,4")
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args(argv)

    spec = CfgSynthSpec(
        sizes=tuple(int(v) for v in args.sizes.split(",")),
        degree_set=frozenset(int(v) for v in args.degrees.split(",")),
        seed=args.seed,
    )
    cfg = synthesize_cfg(spec)
    plan = plan_for(cfg)
    nsyms = [len(lv) for lv in plan.nt_syms]
    rules = list(plan.rules_arrays)
    samples = [sample_derivation(cfg, rngmod.stream(args.seed, i)) for i in range(args.n)]
    cands = [_candidates_for(plan, d.x) for d in samples]
    mean_len = statistics.mean(len(d.x) for d in samples)
    print(f"grammar sizes {cfg.sizes}, {args.n} strings, mean length {mean_len:.0f}")

    results = {}
    for name, kernel in load_backends():
        times = bench(kernel, plan, cands, nsyms, rules)
        results[name] = times
        print(
            f"{name:>12}: total {sum(times):8.3f}s   "
            f"mean {statistics.mean(times) * 1e3:8.3f} ms/string   "
            f"median {statistics.median(times) * 1e3:8.3f} ms"
        )
    if len(results) == 2:
        speedup = sum(results["pure-python"]) / sum(results["compiled"])
        print(f"{'speedup':>12}: {speedup:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
