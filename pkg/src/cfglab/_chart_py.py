"""Pure-Python chart fill.

Same contract as the compiled extension in `_chart.pyx`: span sets are
bitmasks over end positions, one mask per (symbol, start).  Python's
big integers stand in for the word arrays; the result is converted to
the shared numpy layout at the end.

Kept for portability and as a cross-check oracle; the compiled kernel
is typically one to two orders of magnitude faster on long strings.
"""

import numpy as np

COMPILED = False


def fill(n, cand, nsyms, rules_per_level):
    """Fill the level-stratified chart for a length-n input.

    cand: uint8 (n, num_terminals); cand[i, t] says position i may read
    terminal t (singleton rows for plain parsing, bag rows for the
    observable-token extension).

    rules_per_level[k] = (heads, blens, b0, b1, b2) int32 arrays for the
    rules whose heads live at chart level k (0-based from the root);
    bodies reference level k+1, except the deepest chart level whose
    bodies index terminals.

    Returns one uint64 array of shape (nsyms[k], n, ceil(n/64)) per
    chart level; bit j of row (s, i) marks a derivation of x[i..j].
    """
    num_levels = len(nsyms)
    words = (n + 63) >> 6
    masks = [[[0] * n for _ in range(nsyms[k])] for k in range(num_levels)]

    for k in range(num_levels - 1, -1, -1):
        heads, blens, b0, b1, b2 = rules_per_level[k]
        leaf = k == num_levels - 1
        for r in range(len(heads)):
            h, ln = int(heads[r]), int(blens[r])
            t0, t1, t2 = int(b0[r]), int(b1[r]), int(b2[r])
            row = masks[k][h]
            if leaf:
                if ln == 2:
                    for i in range(n - 1):
                        if cand[i, t0] and cand[i + 1, t1]:
                            row[i] |= 1 << (i + 1)
                else:
                    for i in range(n - 2):
                        if cand[i, t0] and cand[i + 1, t1] and cand[i + 2, t2]:
                            row[i] |= 1 << (i + 2)
            else:
                child = masks[k + 1]
                first, second = child[t0], child[t1]
                if ln == 2:
                    for i in range(n):
                        m = first[i]
                        acc = 0
                        while m:
                            low = m & -m
                            m ^= low
                            kk = low.bit_length()  # == end position + 1
                            if kk < n:
                                acc |= second[kk]
                        row[i] |= acc
                else:
                    third = child[t2]
                    for i in range(n):
                        m = first[i]
                        mid = 0
                        while m:
                            low = m & -m
                            m ^= low
                            kk = low.bit_length()
                            if kk < n:
                                mid |= second[kk]
                        acc = 0
                        while mid:
                            low = mid & -mid
                            mid ^= low
                            kk = low.bit_length()
                            if kk < n:
                                acc |= third[kk]
                        row[i] |= acc

    out = []
    for k in range(num_levels):
        arr = np.zeros((nsyms[k], n, words), dtype=np.uint64)
        for s in range(nsyms[k]):
            for i in range(n):
                m = masks[k][s][i]
                if m:
                    arr[s, i] = np.frombuffer(
                        m.to_bytes(words * 8, "little"), dtype=np.uint64
                    )
        out.append(arr)
    return out
