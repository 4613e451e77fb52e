# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled chart fill: the hot kernel behind membership and annotation.

Identical contract to the pure-Python `_chart_py.fill`; span sets are
uint64 bitmask rows over end positions, filled level by level from the
terminals up to the root.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

COMPILED = True

ctypedef unsigned long long u64

cdef extern from *:
    """
    static inline int cfglab_ctz64(unsigned long long x) {
    #if defined(_MSC_VER)
        unsigned long i;
        _BitScanForward64(&i, x);
        return (int)i;
    #else
        return __builtin_ctzll(x);
    #endif
    }
    """
    int cfglab_ctz64(u64 x) nogil


cdef inline void _join(u64* dst, const u64* src, const u64* child, int n, int words) nogil:
    # dst |= union over set bits (end positions) k of src of child row k+1
    cdef int w, ww, k
    cdef u64 v
    cdef const u64* crow
    for w in range(words):
        v = src[w]
        while v != 0:
            k = (w << 6) + cfglab_ctz64(v)
            v &= v - 1
            if k + 1 < n:
                crow = child + (<long long> (k + 1)) * words
                for ww in range(words):
                    dst[ww] |= crow[ww]


def fill(int n, const unsigned char[:, ::1] cand, nsyms, rules_per_level):
    cdef int num_levels = len(nsyms)
    cdef int words = (n + 63) >> 6
    cdef list out = []
    cdef int k, r, i, h, ln, t0, t1, t2, nrules
    cdef u64[:, :, ::1] cur
    cdef u64[:, :, ::1] child
    cdef const int[::1] heads, blens, b0, b1, b2
    cdef u64* row
    cdef u64* tmp
    cdef cnp.ndarray tmp_arr

    for k in range(num_levels):
        out.append(np.zeros((nsyms[k], n, words), dtype=np.uint64))
    if n == 0:
        return out

    tmp_arr = np.zeros(words, dtype=np.uint64)
    cdef u64[::1] tmp_view = tmp_arr
    tmp = &tmp_view[0]

    for k in range(num_levels - 1, -1, -1):
        heads, blens, b0, b1, b2 = rules_per_level[k]
        nrules = heads.shape[0]
        cur = out[k]
        if k == num_levels - 1:
            # deepest chart level: bodies are terminal symbols
            for r in range(nrules):
                h = heads[r]
                ln = blens[r]
                t0 = b0[r]
                t1 = b1[r]
                if ln == 2:
                    for i in range(n - 1):
                        if cand[i, t0] and cand[i + 1, t1]:
                            cur[h, i, (i + 1) >> 6] |= (<u64> 1) << ((i + 1) & 63)
                else:
                    t2 = b2[r]
                    for i in range(n - 2):
                        if cand[i, t0] and cand[i + 1, t1] and cand[i + 2, t2]:
                            cur[h, i, (i + 2) >> 6] |= (<u64> 1) << ((i + 2) & 63)
        else:
            child = out[k + 1]
            for r in range(nrules):
                h = heads[r]
                ln = blens[r]
                t0 = b0[r]
                t1 = b1[r]
                if ln == 2:
                    for i in range(n):
                        _join(&cur[h, i, 0], &child[t0, i, 0], &child[t1, 0, 0], n, words)
                else:
                    t2 = b2[r]
                    for i in range(n):
                        memset_zero(tmp, words)
                        _join(tmp, &child[t0, i, 0], &child[t1, 0, 0], n, words)
                        _join(&cur[h, i, 0], tmp, &child[t2, 0, 0], n, words)
    return out


cdef inline void memset_zero(u64* p, int words) nogil:
    cdef int w
    for w in range(words):
        p[w] = 0
