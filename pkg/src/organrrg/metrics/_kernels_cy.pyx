# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled metric kernels. Must agree exactly with ``_kernels_py``."""

from cpython cimport array
import array

BACKEND = "compiled"

cdef array.array _LONG_TEMPLATE = array.array('l', [])


def lcs_length(a, b):
    """Length of the longest common subsequence, O(len(a)*len(b))."""
    cdef Py_ssize_t la = len(a), lb = len(b)
    if la == 0 or lb == 0:
        return 0
    cdef array.array aa = array.array('l', a)
    cdef array.array bb = array.array('l', b)
    cdef long[:] av = aa
    cdef long[:] bv = bb
    cdef array.array prev_arr = array.clone(_LONG_TEMPLATE, lb + 1, zero=True)
    cdef array.array cur_arr = array.clone(_LONG_TEMPLATE, lb + 1, zero=True)
    cdef long[:] prev = prev_arr
    cdef long[:] cur = cur_arr
    cdef long[:] tmp
    cdef Py_ssize_t i, j
    cdef long x, left, up
    for i in range(la):
        x = av[i]
        cur[0] = 0
        for j in range(1, lb + 1):
            if x == bv[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                left = cur[j - 1]
                up = prev[j]
                cur[j] = left if left >= up else up
        tmp = prev
        prev = cur
        cur = tmp
    return prev[lb]


def clipped_ngram_matches(cand, ref, n):
    """(candidate n-grams matched in ref with clipping, total candidate n-grams)."""
    cdef Py_ssize_t lc = len(cand), lr = len(ref), nn = n
    cdef Py_ssize_t total = lc - nn + 1
    if total <= 0:
        return 0, 0
    cdef dict ref_counts = {}
    cdef dict cand_counts = {}
    cdef Py_ssize_t i
    cdef tuple key
    for i in range(lr - nn + 1):
        key = tuple(ref[i : i + nn])
        ref_counts[key] = ref_counts.get(key, 0) + 1
    for i in range(total):
        key = tuple(cand[i : i + nn])
        cand_counts[key] = cand_counts.get(key, 0) + 1
    cdef long matched = 0
    cdef long c, r
    for key, cobj in cand_counts.items():
        c = cobj
        r = ref_counts.get(key, 0)
        matched += c if c < r else r
    return matched, total


def align_two_stage(cand_exact, ref_exact, cand_stem, ref_stem):
    """Greedy in-order unigram alignment: exact ids first, then stem ids over
    the still-unmatched positions. Returns (cand_idx, ref_idx) pairs sorted
    by candidate index."""
    cdef Py_ssize_t m = len(cand_exact), n = len(ref_exact)
    if m == 0 or n == 0:
        return []
    cdef array.array cf_arr = array.clone(_LONG_TEMPLATE, m, zero=True)
    cdef array.array rf_arr = array.clone(_LONG_TEMPLATE, n, zero=True)
    cdef long[:] cand_used = cf_arr
    cdef long[:] ref_used = rf_arr
    cdef list pairs = []
    cdef Py_ssize_t i, j, stage
    cdef array.array ck, rk
    cdef long[:] cv, rv
    for stage in range(2):
        if stage == 0:
            ck = array.array('l', cand_exact)
            rk = array.array('l', ref_exact)
        else:
            ck = array.array('l', cand_stem)
            rk = array.array('l', ref_stem)
        cv = ck
        rv = rk
        for i in range(m):
            if cand_used[i]:
                continue
            for j in range(n):
                if not ref_used[j] and rv[j] == cv[i]:
                    pairs.append((i, j))
                    cand_used[i] = 1
                    ref_used[j] = 1
                    break
    pairs.sort()
    return pairs
