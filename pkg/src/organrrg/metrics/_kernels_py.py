"""Pure-Python metric kernels.

Semantics here are the reference; the compiled twin in ``_kernels_cy.pyx``
must agree exactly. All sequences are lists of ints (callers intern tokens).
"""

BACKEND = "pure"


def lcs_length(a: list[int], b: list[int]) -> int:
    """Length of the longest common subsequence, O(len(a)*len(b))."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            if x == y:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = cur[j - 1] if cur[j - 1] >= prev[j] else prev[j]
        prev = cur
    return prev[-1]


def clipped_ngram_matches(cand: list[int], ref: list[int], n: int) -> tuple[int, int]:
    """(candidate n-grams matched in ref with clipping, total candidate n-grams)."""
    total = len(cand) - n + 1
    if total <= 0:
        return 0, 0
    ref_counts: dict[tuple, int] = {}
    for i in range(len(ref) - n + 1):
        key = tuple(ref[i : i + n])
        ref_counts[key] = ref_counts.get(key, 0) + 1
    cand_counts: dict[tuple, int] = {}
    for i in range(total):
        key = tuple(cand[i : i + n])
        cand_counts[key] = cand_counts.get(key, 0) + 1
    matched = 0
    for key, c in cand_counts.items():
        r = ref_counts.get(key, 0)
        matched += c if c < r else r
    return matched, total


def align_two_stage(
    cand_exact: list[int],
    ref_exact: list[int],
    cand_stem: list[int],
    ref_stem: list[int],
) -> list[tuple[int, int]]:
    """Greedy in-order unigram alignment: exact ids first, then stem ids over
    the still-unmatched positions. Returns (cand_idx, ref_idx) pairs sorted
    by candidate index."""
    m, n = len(cand_exact), len(ref_exact)
    cand_free = [True] * m
    ref_free = [True] * n
    pairs: list[tuple[int, int]] = []
    for ckeys, rkeys in ((cand_exact, ref_exact), (cand_stem, ref_stem)):
        for i in range(m):
            if not cand_free[i]:
                continue
            for j in range(n):
                if ref_free[j] and rkeys[j] == ckeys[i]:
                    pairs.append((i, j))
                    cand_free[i] = False
                    ref_free[j] = False
                    break
    pairs.sort()
    return pairs
