#!/usr/bin/env python3
"""Benchmark the compiled metric kernels against the pure-Python twins.

The kernels are the only pure-Python hot loops in the package (the neural
side runs on torch's compiled ops), so this is where the extension pays off:
LCS tables are O(n*m) per report pair and the full metric table touches every
pair in a corpus.

Usage: python benchmarks/bench_kernels.py [--reports N] [--tokens T]
"""

import argparse
import random
import time

from organrrg.metrics import _kernels_py

try:
    from organrrg.metrics import _kernels_cy
except ImportError:
    _kernels_cy = None

WORDS = ("the lungs are clear no acute disease is seen stable appearance of "
         "the chest pleural effusion cardiomegaly pneumonia edema fracture").split()


def make_corpus(n_reports: int, n_tokens: int, seed: int = 0):
    rng = random.Random(seed)
    table = {w: i for i, w in enumerate(WORDS)}
    corpus = []
    for _ in range(n_reports):
        cand = [table[rng.choice(WORDS)] for _ in range(n_tokens)]
        ref = [table[rng.choice(WORDS)] for _ in range(n_tokens)]
        corpus.append((cand, ref))
    return corpus


def run_backend(impl, corpus):
    start = time.perf_counter()
    sink = 0
    for cand, ref in corpus:
        sink += impl.lcs_length(cand, ref)
        for n in range(1, 5):
            m, t = impl.clipped_ngram_matches(cand, ref, n)
            sink += m + t
        sink += len(impl.align_two_stage(cand, ref, cand, ref))
    return time.perf_counter() - start, sink


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reports", type=int, default=300)
    parser.add_argument("--tokens", type=int, default=60)
    args = parser.parse_args()

    corpus = make_corpus(args.reports, args.tokens)
    pure_time, pure_sink = run_backend(_kernels_py, corpus)
    print(f"pure python : {pure_time * 1000:8.1f} ms  ({args.reports} reports, "
          f"{args.tokens} tokens each)")
    if _kernels_cy is None:
        print("compiled    : not built (pip install -e . with Cython available)")
        return
    comp_time, comp_sink = run_backend(_kernels_cy, corpus)
    assert pure_sink == comp_sink, "backends disagree"
    print(f"compiled    : {comp_time * 1000:8.1f} ms")
    print(f"speedup     : {pure_time / comp_time:8.2f}x")


if __name__ == "__main__":
    main()
