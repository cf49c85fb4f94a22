#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times the three hot paths (feature hashing, batched embedding, contrastive
training steps) on synthetic workloads and prints per-backend timings with
the speedup of the compiled module. Sizes roughly match a desk-scale
training run (5K pairs, hash_dim 2^16, proj_dim 64).

Usage: python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import random
import time

import numpy as np

from fsrcbench._kernels import _pykern

try:
    from fsrcbench._kernels import _ckern
except ImportError:
    _ckern = None


def make_texts(n, seed=0):
    rng = random.Random(seed)
    vocab = [
        "".join(rng.choice("bcdfglmnprstvz") + rng.choice("aeiou") for _ in range(3))
        for _ in range(400)
    ]
    markers = ["<s>", "</s>", "<o>", "</o>"]
    texts = []
    for _ in range(n):
        words = [rng.choice(vocab) for _ in range(rng.randint(6, 14))]
        words.insert(0, markers[0])
        words.insert(2, markers[1])
        words.insert(-1, markers[2])
        words.append(markers[3])
        texts.append(" ".join(words))
    return texts


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench(quick=False):
    n_texts = 500 if quick else 2000
    n_pairs = 1000 if quick else 5000
    hash_dim, proj_dim, batch = 65536, 64, 4

    texts = make_texts(n_texts)
    payloads = [t.lower().encode("utf-8") for t in texts]
    backends = [("python", _pykern)] + ([("c", _ckern)] if _ckern else [])
    results = {}

    for name, impl in backends:
        results[name] = {}
        results[name]["featurize"] = timeit(
            lambda impl=impl: [impl.featurize(p, hash_dim) for p in payloads]
        )

    feats = [_pykern.featurize(p, hash_dim) for p in payloads]
    norm_feats = [
        (i, v / np.sqrt(v @ v) if v.size else v) for i, v in feats
    ]
    idx_list = [f[0] for f in norm_feats]
    val_list = [f[1] for f in norm_feats]
    rng = np.random.default_rng(0)
    P = rng.normal(0, 0.125, size=(proj_dim, hash_dim))

    for name, impl in backends:
        results[name]["embed_batch"] = timeit(
            lambda impl=impl: impl.embed_batch(P, norm_feats)
        )

    pair_a = rng.integers(0, n_texts, size=n_pairs).astype(np.int64)
    pair_b = ((pair_a + 1 + rng.integers(0, n_texts - 1, size=n_pairs)) % n_texts).astype(np.int64)
    pair_same = rng.integers(0, 2, size=n_pairs).astype(np.uint8)
    order = np.arange(n_pairs, dtype=np.int64)

    for name, impl in backends:
        def run(impl=impl):
            impl.train_block(
                P.copy(), 1.0, idx_list, val_list, pair_a, pair_b, pair_same,
                order, batch, 0.05, 0.01, 1.0,
            )
        results[name]["train_block"] = timeit(run)

    workloads = {
        "featurize": f"{n_texts} texts",
        "embed_batch": f"{n_texts} texts, dim {proj_dim}",
        "train_block": f"{n_pairs} pairs, batch {batch}",
    }
    print(f"{'kernel':<14} {'workload':<24} {'python':>10} {'c':>10} {'speedup':>8}")
    for op, desc in workloads.items():
        py = results["python"][op]
        if _ckern:
            c = results["c"][op]
            print(f"{op:<14} {desc:<24} {py*1000:>8.1f}ms {c*1000:>8.1f}ms {py/c:>7.1f}x")
        else:
            print(f"{op:<14} {desc:<24} {py*1000:>8.1f}ms {'n/a':>10} {'n/a':>8}")
    if not _ckern:
        print("\ncompiled kernel not built; only the numpy fallback was timed")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()
    bench(quick=args.quick)
