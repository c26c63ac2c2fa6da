#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the NumPy fallback.

Times the batch-hard triplet kernels at desk-scale batch sizes, then a
full training step end to end under each backend. Run from the repository
root:

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import statistics
import time

import numpy as np

import reidlab._kernels as kernels
from reidlab import losses, model
from reidlab._kernels import available_backends, load_backend
from reidlab.linalg import pairwise_sq_euclidean
from reidlab.rng import Rng


def timeit(fn, repeats, inner=20):
    medians = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        medians.append((time.perf_counter() - t0) / inner)
    return statistics.median(medians)


def make_batch(n_classes, k, dim, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), k).astype(np.int64)
    emb = np.ascontiguousarray(rng.normal(size=(labels.size, dim)))
    return emb, labels


def bench_kernels(repeats):
    backends = {name: load_backend(name) for name in available_backends()}
    if "native" not in backends:
        print("compiled core not built; benchmarking the NumPy backend only")
    rows = []
    for label, (n_classes, k, dim) in [
        ("triplet core 16x8d", (8, 2, 8)),
        ("triplet core 64x16d", (16, 4, 16)),
        ("triplet core 128x32d", (16, 8, 32)),
    ]:
        emb, labels = make_batch(n_classes, k, dim)
        row = {"case": label}
        for name, mod in backends.items():
            fn = mod.batch_hard_triplet_core
            row[name] = timeit(lambda: fn(emb, labels, 0.3), repeats)
        rows.append(row)

    emb, labels = make_batch(16, 4, 16)
    dist = np.ascontiguousarray(np.sqrt(pairwise_sq_euclidean(emb, emb)))
    row = {"case": "hard mine 64"}
    for name, mod in backends.items():
        fn = mod.batch_hard_mine
        row[name] = timeit(lambda: fn(dist, labels), repeats)
    rows.append(row)
    return rows


def train_step_closure():
    """One full forward/loss/backward/update step at the default batch
    geometry (16 classes x 4 samples, 16-d features, one hidden stage)."""
    rng = Rng(0)
    params = model.init_params(rng, 16, [32], 16, 40, 2)
    velocity = params.zeros_like()
    rs = np.random.default_rng(1)
    x = rs.normal(size=(64, 16))
    y_id = np.repeat(np.arange(16), 4)
    y_scene = rs.integers(0, 2, size=64)

    def step():
        nonlocal params, velocity
        trace = model.forward(params, x)
        id_out = losses.softmax_cross_entropy(trace.id_logits, y_id)
        trip_out, _ = losses.batch_hard_triplet(trace.embeddings, y_id, 0.3)
        adv_out = losses.scene_adversarial_loss(trace.scene_logits, y_scene)
        grads = model.backward(params, trace, trip_out.grad, id_out.grad,
                               adv_out.grad, 0.1)
        params, velocity = model.sgd_step(params, grads, 0.008, 0.9, 1e-4, velocity)

    return step


def bench_train_step(repeats):
    results = {}
    saved = {n: getattr(kernels, n)
             for n in ("batch_hard_mine", "batch_hard_triplet_core")}
    try:
        for name in available_backends():
            mod = load_backend(name)
            for fn_name in saved:  # benchmark-only backend override
                setattr(kernels, fn_name, getattr(mod, fn_name))
            results[name] = timeit(train_step_closure(), repeats)
    finally:
        for fn_name, fn in saved.items():
            setattr(kernels, fn_name, fn)
    return results


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=9)
    args = parser.parse_args()

    print(f"active backend: {kernels.BACKEND}")
    print(f"available: {', '.join(available_backends())}\n")

    rows = bench_kernels(args.repeats)
    names = [n for n in ("native", "numpy") if any(n in r for r in rows)]
    header = f"{'case':<24}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for row in rows:
        line = f"{row['case']:<24}"
        for n in names:
            line += f"{row[n] * 1e6:>10.1f}us" if n in row else f"{'-':>12}"
        if "native" in row and "numpy" in row:
            line += f"{row['numpy'] / row['native']:>9.2f}x"
        print(line)

    print("\nfull training step (batch 64, D=16, hidden=[32], L=16, C=40):")
    step_times = bench_train_step(args.repeats)
    for name, t in step_times.items():
        print(f"  {name:<8} {t * 1e6:>10.1f}us")
    if {"native", "numpy"} <= set(step_times):
        print(f"  step speedup: {step_times['numpy'] / step_times['native']:.2f}x")


if __name__ == "__main__":
    main()
