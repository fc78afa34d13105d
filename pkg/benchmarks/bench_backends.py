"""Time one BNN chain under the numba and numpy kernel backends.

    python benchmarks/bench_backends.py --dataset iris --samples 5000

The first numba call compiles (or loads the on-disk cache); it is timed
separately and excluded from the steady-state rate.
"""

import argparse
import time

import numpy as np

from compactbnn.experiment import ExperimentConfig, prepare_data, train_chain


def time_backend(cfg, prep, backend, repeats):
    cfg = cfg.replace(backend=backend)
    t0 = time.perf_counter()
    warm = train_chain(cfg.replace(max_samples=10), 0, prep)
    warmup = time.perf_counter() - t0
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        chain = train_chain(cfg, 0, prep)
        best = min(best, time.perf_counter() - t0)
    return warmup, best, chain, warm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default="iris")
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    cfg = ExperimentConfig(dataset=args.dataset, max_samples=args.samples)
    prep = prepare_data(cfg)
    print(f"{args.dataset}: {prep.spec.n_weights} weights, {prep.train.n} training rows, {args.samples} steps")
    chains = {}
    for backend in ("numba", "numpy"):
        warmup, best, chain, _ = time_backend(cfg, prep, backend, args.repeats)
        chains[backend] = chain
        print(f"{backend:>6}: warm-up {warmup:7.3f}s  best {best:7.3f}s  {args.samples / best:10.0f} steps/s")
    same = np.array_equal(chains["numba"].accepted, chains["numpy"].accepted)
    gap = float(np.max(np.abs(chains["numba"].samples - chains["numpy"].samples)))
    print(f"accept flags identical: {same}; max |sample difference| {gap:.3g}")


if __name__ == "__main__":
    main()
