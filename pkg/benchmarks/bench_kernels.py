"""Time the compiled kernels against the numpy/scipy fallback.

    python3 benchmarks/bench_kernels.py [--items 3000] [--users 2000] [--threads 1] [--repeat 5]

Prints the median seconds per kernel for each backend and the speedup.
"""

import argparse
import statistics
import time

import numpy as np

from lowpass_cf import _kernels
from lowpass_cf.graph import _gram_operands
from lowpass_cf.synthetic import planted_clusters


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(kern, args):
    R = planted_clusters(args.users, args.items, args.density, seed=0).csr.astype(np.float64)
    operands = _gram_operands(R)
    n = args.items
    gram_out = np.zeros((n, n))
    P = np.random.default_rng(0).random((n, n))
    batch = R[: min(args.users, 1024)]
    indptr, indices = batch.indptr.astype(np.int64), batch.indices.astype(np.int64)
    mm_out = np.zeros((batch.shape[0], n))
    scores = np.random.default_rng(1).random((batch.shape[0], n))
    top = np.empty((batch.shape[0], 20), dtype=np.int64)
    work = np.empty((batch.shape[0], 20))
    t = args.threads

    def gram():
        gram_out.fill(0.0)
        kern.gram_rows(*operands, 0, n, gram_out, t)

    def hadamard():
        kern.hadamard_power_inplace(P.copy(), 0.6, t)

    def matmul():
        mm_out.fill(0.0)
        kern.csr_dense_matmul(indptr, indices, batch.data, P, mm_out, t)

    def topk():
        kern.topk_masked(scores, indptr, indices, top, work, t)

    return {"gram_rows": gram, "hadamard_power": hadamard, "csr_dense_matmul": matmul, "topk_masked": topk}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--users", type=int, default=2000)
    parser.add_argument("--items", type=int, default=3000)
    parser.add_argument("--density", type=float, default=0.005)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    results = {name: {} for name in backends}
    for name in backends:
        for kernel, fn in cases(_kernels.get_backend(name), args).items():
            fn()  # warm-up
            results[name][kernel] = median_time(fn, args.repeat)

    header = f"{'kernel':<18}" + "".join(f"{b + ' [s]':>14}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(f"{args.users} users x {args.items} items, density {args.density}, {args.threads} thread(s)")
    print(header)
    for kernel in results[backends[0]]:
        line = f"{kernel:<18}" + "".join(f"{results[b][kernel]:>14.4f}" for b in backends)
        if len(backends) == 2:
            line += f"{results['python'][kernel] / results['native'][kernel]:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
