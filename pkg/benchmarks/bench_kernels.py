"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times the two hot kernels (top-s selection and the one-bit sign solver) and
a full message decode at the working scale (n=1000, d=500, s=10). The
compiled backend is skipped if the extension is not built.
"""

import argparse
import importlib
import time

import numpy as np

from sdfl import kernels
from sdfl.onebit import DecoderOptions, EncodingMatrix, decode, encode


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(mod, phi, bits, v, repeat):
    results = {}
    results["top_s_indices (n=1000, s=10)"] = time_call(
        lambda: mod.top_s_indices(v, 10), repeat * 20)
    results["biht_solve (d=500, n=1000, s=10)"] = time_call(
        lambda: mod.biht_solve(phi, bits, 10, 100, 10, 1 / 500), repeat)
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=30)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    n, d, s = 1000, 500, 10
    w = np.zeros(n)
    w[rng.choice(n, s, replace=False)] = rng.uniform(0.5, 2.0, s) \
        * np.where(rng.random(s) < 0.5, -1, 1)
    enc = EncodingMatrix(d=d, n=n, seed=7)
    phi = enc.realize()
    msg = encode(w, enc, 5.0)
    bits = msg.signs()
    v = rng.standard_normal(n)

    backends = {}
    backends["numpy"] = importlib.import_module("sdfl._kernels_np")
    try:
        backends["cython"] = importlib.import_module("sdfl._biht_cy")
    except ImportError:
        print("compiled extension not built; benchmarking numpy only")

    table = {name: bench_backend(mod, phi, bits, v, args.repeat)
             for name, mod in backends.items()}
    # agreement sanity: both backends must pick the same support
    supports = {}
    for name, mod in backends.items():
        sol, mis, _ = mod.biht_solve(phi, bits, s, 100, 10, 1 / d)
        supports[name] = (tuple(np.flatnonzero(sol)), mis)
    if len(set(supports.values())) != 1:
        print("WARNING: backends disagree:", supports)

    width = max(len(k) for cols in table.values() for k in cols)
    names = list(table)
    header = f"{'kernel':<{width}}  " + "  ".join(f"{b:>12}" for b in names)
    if len(names) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for key in table[names[0]]:
        row = f"{key:<{width}}  "
        row += "  ".join(f"{table[b][key] * 1e6:>10.1f}us" for b in names)
        if len(names) == 2:
            row += f"  {table[names[0]][key] / table[names[1]][key]:>7.2f}x"
        print(row)

    t = time_call(lambda: decode(msg, enc, 5.0, s, DecoderOptions()),
                  args.repeat)
    print(f"\nfull decode via selected backend ({kernels.backend()}): "
          f"{t * 1e3:.3f} ms")
    z = decode(msg, enc, 5.0, s)
    cos = float(w @ z / (np.linalg.norm(w) * np.linalg.norm(z)))
    print(f"recovery cosine on the benchmark instance: {cos:.5f}")


if __name__ == "__main__":
    main()
