"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--N 32] [--replicas 64] [--repeat 5]

Prints the best-of-``repeat`` wall time per call for each kernel and backend,
the speedup, and the largest difference between the two outputs.
"""
import argparse
import json
import time

import numpy as np

from snlw import kernels
from snlw.convolution import step_coefficients
from snlw.lattice import FrequencyLattice
from snlw.noise import pack_modes


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(N, R, M):
    lat = FrequencyLattice(N)
    K = lat.size
    packed = pack_modes(lat.half_modes)
    reps = np.arange(R, dtype=np.int64)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((R, M, M))
    co = step_coefficients(N, 1.0 / 256)
    X = rng.standard_normal((R, K)) + 1j * rng.standard_normal((R, K))
    V = rng.standard_normal((R, K)) + 1j * rng.standard_normal((R, K))
    z = rng.standard_normal((R, K, 3, 2))
    scale = np.full(K, np.sqrt(0.5))
    return {
        "mode_normals": lambda m: m.mode_normals(12345, reps, packed, 7),
        "hermite_eval(k=3)": lambda m: m.hermite_eval(x, 1.7, 3),
        "hermite_eval(k=8)": lambda m: m.hermite_eval(x, 1.7, 8),
        "oscillator_step": lambda m: m.oscillator_step(X, V, z, scale, co.cos_x, co.sin_over_w,
                                                       co.msin_w, co.chol),
    }


def _maxdiff(a, b):
    if isinstance(a, tuple):
        return max(_maxdiff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--N", type=int, default=32)
    ap.add_argument("--replicas", type=int, default=64)
    ap.add_argument("--grid", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled extension not built; only the numpy backend is available")
    results = []
    print(f"N={args.N} replicas={args.replicas} grid={args.grid}^2 repeat={args.repeat}")
    print(f"{'kernel':<20}" + "".join(f"{n:>12}" for n in mods) + f"{'speedup':>10}{'max diff':>12}")
    for name, fn in cases(args.N, args.replicas, args.grid).items():
        times = {b: best_time(lambda: fn(m), args.repeat) for b, m in mods.items()}
        outs = {b: fn(m) for b, m in mods.items()}
        diff = _maxdiff(outs["numpy"], outs["cython"]) if len(outs) > 1 else 0.0
        speed = times["numpy"] / times["cython"] if "cython" in times else 1.0
        print(f"{name:<20}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in mods)
              + f"{speed:>9.1f}x{diff:>12.1e}")
        results.append({"kernel": name, "seconds": times, "speedup": speed, "max_diff": diff})
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return results


if __name__ == "__main__":
    main()
