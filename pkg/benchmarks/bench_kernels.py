"""Time the numba kernels against the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py [--size 64] [--repeats 200]

Also times one full reaction-diffusion solve under whichever backend is
active (set TORUSBAYES_NUMBA=0 to benchmark the numpy path end to end).
"""

import argparse
import time

import numpy as np

from torusbayes import _kernels
from torusbayes._kernels import NUMPY_BACKEND


def _timeit(fn, args, repeats):
    fn(*args)  # warm-up / jit compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    m = args.size
    rng = np.random.default_rng(0)
    u = rng.standard_normal((m, m))
    c = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    r0 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    r1 = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
    decay = np.exp(-rng.uniform(0, 4, (m, m)))
    k = np.fft.fftfreq(m, d=1.0 / m)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    ksq = kx ** 2 + ky ** 2
    inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    cx = c.copy()
    cy = r0.copy()

    cases = {
        "bump_reaction": (u, 1.0, 10.0),
        "lawson_predictor": (decay, c, r0, 1e-3),
        "lawson_corrector": (decay, c, r0, r1, 1e-3),
        "leray_pair": (cx, cy, kx, ky, inv),
        "convect_2d": (u, u, u, u, u, u),
    }

    print(f"array size: {m}x{m}, repeats: {args.repeats}")
    print(f"active backend: {_kernels.BACKEND}")
    print(f"{'kernel':<20} {'numpy':>12} {'active':>12} {'speedup':>9}")
    for name, case in cases.items():
        t_np = _timeit(NUMPY_BACKEND[name], case, args.repeats)
        t_active = _timeit(getattr(_kernels, name), case, args.repeats)
        print(f"{name:<20} {t_np * 1e6:>10.1f}us {t_active * 1e6:>10.1f}us "
              f"{t_np / t_active:>8.2f}x")

    from torusbayes.forward import ReactionTerm, solve_rde
    from torusbayes.priors import PriorSpec, sample_prior

    spec = PriorSpec(alpha=3.0, sieve_dim=8, basis="torus_scalar", dim=1,
                     resolution=m)
    theta = sample_prior(spec, 0)
    t = _timeit(lambda: solve_rde(theta, ReactionTerm(), 0.25, 2.5e-3), (), 20)
    print(f"\nsolve_rde 1D M={m}, 100 steps ({_kernels.BACKEND}): {t * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
