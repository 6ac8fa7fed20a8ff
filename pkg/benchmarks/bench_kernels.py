"""Time the gain-matrix kernel under both backends, plus one full acquisition.

    python benchmarks/bench_kernels.py [--paths L] [--grid M] [--repeat R]

The per-call kernel timing isolates the array-factor work; the acquisition
timing shows how much of that survives once SVDs and LM bookkeeping are
added. Run it twice, once with MMWTRACK_DISABLE_NUMBA=1, to compare the
end-to-end numbers.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from mmwtrack import _kernels
from mmwtrack.acquisition import acquire
from mmwtrack.channel import ArrayGeometry, random_paths
from mmwtrack.harness.metrics import noise_variance_for_snr
from mmwtrack.numerics import make_rng
from mmwtrack.sounding import design_grid, observe_paths


def bench_kernel(fn, args, repeat):
    fn(*args)  # warm up (and compile, for numba)
    t = min(timeit.repeat(lambda: fn(*args), number=50, repeat=repeat)) / 50
    return t * 1e6


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=5)
    ap.add_argument("--grid", type=int, default=16)
    ap.add_argument("--antennas", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = make_rng(0)
    n = args.antennas
    geom = ArrayGeometry(n, n)
    grid = design_grid(args.grid, args.grid, geom)
    phi = rng.uniform(0, np.pi, args.paths)
    psi = rng.uniform(0, np.pi, args.paths)
    call = (phi, psi, grid.cos_tx, grid.cos_rx, n, n)

    print(f"kernel: L={args.paths} m={args.grid} n={n}")
    t_np = bench_kernel(_kernels.gain_terms_numpy, call, args.repeat)
    print(f"  numpy  {t_np:9.1f} us/call")
    if _kernels.HAVE_NUMBA:
        t_nb = bench_kernel(_kernels.gain_terms_numba, call, args.repeat)
        print(f"  numba  {t_nb:9.1f} us/call  (x{t_np / t_nb:.1f})")
        a, b = _kernels.gain_terms_numpy(*call), _kernels.gain_terms_numba(*call)
        print(f"  max |numpy - numba| = {max(np.abs(a[0] - b[0]).max(), np.abs(a[1] - b[1]).max()):.2e}")
    else:
        print("  numba not installed")

    s2 = noise_variance_for_snr(20.0, geom)
    batches = []
    for _ in range(20):
        truth = random_paths(rng, 3, n * n)
        batches.append(observe_paths(truth, grid, geom, s2, rng))
    acquire(batches[0], grid, geom)
    t = min(timeit.repeat(lambda: [acquire(b, grid, geom) for b in batches],
                          number=1, repeat=args.repeat)) / len(batches)
    print(f"acquire (backend {_kernels.BACKEND}): {t * 1e3:.1f} ms/trial")


if __name__ == "__main__":
    main()
