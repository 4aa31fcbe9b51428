"""Wall-clock comparison of the numba and numpy kernel implementations.

Run with ``python benchmarks/bench_kernels.py [--repeat R]``.  The first
numba call (compilation, or loading the on-disk cache) is timed separately.
"""

import argparse
import time

import numpy as np

from ospca import _kernels


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    perm = np.exp(rng.normal(size=(21, 21))) * 1e-15
    perm_big = np.exp(rng.normal(size=(200, 200))) * 1e-15
    sigma = np.sort(rng.random(441))[::-1]
    b = rng.normal(size=441)
    vecs = rng.normal(size=(441, 40))
    J = rng.normal(size=441)
    return {
        "tpfa 21x21": ("tpfa_triplets", (perm, 10.0, 10.0, 1.0, 1e-3)),
        "tpfa 200x200": ("tpfa_triplets", (perm_big, 10.0, 10.0, 1.0, 1e-3)),
        "alpha m=441": ("perturbation_matrix", (sigma, b, 0.1, 1e-8, 1e-12)),
        "W-MGS 441x40": ("w_gram_schmidt", (vecs, J, 0.5)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba not importable; only the numpy timings are meaningful")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'first [ms]':>12}{'speedup':>10}")
    for label, (name, call_args) in cases(rng).items():
        np_fn = getattr(_kernels, name + "_numpy")
        t_np = _best(lambda: np_fn(*call_args), args.repeat)
        nb_fn = getattr(_kernels, name + "_numba")
        if nb_fn is None:
            print(f"{label:<16}{t_np * 1e3:>12.3f}{'-':>12}{'-':>12}{'-':>10}")
            continue
        t0 = time.perf_counter()
        nb_fn(*call_args)
        first = time.perf_counter() - t0
        t_nb = _best(lambda: nb_fn(*call_args), args.repeat)
        print(f"{label:<16}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{first * 1e3:>12.1f}"
              f"{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
