"""Compare the numba kernels with their pure-numpy twins.

Run with ``python benchmarks/bench_kernels.py``. Each kernel is called once
to trigger compilation, then timed over several repeats on inputs sized like
the ones the pipeline sees. Results of both paths are checked for agreement.
"""

import argparse
import time

import numpy as np

from childci import kernels


def _time(fn, *args, repeats=5):
    fn(*args)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _cases(rng):
    x = np.cumsum(rng.normal(size=500))
    r = 0.2 * x.std(ddof=1)
    X = rng.normal(size=(120, 8))
    y = rng.integers(0, 3, 120)
    A = rng.normal(size=(90, 10))
    K = (A @ A.T / 10 + 1.0) ** 3
    ys = np.where(rng.random(90) < 0.4, 1.0, -1.0)
    return [
        ("sample entropy counts (n=500, m=3)", kernels._sampen_counts_nb, kernels._sampen_counts_np, (x, 3, r)),
        ("higuchi lengths (n=500, kmax=5)", kernels._higuchi_lengths_nb, kernels._higuchi_lengths_np, (x, 5)),
        ("gini split search (120x8)", kernels._best_split_nb, kernels._best_split_np, (X, y, 3)),
        ("SMO solve (n=90, C=0.1)", kernels._smo_nb, kernels._smo_np, (K, ys, 0.1, 1e-3, 100000)),
    ]


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(u, v) for u, v in zip(a, b))
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-9))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':40s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  agree")
    for name, fast, slow, inputs in _cases(rng):
        tf, of = _time(fast, *inputs, repeats=args.repeats)
        ts, os_ = _time(slow, *inputs, repeats=args.repeats)
        print(f"{name:40s} {tf * 1e3:10.3f} {ts * 1e3:10.3f} {ts / tf:8.1f}  {_agree(of, os_)}")


if __name__ == "__main__":
    main()
