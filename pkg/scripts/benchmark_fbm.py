"""Wall-clock comparison of the fBm samplers (cold = first call, warm = cached factorization)."""

import argparse
import time

from skewflow.fbm import TimeGrid, _cholesky_factor, circulant_eigenvalues, sample_fbm


def timed(fn):
    start = time.perf_counter()
    fn()
    return time.perf_counter() - start


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=0.3)
    ap.add_argument("--n", type=int, nargs="+", default=[256, 1024, 2048])
    ap.add_argument("--count", type=int, default=2000)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    print("n,method,cold_s,warm_s")
    for n in args.n:
        grid = TimeGrid(1.0, n)
        for method in ("cholesky", "circulant", "volterra"):
            _cholesky_factor.cache_clear()
            circulant_eigenvalues.cache_clear()
            run = lambda: sample_fbm(method, args.h, grid, 1, args.count, 0, workers=args.workers)  # noqa: E731
            cold = timed(run)
            warm = timed(run)
            print(f"{n},{method},{cold:.3f},{warm:.3f}")


if __name__ == "__main__":
    main()
