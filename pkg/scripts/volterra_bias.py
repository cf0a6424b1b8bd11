"""Terminal variance of Volterra-sampled fBm: RMS cell nodes versus cell midpoints."""

import argparse

import numpy as np

from skewflow.fbm import TimeGrid, sample_fbm_volterra, sample_wiener
from skewflow.kernel_ops import volterra_matrix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.4])
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--count", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=2)
    args = ap.parse_args()
    grid = TimeGrid(1.0, args.n)
    w = sample_wiener(grid, 1, args.count, args.seed)
    print("h,node,row_variance,mc_variance,mc_stderr")
    for h in args.h:
        for node in ("rms", "midpoint"):
            row = float(np.sum(volterra_matrix(h, 1.0, args.n, node)[-1] ** 2) * grid.dt)
            x = sample_fbm_volterra(h, grid, w, node).data[:, -1, 0]
            v = float(x.var(ddof=1))
            se = v * np.sqrt(2.0 / (args.count - 1))
            print(f"{h},{node},{row:.6f},{v:.5f},{se:.5f}")


if __name__ == "__main__":
    main()
