"""Reconstruction error along eps -> 0 with alpha = eps for a diagonal operator."""

import argparse

import numpy as np

from steplearn.ista import regularization_path


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--coords", type=int, default=16)
    ap.add_argument("--k-range", type=float, nargs=2, default=[0.5, 0.9])
    ap.add_argument("--p", type=float, default=1.5)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3, 1e-4])
    ap.add_argument("--seed", type=int, default=10)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    k = rng.uniform(*args.k_range, args.coords)
    f_true = rng.standard_normal(args.coords)
    pts = regularization_path(f_true, k, args.eps, np.ones((1, args.coords)), [args.p], seed=args.seed)
    print(f"{'eps':>8} {'error':>12} {'iters':>6}")
    for pt in pts:
        print(f"{pt.eps:8.0e} {pt.error:12.6g} {pt.iterations:6d}")


if __name__ == "__main__":
    main()
