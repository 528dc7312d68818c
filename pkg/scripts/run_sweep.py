"""Training objective of the learned step regularizer as the grid is refined.

    python scripts/run_sweep.py --side 4 --m 8 --levels 1 2 3 4 5
"""

import argparse
import time

from steplearn.core import GridSpec
from steplearn.datagen import NoiseSpec, SceneSpec, gen_training_set
from steplearn.io import write_csv
from steplearn.learn import LearnConfig, resolution_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--side", type=int, default=4)
    ap.add_argument("--m", type=int, default=8)
    ap.add_argument("--shift", type=float, default=0.1, help="monotone-map noise shift")
    ap.add_argument("--levels", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--route", choices=("discrete", "direct"), default="discrete")
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--csv", help="write n, objective, bound to this file")
    args = ap.parse_args()

    scene = SceneSpec(side=args.side, n_squares=2, size_range=(1, max(1, args.side // 2)), seed=args.seed)
    ts = gen_training_set(scene, NoiseSpec("monotone-map", {"shift": args.shift}, seed=args.seed), args.m)
    t0 = time.perf_counter()
    traj = resolution_sweep(ts, GridSpec(-1, 2, args.levels[0]), args.levels, LearnConfig(), args.route)
    rows = []
    print(f"{'n':>3} {'objective':>12} {'m|G|4^-n':>12}")
    for n, obj, _ in traj:
        bound = ts.m * ts.n_coords * 4.0 ** -n
        rows.append((n, obj, bound))
        print(f"{n:>3} {obj:12.6g} {bound:12.6g}")
    print(f"{time.perf_counter() - t0:.2f}s")
    if args.csv:
        write_csv(args.csv, ["n", "objective", "bound"], rows)


if __name__ == "__main__":
    main()
