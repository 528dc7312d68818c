"""gen -> train -> denoise -> eval through the command-line entry point."""

import argparse
import json
import sys
from pathlib import Path

from steplearn.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/e2e")
    ap.add_argument("--route", default="discrete", choices=("discrete", "direct", "params"))
    ap.add_argument("--n", type=int, default=4, help="grid resolution")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = out / "config.json"
    cfg.write_text(json.dumps({"out": str(out), "route": args.route, "grid": {"n": args.n},
                               "seed": args.seed, "m": 8, "held_out": 4}, indent=2))
    artifact = out / ("lambdas.txt" if args.route == "params" else "regularizer.txt")
    for argv in (["gen"], ["train"], ["denoise", "--reg", str(artifact)], ["eval", "--reg", str(artifact)]):
        rc = cli(argv + ["--config", str(cfg)])
        if rc:
            sys.exit(rc)


if __name__ == "__main__":
    main()
