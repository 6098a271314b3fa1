"""Write a synthetic core-periphery cession CSV and the list of core reinsurer ids."""
import argparse
from pathlib import Path

from reinsnet.synthesis import core_ids, core_periphery_cessions, write_cessions


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--firms", type=int, default=100)
    ap.add_argument("--core", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="runs/synthetic")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ces = core_periphery_cessions(args.firms, args.core, seed=args.seed)
    write_cessions(ces, out / "cessions.csv")
    (out / "reinsurers.txt").write_text(",".join(core_ids(ces)) + "\n")
    print(f"{len(ces)} cessions among {args.firms} firms written to {out}")


if __name__ == "__main__":
    main()
