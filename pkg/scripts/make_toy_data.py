#!/usr/bin/env python3
"""Generate the toy reversal corpus used by configs/toy.yaml."""

import argparse
from pathlib import Path

from convmt.toydata import reversal_pairs


def write(path, lines):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("output_dir", nargs="?", default="toy-data")
    parser.add_argument("--train", type=int, default=300)
    parser.add_argument("--dev", type=int, default=50)
    parser.add_argument("--test", type=int, default=100)
    parser.add_argument("--mono", type=int, default=400)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = args.train + args.dev + args.test + args.mono
    pairs = reversal_pairs(total, seed=args.seed)
    cut1 = args.train
    cut2 = cut1 + args.dev
    cut3 = cut2 + args.test
    write(out / "train.src", [s for s, _ in pairs[:cut1]])
    write(out / "train.tgt", [t for _, t in pairs[:cut1]])
    write(out / "dev.src", [s for s, _ in pairs[cut1:cut2]])
    write(out / "dev.tgt", [t for _, t in pairs[cut1:cut2]])
    write(out / "test.src", [s for s, _ in pairs[cut2:cut3]])
    write(out / "test.tgt", [t for _, t in pairs[cut2:cut3]])
    write(out / "mono.tgt", [t for _, t in pairs[cut3:]])
    print(f"wrote toy corpus under {out}")


if __name__ == "__main__":
    main()
