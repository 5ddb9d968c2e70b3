"""Solve transport instances from the plain-text format and print the
summary CSV (primal W_p^p, dual value, gap, tv_half).

    python3 scripts/transport_demo.py instances.txt
    python3 scripts/transport_demo.py --random 20 --seed 3
"""

import argparse
import sys

import numpy as np

from couplinglab import measures
from couplinglab.suites import random_transport_instance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("path", nargs="?")
    ap.add_argument("--random", type=int, default=0, help="number of random instances instead of a file")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.path:
        insts = measures.read_instances(args.path)
    else:
        g = np.random.default_rng(args.seed)
        insts = [random_transport_instance(g, k) for k in range(args.random or 5)]
    print(measures.TRANSPORT_CSV_HEADER)
    for inst in insts:
        print(measures.summarize(inst).csv_row())
    if not args.path:
        print("# first instance in the text format:", file=sys.stderr)
        sys.stderr.write(measures.format_instance(insts[0]))


if __name__ == "__main__":
    main()
