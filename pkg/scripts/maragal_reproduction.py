"""Maragal_3T comparison: plain vs switching AB-GMRES, BA-GMRES, LSQR, LSMR.

    python scripts/maragal_reproduction.py path/to/Maragal_3.mtx [--seed 0] [--out results/maragal3T]

Writes the usual CLI artefacts (per-solver CSV traces, summary.json) and
prints the comparison table.
"""

import argparse
import sys

from krylov_stab.cli import main

SOLVERS = ["ab-gmres:plain", "ab-gmres:switching", "ba-gmres", "lsqr", "lsmr"]


def parse():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("matrix")
    ap.add_argument("--seed", default="0")
    ap.add_argument("--out", default="results/maragal3T")
    ap.add_argument("--repeats", default="1")
    return ap.parse_args()


if __name__ == "__main__":
    args = parse()
    code = main(["run", "--matrix", args.matrix, "--transpose", "--seed", args.seed,
                 "--repeats", args.repeats, "--out", args.out, "--solver", *SOLVERS])
    if code == 0:
        code = main(["compare", f"{args.out}/summary.json"])
    sys.exit(code)
