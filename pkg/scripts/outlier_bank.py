"""How much does one badly placed bank hurt the combined bound?

Adds a bank with thresholds far in the tail to the four standard banks and
prints per-bank and combined CRLB diagonals at the true parameter.

    python3 scripts/outlier_bank.py --tail 60
"""

import argparse

import numpy as np

from qmle.fisher import WeightVector, bank_fims, combine_fims
from qmle.models import PAPER_FAMILY, PAPER_THETA
from qmle.quantize import QuantizerBank


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tail", type=float, default=60.0, help="threshold of the outlier bank")
    args = ap.parse_args()

    good = [QuantizerBank((t, t)) for t in (25.0, 20.0, 15.0, 10.0)]
    banks = good + [QuantizerBank((args.tail, args.tail))]
    fims = bank_fims(PAPER_THETA, banks, PAPER_FAMILY)
    for bank, fim in zip(banks, fims):
        try:
            diag = np.diag(np.linalg.inv(fim.matrix))
        except np.linalg.LinAlgError:
            diag = None
        print(f"bank {bank.thresholds}: single-bank CRLB diagonal {diag}")
    base = combine_fims(fims[:4], WeightVector.equal(4)).variances()
    with_outlier = combine_fims(fims, WeightVector.equal(5)).variances()
    print("combined, four banks:     ", base)
    print("combined, plus outlier:   ", with_outlier)


if __name__ == "__main__":
    main()
