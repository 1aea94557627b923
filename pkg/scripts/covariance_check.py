"""Compare the empirical covariance of the multi-bank MLE with (sum w_j I_j)^-1 / N.

    python3 scripts/covariance_check.py --n 4000 --runs 500 --jobs 4
"""

import argparse

import numpy as np

from qmle.fisher import WeightVector, bank_fims, combine_fims
from qmle.models import PAPER_FAMILY, PAPER_THETA
from qmle.quantize import QuantizerBank
from qmle.simulate import ExperimentPlan, run_experiment, split_sizes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--runs", type=int, default=500)
    ap.add_argument("--seed", type=int, default=4000)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    banks = tuple(QuantizerBank((t, t)) for t in (25.0, 20.0, 15.0, 10.0))
    plan = ExperimentPlan(PAPER_THETA, banks, (args.n,), args.runs, estimators=("robust",), base_seed=args.seed)
    report = run_experiment(plan, jobs=args.jobs)
    ok = report.converged[("robust", args.n)]
    est = report.estimates[("robust", args.n)][ok]

    w = WeightVector.from_sizes(split_sizes(args.n, len(banks)))
    pred = combine_fims(bank_fims(PAPER_THETA, banks, PAPER_FAMILY), w)
    theory = pred.covariance / args.n
    emp = np.cov(est, rowvar=False)

    np.set_printoptions(precision=5, suppress=False)
    print(f"{ok.sum()}/{args.runs} fits converged; condition number {pred.condition_number:.3g}")
    print("empirical covariance:\n", emp)
    print("predicted covariance:\n", theory)
    print("variance ratio empirical/predicted:", np.diag(emp) / np.diag(theory))
    print("relative Frobenius gap:", np.linalg.norm(emp - theory) / np.linalg.norm(theory))
    print("mean bias:", est.mean(axis=0) - PAPER_THETA.as_array())


if __name__ == "__main__":
    main()
