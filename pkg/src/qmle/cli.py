"""Command-line entry point: ``qmle experiment|fit|crlb`` and ``--reproduce-paper``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from qmle import __version__
from qmle.config import ConfigError, ExperimentConfig
from qmle.estimate import EmptyDataError, QuantizedObjective, RawObjective, fit_mle
from qmle.fisher import (FisherMatrix, SingularFisherError, WeightVector, combine_fims,
                         fim_quantized)
from qmle.results import DataError, dumps, finite_or_none, read_data, write_bundle
from qmle.simulate import run_experiment

EXIT_MALFORMED = 2
EXIT_NONCONVERGED = 3
EXIT_NUMERIC = 4

PAPER_CONFIGS = ("paper_figs.toml", "multibank_covariance.toml", "paper_crlb.toml", "scalar_combination.toml")


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int):
        super().__init__(message)
        self.kind = kind
        self.code = code


def _fail(kind: str, message: str, code: int) -> int:
    print(f"qmle: error[{kind}]: {message}", file=sys.stderr)
    return code


def cmd_experiment(config_path, out_dir=None, seed=None, jobs=1, echo=print) -> Path:
    cfg = ExperimentConfig.load(config_path)
    plan = cfg.plan(seed_override=seed)
    cfg_out, formats = cfg.output()
    out = Path(out_dir or cfg_out or "results")
    started = time.perf_counter()
    report = run_experiment(plan, jobs=jobs)
    elapsed = time.perf_counter() - started
    echo_cfg = cfg.to_dict()
    if seed is not None:
        echo_cfg.setdefault("plan", {})["base_seed"] = seed
    write_bundle(out, echo_cfg, plan, report, formats)
    # wall-clock lives outside the bundle so bundles stay byte-reproducible
    (out / "timing.json").write_text(dumps({"wall_clock_seconds": elapsed, "jobs": jobs}))
    echo(f"wrote {out} ({len(plan.n_grid)} N values x {len(plan.estimators)} estimators, "
         f"{plan.mc_runs} runs each, {elapsed:.1f}s)")
    return out


def _crlb_payload(result, data, family):
    try:
        fims = [fim_quantized(result.theta_hat, bank, family, bank_id=j)
                for j, bank in enumerate(data.banks)]
        pred = combine_fims(fims, WeightVector.from_sizes(data.sizes))
    except (SingularFisherError, ValueError) as exc:
        return {"error": str(exc)}
    cov = pred.covariance / data.total
    return {"covariance": cov.tolist(), "std_errors": np.sqrt(np.diag(cov)).tolist(),
            "condition_number": pred.condition_number}


def cmd_fit(config_path, data_path, out=None) -> int:
    out = out or sys.stdout
    cfg = ExperimentConfig.load(config_path)
    family = cfg.family()
    banks = cfg.banks() if "banks" in cfg.raw else None
    data = read_data(Path(data_path), banks, family.n_sensors)
    if isinstance(data, np.ndarray):
        objective, kind = RawObjective(data, family), "raw"
    else:
        objective, kind = QuantizedObjective(data, family), "quantized"
    result = fit_mle(objective, cfg.optimizer(), np.random.SeedSequence(cfg.base_seed()))
    payload = {
        "objective": kind,
        "theta_hat": list(result.theta_hat.as_tuple()),
        "loglik": finite_or_none(result.loglik),
        "converged": result.converged,
        "at_boundary": result.at_boundary,
        "iterations": result.iterations,
        "n_restarts_used": result.n_restarts_used,
    }
    if kind == "quantized":
        payload["crlb"] = _crlb_payload(result, data, family)
    out.write(dumps(payload))
    return 0 if result.converged else EXIT_NONCONVERGED


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def cmd_crlb(config_path, out=None) -> None:
    out = out or sys.stdout
    cfg = ExperimentConfig.load(config_path)
    lines = []
    if "scalar_fims" in cfg.raw:
        for i, (infos, w) in enumerate(cfg.scalar_cases(), start=1):
            pred = combine_fims([FisherMatrix.scalar(x) for x in infos], WeightVector(w))
            var = float(pred.covariance[0, 0])
            lines.append(f"scalar case {i}: informations=[{', '.join(_fmt(x) for x in infos)}] "
                         f"equal weights -> combined variance {var:.4f} ({var!r})")
            lines.append(f"  single-bank variances: [{', '.join(_fmt(1.0 / x) for x in infos)}]")
    if "banks" in cfg.raw and "model" in cfg.raw:
        family, theta, banks = cfg.family(), cfg.theta_star(), cfg.banks()
        w = cfg.bank_weights() or (1.0 / len(banks),) * len(banks)
        lines.append(f"theta = [{', '.join(_fmt(x) for x in theta.as_tuple())}]")
        fims = []
        for j, bank in enumerate(banks, start=1):
            f = fim_quantized(theta, bank, family, bank_id=j)
            fims.append(f)
            lines.append(f"bank {j} thresholds={list(bank.thresholds)} weight={w[j - 1]:.6g} "
                         f"FIM diagonal=[{', '.join(_fmt(x) for x in np.diag(f.matrix))}] "
                         f"min eigenvalue={_fmt(f.eigvals().min())}")
        pred = combine_fims(fims, WeightVector(w))
        lines.append("combined covariance (per sample):")
        for row in pred.covariance:
            lines.append("  [" + ", ".join(_fmt(x) for x in row) + "]")
        lines.append(f"combined variances: [{', '.join(_fmt(x) for x in pred.variances())}]")
        lines.append(f"condition number: {_fmt(pred.condition_number)}")
    if not lines:
        raise ConfigError("crlb needs [scalar_fims] or both [model] and [banks]")
    out.write("\n".join(lines) + "\n")


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("qmle") / "configs" / name))


def reproduce_paper(out_dir, jobs=1, seed=None) -> None:
    out_dir = Path(out_dir or "results")
    for name in PAPER_CONFIGS:
        path = bundled_config(name)
        cfg = ExperimentConfig.load(path)
        target = out_dir / path.stem
        if "plan" in cfg.raw:
            cmd_experiment(path, target, seed, jobs)
        else:
            target.mkdir(parents=True, exist_ok=True)
            with open(target / "crlb.txt", "w") as fh:
                cmd_crlb(path, fh)
            print((target / "crlb.txt").read_text(), end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qmle", description="MLE from dependent 1-bit quantized multi-sensor data.")
    parser.add_argument("--version", action="version", version=f"qmle {__version__}")
    parser.add_argument("--reproduce-paper", action="store_true",
                        help="run the bundled experiment and CRLB configs")
    parser.add_argument("--out-dir", help="output directory")
    parser.add_argument("--seed", type=int, help="override plan.base_seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", dest="sub_out_dir")
    p.add_argument("--seed", dest="sub_seed", type=int)
    p.add_argument("--jobs", dest="sub_jobs", type=int)

    p = sub.add_parser("fit", help="fit theta to a data file")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)

    p = sub.add_parser("crlb", help="print Fisher information and CRLB tables")
    p.add_argument("--config", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.reproduce_paper:
            reproduce_paper(args.out_dir, args.jobs, args.seed)
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return _fail("usage", "give a subcommand or --reproduce-paper", EXIT_MALFORMED)
        if args.command == "experiment":
            jobs = args.sub_jobs if args.sub_jobs is not None else args.jobs
            seed = args.sub_seed if args.sub_seed is not None else args.seed
            if jobs < 1:
                raise ConfigError("--jobs must be at least 1")
            cmd_experiment(args.config, args.sub_out_dir or args.out_dir, seed, jobs)
            return 0
        if args.command == "fit":
            code = cmd_fit(args.config, args.data)
            if code == EXIT_NONCONVERGED:
                return _fail("nonconvergence", "optimizer did not converge; result printed above", code)
            return code
        cmd_crlb(args.config)
        return 0
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_MALFORMED)
    except (DataError, EmptyDataError) as exc:
        return _fail("data", str(exc), EXIT_MALFORMED)
    except SingularFisherError as exc:
        return _fail("singular", str(exc), EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
