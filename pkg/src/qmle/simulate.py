"""Sampling from the Gamma-Clayton model and the seeded Monte Carlo study."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from qmle.estimate import (MleResult, OptimizerOptions, QuantizedDataset, QuantizedObjective,
                           RawObjective, CellCounts, fit_mle)
from qmle.fisher import (CrlbPrediction, SingularFisherError, WeightVector, bank_fims,
                         combine_fims)
from qmle.models import GammaClaytonFamily, ParameterVector
from qmle.quantize import QuantizerBank

# RNG streams within one trial
SAMPLE_STREAM = 0
START_STREAM = 1


@dataclass(frozen=True)
class SamplerConfig:
    theta_star: ParameterVector
    seed: int = 0
    family: GammaClaytonFamily = GammaClaytonFamily()


def trial_seed(base_seed: int, n: int, run_index: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base_seed, n, run_index, stream])


def sample_joint(n: int, cfg: SamplerConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. points (rows) from the joint model at ``cfg.theta_star``.

    Two sensors use conditional inversion of the Clayton copula; more sensors
    use the gamma-frailty (Marshall-Olkin) construction.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    model = cfg.family.at(cfg.theta_star)
    n_dim = model.n_sensors
    if n_dim == 1:
        u = rng.random((n, 1))
    elif n_dim == 2:
        uw = rng.random((n, 2))
        u = model.copula.sample_pairs(uw[:, 0], uw[:, 1])
    else:
        t = model.copula.theta0
        frailty = rng.gamma(1.0 / t, 1.0, size=(n, 1))
        e = rng.exponential(1.0, size=(n, n_dim))
        u = (1.0 + e / frailty) ** (-1.0 / t)
    # keep probabilities strictly inside (0, 1) for the quantile transform
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return np.column_stack([m.ppf_array(u[:, i]) for i, m in enumerate(model.marginals)])


def split_sizes(n: int, n_banks: int) -> tuple[int, ...]:
    """Equal split of N over the banks; the remainder goes to the lowest indices."""
    q, r = divmod(n, n_banks)
    return tuple(q + (1 if j < r else 0) for j in range(n_banks))


def expand_estimators(names, n_banks: int, divisor: int) -> tuple[str, ...]:
    """Normalize estimator names: 'single' expands to 'single:1'..'single:J'."""
    out = []
    for name in names:
        if name == "single":
            out.extend(f"single:{j}" for j in range(1, n_banks + 1))
        elif name == "raw_subset":
            out.append(f"raw_subset:{divisor}")
        elif name in ("robust", "raw"):
            out.append(name)
        elif name.startswith("single:"):
            j = int(name.split(":", 1)[1])
            if not 1 <= j <= n_banks:
                raise ValueError(f"estimator {name!r} refers to a missing bank")
            out.append(name)
        elif name.startswith("raw_subset:"):
            if int(name.split(":", 1)[1]) < 1:
                raise ValueError(f"bad divisor in {name!r}")
            out.append(name)
        else:
            raise ValueError(f"unknown estimator {name!r}")
    return tuple(dict.fromkeys(out))


@dataclass(frozen=True)
class ExperimentPlan:
    theta_star: ParameterVector
    banks: tuple[QuantizerBank, ...]
    n_grid: tuple[int, ...]
    mc_runs: int
    estimators: tuple[str, ...] = ("robust", "single", "raw", "raw_subset")
    divisor: int = 5
    base_seed: int = 0
    family: GammaClaytonFamily = GammaClaytonFamily()
    optimizer: OptimizerOptions = OptimizerOptions()

    def __post_init__(self):
        object.__setattr__(self, "banks", tuple(self.banks))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if self.mc_runs < 1:
            raise ValueError("mc_runs must be at least 1")
        if not self.banks:
            raise ValueError("plan needs at least one bank")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ValueError("N grid must be a nonempty list of positive sizes")
        if self.divisor < 1:
            raise ValueError("divisor must be a positive integer")
        for b in self.banks:
            if b.n_sensors != self.family.n_sensors:
                raise ValueError(f"bank {b.thresholds} does not match the model's sensor count")
        object.__setattr__(self, "estimators",
                           expand_estimators(self.estimators, len(self.banks), self.divisor))

    @property
    def components(self) -> tuple[str, ...]:
        return tuple(f"theta{i}" for i in range(self.family.k))


@dataclass(frozen=True)
class TrialEstimate:
    theta_hat: tuple[float, ...]
    loglik: float
    converged: bool
    at_boundary: bool


def _record(res: MleResult) -> TrialEstimate:
    return TrialEstimate(res.theta_hat.as_tuple(), res.loglik, res.converged, res.at_boundary)


def _counts(bank: QuantizerBank, ys: np.ndarray) -> CellCounts:
    return CellCounts.from_indices(bank.quantize_array(ys), bank.n_sensors)


def run_single_trial(plan: ExperimentPlan, n: int, run_index: int) -> dict[str, TrialEstimate]:
    """Fit every estimator of the plan on one fresh sample of size ``n``.

    All estimators share the same N draws: the robust fit quantizes
    consecutive blocks of N_j points with bank j, single:j quantizes all N
    with bank j, raw uses all N points and raw_subset:d the first N // d.
    """
    cfg = SamplerConfig(plan.theta_star, 0, plan.family)
    ys = sample_joint(n, cfg, np.random.default_rng(trial_seed(plan.base_seed, n, run_index, SAMPLE_STREAM)))
    start_seed = trial_seed(plan.base_seed, n, run_index, START_STREAM)
    out = {}
    for name in plan.estimators:
        if name == "robust":
            groups, lo = [], 0
            for bank, size in zip(plan.banks, split_sizes(n, len(plan.banks))):
                groups.append((bank, _counts(bank, ys[lo:lo + size])))
                lo += size
            obj = QuantizedObjective(QuantizedDataset(tuple(groups)), plan.family)
        elif name.startswith("single:"):
            bank = plan.banks[int(name.split(":")[1]) - 1]
            obj = QuantizedObjective(QuantizedDataset(((bank, _counts(bank, ys)),)), plan.family)
        elif name == "raw":
            obj = RawObjective(ys, plan.family)
        else:
            m = n // int(name.split(":")[1])
            obj = RawObjective(ys[:m], plan.family)
        out[name] = _record(fit_mle(obj, plan.optimizer, start_seed))
    return out


def _trial_task(args):
    plan, n, run_index = args
    return run_single_trial(plan, n, run_index)


@dataclass
class MseReport:
    """Empirical MSEs per (estimator, N, component) plus per-run estimates."""

    rows: list[dict]
    estimates: dict[tuple[str, int], np.ndarray] = field(repr=False)
    converged: dict[tuple[str, int], np.ndarray] = field(repr=False)
    crlb: dict[str, CrlbPrediction | None] = field(default_factory=dict, repr=False)

    def mse(self, estimator: str, n: int, component: int | str) -> float:
        comp = component if isinstance(component, str) else f"theta{component}"
        for row in self.rows:
            if row["estimator"] == estimator and row["N"] == n and row["component"] == comp:
                return row["mse"]
        raise KeyError((estimator, n, comp))


def theory_crlbs(plan: ExperimentPlan) -> dict[str, CrlbPrediction | None]:
    """Per-sample asymptotic covariance for each quantized estimator (None if undefined)."""
    try:
        fims = bank_fims(plan.theta_star, plan.banks, plan.family)
    except SingularFisherError:
        return {name: None for name in plan.estimators}
    out: dict[str, CrlbPrediction | None] = {}
    for name in plan.estimators:
        try:
            if name == "robust":
                # finite-N weights depend on N through the split; equal split is the limit
                out[name] = combine_fims(fims, WeightVector.equal(len(fims)))
            elif name.startswith("single:"):
                out[name] = combine_fims([fims[int(name.split(":")[1]) - 1]], WeightVector((1.0,)))
            else:
                out[name] = None
        except SingularFisherError:
            out[name] = None
    return out


def _theory_mse(plan: ExperimentPlan, name: str, n: int, fims, crlbs) -> np.ndarray | None:
    if crlbs.get(name) is None:
        return None
    if name == "robust":
        sizes = split_sizes(n, len(plan.banks))
        try:
            return combine_fims(fims, WeightVector.from_sizes(sizes)).variances() / n
        except SingularFisherError:
            return None
    return crlbs[name].variances() / n


def run_experiment(plan: ExperimentPlan, jobs: int = 1) -> MseReport:
    """Run ``mc_runs`` trials for every N and aggregate MSEs.

    Trials are seeded by (base_seed, N, run_index, stream) and aggregated in
    run-index order, so the report does not depend on ``jobs``.
    """
    tasks = [(plan, n, r) for n in plan.n_grid for r in range(plan.mc_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_task, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))
    else:
        results = [_trial_task(t) for t in tasks]

    crlbs = theory_crlbs(plan)
    try:
        fims = bank_fims(plan.theta_star, plan.banks, plan.family)
    except SingularFisherError:
        fims = None
    truth = plan.theta_star.as_array()
    rows, estimates, converged = [], {}, {}
    for i, n in enumerate(plan.n_grid):
        block = results[i * plan.mc_runs:(i + 1) * plan.mc_runs]
        for name in plan.estimators:
            est = np.array([rec[name].theta_hat for rec in block])
            ok = np.array([rec[name].converged for rec in block])
            estimates[(name, n)] = est
            converged[(name, n)] = ok
            theory = _theory_mse(plan, name, n, fims, crlbs) if fims is not None else None
            sq = (est[ok] - truth) ** 2
            for c, comp in enumerate(plan.components):
                used = sq[:, c]
                mse = float(math.fsum(used.tolist()) / used.size) if used.size else None
                se = float(np.std(used, ddof=1) / math.sqrt(used.size)) if used.size > 1 else None
                rows.append({
                    "estimator": name, "N": n, "component": comp, "mse": mse, "mc_se": se,
                    "excluded": int((~ok).sum()),
                    "theory_mse": None if theory is None else float(theory[c]),
                })
    return MseReport(rows, estimates, converged, crlbs)
