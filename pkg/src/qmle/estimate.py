"""Quantized and raw-data log-likelihoods and the multi-start simplex MLE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from qmle.models import GammaClaytonFamily, ParameterVector
from qmle.quantize import PmfConsistencyError, QuantizerBank, cell_probs, word_index

NEG_INF = -math.inf


class EmptyDataError(ValueError):
    """No observations to fit."""


@dataclass(frozen=True)
class CellCounts:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise ValueError("cell counts must be nonnegative")
        n = len(self.counts)
        if n == 0 or n & (n - 1):
            raise ValueError(f"number of cells must be a power of two, got {n}")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def n_sensors(self) -> int:
        return len(self.counts).bit_length() - 1

    def as_array(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64)

    @classmethod
    def from_indices(cls, indices: np.ndarray, n_sensors: int) -> CellCounts:
        return cls(tuple(np.bincount(np.asarray(indices, dtype=np.int64),
                                     minlength=2 ** n_sensors).tolist()))


def accumulate_counts(words: Iterable[Sequence[int]], n_sensors: int) -> CellCounts:
    """Tally cell words into a count vector indexed by big-endian word value."""
    counts = [0] * (2 ** n_sensors)
    for w in words:
        if len(w) != n_sensors:
            raise ValueError(f"word {tuple(w)} does not have {n_sensors} bits")
        counts[word_index(w)] += 1
    return CellCounts(tuple(counts))


@dataclass(frozen=True)
class QuantizedDataset:
    """Per-bank cell counts; the implied weights are N_j / N."""

    groups: tuple[tuple[QuantizerBank, CellCounts], ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple((b, c) for b, c in self.groups))
        if not self.groups:
            raise ValueError("a quantized dataset needs at least one bank")
        for bank, counts in self.groups:
            if 2 ** bank.n_sensors != len(counts.counts):
                raise ValueError(f"bank {bank.thresholds} does not match {len(counts.counts)} cells")

    @property
    def banks(self) -> tuple[QuantizerBank, ...]:
        return tuple(b for b, _ in self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(c.total for _, c in self.groups)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def weights(self) -> np.ndarray:
        n = self.total
        if n == 0:
            raise EmptyDataError("dataset has no observations")
        return np.array(self.sizes, dtype=float) / n


def _loglik_terms(theta, bank, counts, family) -> list[float] | None:
    try:
        pmf = cell_probs(theta, bank, family)
    except PmfConsistencyError:
        return None
    terms = []
    for n, p in zip(counts.counts, pmf):
        if n == 0:
            continue
        if p <= 0.0:
            return None
        terms.append(n * math.log(p))
    return terms


def quantized_loglik(theta: ParameterVector, data: QuantizedDataset,
                     family: GammaClaytonFamily) -> float:
    """sum_j sum_cells n_{j,cell} log f_U^(j)(cell | theta); -inf if infeasible.

    Terms are summed with ``math.fsum`` so the value does not depend on bank order.
    """
    terms: list[float] = []
    for bank, counts in data.groups:
        part = _loglik_terms(theta, bank, counts, family)
        if part is None:
            return NEG_INF
        terms.extend(part)
    return math.fsum(terms)


def raw_loglik(theta: ParameterVector, samples: np.ndarray,
               family: GammaClaytonFamily) -> float:
    """sum_n log p(y_n | theta); -inf if any sample is outside the support."""
    logp = family.at(theta).logpdf_array(samples)
    if not np.all(np.isfinite(logp)):
        return NEG_INF
    return math.fsum(logp.tolist())


class QuantizedObjective:
    def __init__(self, data: QuantizedDataset, family: GammaClaytonFamily):
        if data.total == 0:
            raise EmptyDataError("quantized dataset has no observations")
        self.data = data
        self.family = family

    @property
    def k(self) -> int:
        return self.family.k

    def __call__(self, theta: ParameterVector) -> float:
        return quantized_loglik(theta, self.data, self.family)


class RawObjective:
    def __init__(self, samples: np.ndarray, family: GammaClaytonFamily):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.size == 0 or samples.shape[0] == 0:
            raise EmptyDataError("no raw samples")
        self.samples = samples
        self.family = family

    @property
    def k(self) -> int:
        return self.family.k

    def __call__(self, theta: ParameterVector) -> float:
        return raw_loglik(theta, self.samples, self.family)


@dataclass(frozen=True)
class OptimizerOptions:
    n_starts: int = 4
    max_iter: int = 2000
    tol: float = 1e-8
    initial_step: float = 0.5
    start_sigma: float = 0.5
    log_bound: float = 8.0
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not (self.tol > 0 and self.initial_step > 0 and self.log_bound > 0):
            raise ValueError("tol, initial_step and log_bound must be positive")


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    converged: bool
    n_evals: int


def nelder_mead(func: Callable[[np.ndarray], float], x0: np.ndarray, step: float,
                tol: float, max_iter: int, alpha: float = 1.0, gamma: float = 2.0,
                rho: float = 0.5, sigma: float = 0.5) -> SimplexResult:
    """Minimize ``func`` with the Nelder-Mead simplex.

    ``func`` may return +inf (infeasible); such vertices simply rank worst.
    Stops once the simplex diameter drops below ``tol`` or after ``max_iter``
    iterations.  Vertex ordering is stable, so runs are reproducible.
    """
    x0 = np.asarray(x0, dtype=float)
    dim = x0.size
    n_evals = 0

    def f(x):
        nonlocal n_evals
        n_evals += 1
        v = func(x)
        return math.inf if math.isnan(v) else v

    simplex = [x0.copy()]
    for i in range(dim):
        x = x0.copy()
        x[i] += step
        simplex.append(x)
    values = [f(x) for x in simplex]

    def diameter():
        pts = [p.tolist() for p in simplex]
        return max(math.dist(a, b) for i, a in enumerate(pts) for b in pts[i + 1:])

    iterations = 0
    converged = False
    while True:
        order = sorted(range(dim + 1), key=lambda i: values[i])
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        if diameter() < tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        iterations += 1

        centroid = sum(simplex[:-1]) / dim
        worst = simplex[-1]
        xr = centroid + alpha * (centroid - worst)
        fr = f(xr)
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe = centroid + gamma * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + rho * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + rho * (worst - centroid)
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        best = simplex[0]
        for i in range(1, dim + 1):
            simplex[i] = best + sigma * (simplex[i] - best)
            values[i] = f(simplex[i])

    return SimplexResult(simplex[0], values[0], iterations, converged, n_evals)


@dataclass
class MleResult:
    theta_hat: ParameterVector
    loglik: float
    converged: bool
    iterations: int
    n_restarts_used: int
    at_boundary: bool = False
    flat_components: tuple[int, ...] = ()
    restarts: list[SimplexResult] = field(default_factory=list, repr=False)


def start_points(k: int, opts: OptimizerOptions, seed) -> list[np.ndarray]:
    """Log-space starts: theta = (1, ..., 1), then Gaussian perturbations of it."""
    rng = np.random.default_rng(seed)
    starts = [np.zeros(k)]
    for _ in range(opts.n_starts - 1):
        starts.append(rng.normal(0.0, opts.start_sigma, size=k))
    return starts


def fit_mle(objective, opts: OptimizerOptions | None = None, seed=0) -> MleResult:
    """Maximize ``objective`` over theta > 0 by simplex search in log-space.

    ``objective`` maps a ParameterVector to a log-likelihood (-inf when
    infeasible) and exposes the parameter dimension as ``k``.  Log-parameters
    outside [-log_bound, log_bound] are treated as infeasible.  The best of
    ``opts.n_starts`` restarts is returned; ties within 1e-12 go to the
    earliest restart.  A component the objective does not depend on at all
    is reported in ``flat_components`` and the fit is marked unconverged.
    """
    opts = opts or OptimizerOptions()
    k = objective.k
    bound = opts.log_bound

    def neg_loglik(phi):
        if any(abs(v) > bound for v in phi.tolist()):
            return math.inf
        return -objective(ParameterVector.from_array(np.exp(phi)))

    runs = []
    for x0 in start_points(k, opts, seed):
        runs.append(nelder_mead(neg_loglik, x0, opts.initial_step, opts.tol, opts.max_iter,
                                opts.reflection, opts.expansion, opts.contraction, opts.shrink))
    best = 0
    for i, run in enumerate(runs[1:], start=1):
        if run.fun < runs[best].fun - 1e-12:
            best = i
    run = runs[best]
    if not math.isfinite(run.fun):
        # never left the infeasible region
        theta = ParameterVector.from_array(np.ones(k))
        return MleResult(theta, NEG_INF, False, run.iterations, len(runs), True, runs)
    at_boundary = bool(np.any(np.abs(run.x) > bound - 1e-3))
    flat = _flat_components(neg_loglik, run.x, run.fun)
    return MleResult(ParameterVector.from_array(np.exp(run.x)), -run.fun,
                     run.converged and not flat, run.iterations, len(runs), at_boundary,
                     flat, runs)


def _flat_components(f, x, fx, delta=1e-3) -> tuple[int, ...]:
    """Components along which ``f`` does not change at all: unidentified parameters."""
    flat = []
    for i in range(x.size):
        changes = []
        for sign in (1.0, -1.0):
            xs = x.copy()
            xs[i] += sign * delta
            changes.append(abs(f(xs) - fx))
        if max(changes) <= 1e-14 * max(1.0, abs(fx)):
            flat.append(i)
    return tuple(flat)
