"""Binary threshold quantizers, quantizer banks and exact cell probabilities."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qmle.models import GammaClaytonFamily, ParameterVector

CLAMP_TOL = 1e-12
SUM_TOL = 1e-10


class PmfConsistencyError(ArithmeticError):
    """Cell probabilities are negative or do not sum to one."""


@dataclass(frozen=True)
class ThresholdQuantizer:
    """1-bit quantizer: outputs 1 iff x >= threshold."""

    threshold: float

    def __call__(self, x: float) -> int:
        return int(x >= self.threshold)


@dataclass(frozen=True)
class QuantizerBank:
    """One group of L threshold quantizers, one per sensor."""

    thresholds: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))
        if not self.thresholds:
            raise ValueError("a bank needs at least one quantizer")

    @property
    def quantizers(self) -> tuple[ThresholdQuantizer, ...]:
        return tuple(ThresholdQuantizer(t) for t in self.thresholds)

    @property
    def n_sensors(self) -> int:
        return len(self.thresholds)

    @property
    def n_cells(self) -> int:
        return 2 ** len(self.thresholds)

    def quantize_array(self, ys: np.ndarray) -> np.ndarray:
        """Cell index (big-endian bit value) for each row of ``ys``."""
        ys = np.atleast_2d(ys)
        bits = (ys >= np.asarray(self.thresholds)).astype(np.int64)
        weights = 2 ** np.arange(self.n_sensors - 1, -1, -1)
        return bits @ weights


CellWord = tuple[int, ...]


def all_words(n_sensors: int) -> list[CellWord]:
    """The 2^L words in canonical (big-endian) order."""
    return list(itertools.product((0, 1), repeat=n_sensors))


def word_index(word: Sequence[int]) -> int:
    idx = 0
    for b in word:
        if b not in (0, 1):
            raise ValueError(f"cell word bits must be 0/1, got {tuple(word)}")
        idx = 2 * idx + b
    return idx


def index_word(index: int, n_sensors: int) -> CellWord:
    return tuple((index >> (n_sensors - 1 - i)) & 1 for i in range(n_sensors))


def quantize_point(y: Sequence[float], bank: QuantizerBank) -> CellWord:
    if len(y) != bank.n_sensors:
        raise ValueError(f"point has {len(y)} coordinates, bank has {bank.n_sensors}")
    return tuple(q(yi) for q, yi in zip(bank.quantizers, y))


def _signed_terms(n_sensors: int):
    # For each word, the inclusion-exclusion expansion of
    # P(Y_i < t_i for bit 0, Y_i >= t_i for bit 1) into joint-CDF terms:
    # a list of (sign, mask) where mask[i] says whether coordinate i keeps u_i
    # (True) or is pushed to 1 (False).
    table = []
    for word in all_words(n_sensors):
        ones = [i for i, b in enumerate(word) if b == 1]
        terms = []
        for r in range(len(ones) + 1):
            for subset in itertools.combinations(ones, r):
                mask = tuple(b == 0 or i in subset for i, b in enumerate(word))
                terms.append(((-1) ** r, mask))
        table.append(terms)
    return table


_TERMS_CACHE: dict[int, list] = {}


def cell_pmf(theta: ParameterVector, bank: QuantizerBank,
             family: GammaClaytonFamily) -> np.ndarray:
    """Probability of each of the 2^L cells, indexed by big-endian cell word.

    Each cell is an axis-aligned orthant; its mass is an alternating sum of
    the joint CDF over the cell's corners.
    """
    return np.array(cell_probs(theta, bank, family))


def cell_probs(theta: ParameterVector, bank: QuantizerBank,
               family: GammaClaytonFamily) -> list[float]:
    """List-valued :func:`cell_pmf`, cheaper inside likelihood loops."""
    if bank.n_sensors != family.n_sensors:
        raise ValueError(f"bank has {bank.n_sensors} quantizers, model has {family.n_sensors} sensors")
    model = family.at(theta)
    u = [m.cdf(t) if t > 0.0 else 0.0 for m, t in zip(model.marginals, bank.thresholds)]
    n = bank.n_sensors
    if n == 1:
        probs = [u[0], 1.0 - u[0]]
    elif n == 2:
        c = model.copula.cdf(u)
        probs = [c, u[0] - c, u[1] - c, 1.0 - u[0] - u[1] + c]
    else:
        terms = _TERMS_CACHE.get(n)
        if terms is None:
            terms = _TERMS_CACHE[n] = _signed_terms(n)
        corner: dict[tuple[bool, ...], float] = {}
        probs = []
        for word_terms in terms:
            parts = []
            for sign, mask in word_terms:
                if mask not in corner:
                    corner[mask] = model.copula.cdf([ui if keep else 1.0 for ui, keep in zip(u, mask)])
                parts.append(sign * corner[mask])
            probs.append(math.fsum(parts))
    return _checked(probs)


def _checked(probs: list[float]) -> list[float]:
    low = min(probs)
    if low < -CLAMP_TOL or not all(math.isfinite(p) for p in probs):
        raise PmfConsistencyError(f"cell probability {low:.3e} below -{CLAMP_TOL}")
    if low < 0.0:
        probs = [max(p, 0.0) for p in probs]
        total = math.fsum(probs)
        probs = [p / total for p in probs]
    total = math.fsum(probs)
    if abs(total - 1.0) > SUM_TOL:
        raise PmfConsistencyError(f"cell probabilities sum to {total!r}")
    return probs


def cell_region_volume_check(theta: ParameterVector, bank: QuantizerBank,
                             family: GammaClaytonFamily, n_grid: int = 400,
                             upper: float = 100.0) -> float:
    """Max |quadrature mass - cell_pmf| over the four cells of a 2-sensor bank.

    Each cell rectangle, truncated to [0, upper]^2, is integrated with an
    ``n_grid`` x ``n_grid`` Gauss-Legendre rule.  Mass beyond ``upper`` is
    dropped, so agreement is only as tight as the truncation allows.
    """
    if bank.n_sensors != 2:
        raise ValueError("volume check is implemented for two sensors only")
    model = family.at(theta)
    nodes, weights = np.polynomial.legendre.leggauss(n_grid)

    def axis_rule(a, b):
        return 0.5 * (b - a) * nodes + 0.5 * (a + b), 0.5 * (b - a) * weights

    t1, t2 = (min(max(t, 0.0), upper) for t in bank.thresholds)
    mass = np.zeros(4)
    for idx, word in enumerate(all_words(2)):
        lim1 = (0.0, t1) if word[0] == 0 else (t1, upper)
        lim2 = (0.0, t2) if word[1] == 0 else (t2, upper)
        if lim1[1] <= lim1[0] or lim2[1] <= lim2[0]:
            continue
        x1, w1 = axis_rule(*lim1)
        x2, w2 = axis_rule(*lim2)
        g1, g2 = np.meshgrid(x1, x2, indexing="ij")
        dens = np.exp(model.logpdf_array(np.column_stack([g1.ravel(), g2.ravel()])))
        mass[idx] = float(np.outer(w1, w2).ravel() @ dens)
    return float(np.max(np.abs(mass - cell_pmf(theta, bank, family))))
