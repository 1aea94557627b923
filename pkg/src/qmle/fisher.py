"""Fisher information of one quantized sample, weighted combination and CRLB."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from qmle.models import GammaClaytonFamily, ParameterVector
from qmle.quantize import QuantizerBank, cell_pmf

MIN_CELL_PROB = 1e-12
REL_STEP = 1e-5


class SingularFisherError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class FisherMatrix:
    matrix: np.ndarray
    theta_at: ParameterVector | None = None
    bank_id: object = None

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"Fisher matrix must be square, got {m.shape}")
        if not np.allclose(m, m.T, atol=1e-10, rtol=0.0):
            raise ValueError("Fisher matrix is not symmetric")
        object.__setattr__(self, "matrix", 0.5 * (m + m.T))

    @classmethod
    def scalar(cls, information: float, bank_id=None) -> FisherMatrix:
        return cls(np.array([[float(information)]]), None, bank_id)

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


@dataclass(frozen=True)
class WeightVector:
    omegas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        if not self.omegas or any(w < 0.0 for w in self.omegas):
            raise ValueError("weights must be a nonempty list of nonnegative reals")
        if abs(math.fsum(self.omegas) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {math.fsum(self.omegas)}, not 1")

    @classmethod
    def equal(cls, n: int) -> WeightVector:
        return cls((1.0 / n,) * n)

    @classmethod
    def from_sizes(cls, sizes: Sequence[int]) -> WeightVector:
        total = sum(sizes)
        if total <= 0:
            raise ValueError("sample sizes sum to zero")
        return cls(tuple(n / total for n in sizes))


@dataclass(frozen=True)
class CrlbPrediction:
    covariance: np.ndarray
    condition_number: float

    def variances(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


def _steps(theta: ParameterVector, rel_step: float) -> np.ndarray:
    return rel_step * np.maximum(1.0, np.abs(theta.as_array()))


def _central_diffs(fn, theta: ParameterVector, rel_step: float):
    x = theta.as_array()
    h = _steps(theta, rel_step)
    grads = []
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        grads.append((fn(ParameterVector.from_array(xp)) - fn(ParameterVector.from_array(xm))) / (2 * h[i]))
    return np.array(grads)  # (k, n_cells)


def fim_quantized(theta: ParameterVector, bank: QuantizerBank, family: GammaClaytonFamily,
                  rel_step: float = REL_STEP, bank_id=None) -> FisherMatrix:
    """FIM of one quantized sample: sum over cells of grad f grad f^T / f.

    Gradients of the cell probabilities are central differences with step
    rel_step * max(1, |theta_i|).
    """
    p = cell_pmf(theta, bank, family)
    if p.min() < MIN_CELL_PROB:
        raise SingularFisherError(
            f"cell probability {p.min():.3e} < {MIN_CELL_PROB}; information is undefined")
    g = _central_diffs(lambda th: cell_pmf(th, bank, family), theta, rel_step)
    return FisherMatrix((g / p) @ g.T, theta, bank_id if bank_id is not None else bank.thresholds)


def fim_quantized_score(theta: ParameterVector, bank: QuantizerBank, family: GammaClaytonFamily,
                        rel_step: float = REL_STEP, bank_id=None) -> FisherMatrix:
    """Same information via E[score score^T], differencing log f instead of f."""
    p = cell_pmf(theta, bank, family)
    if p.min() < MIN_CELL_PROB:
        raise SingularFisherError(
            f"cell probability {p.min():.3e} < {MIN_CELL_PROB}; information is undefined")
    s = _central_diffs(lambda th: np.log(cell_pmf(th, bank, family)), theta, rel_step)
    return FisherMatrix((s * p) @ s.T, theta, bank_id if bank_id is not None else bank.thresholds)


def weighted_information(fims: Sequence[FisherMatrix], w: WeightVector) -> np.ndarray:
    """sum_j w_j I_j, accumulated with fsum so the result ignores input order."""
    if len(fims) != len(w.omegas):
        raise ValueError(f"{len(fims)} matrices but {len(w.omegas)} weights")
    shape = fims[0].matrix.shape
    if any(f.matrix.shape != shape for f in fims):
        raise ValueError("Fisher matrices have different shapes")
    out = np.empty(shape)
    for a in range(shape[0]):
        for b in range(shape[1]):
            out[a, b] = math.fsum(wj * f.matrix[a, b] for wj, f in zip(w.omegas, fims))
    return out


def inverse_information(info: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse of a symmetric information matrix by eigen-decomposition."""
    info = 0.5 * (info + info.T)
    vals, vecs = np.linalg.eigh(info)
    sv = np.abs(vals)
    if sv.max() == 0.0 or sv.min() < 1e-12 * sv.max():
        raise SingularFisherError(
            f"information matrix is singular (singular values {sv.min():.3e} / {sv.max():.3e})")
    cov = (vecs / vals) @ vecs.T
    return 0.5 * (cov + cov.T), float(sv.max() / sv.min())


def combine_fims(fims: Sequence[FisherMatrix], w: WeightVector) -> CrlbPrediction:
    """Asymptotic covariance (sum_j w_j I_j)^-1 of the multi-bank MLE."""
    cov, cond = inverse_information(weighted_information(fims, w))
    return CrlbPrediction(cov, cond)


def bank_fims(theta: ParameterVector, banks: Sequence[QuantizerBank],
              family: GammaClaytonFamily) -> list[FisherMatrix]:
    return [fim_quantized(theta, b, family, bank_id=j) for j, b in enumerate(banks)]


def predict_asymptotic_mse(theta_star: ParameterVector, banks: Sequence[QuantizerBank],
                           w: WeightVector, family: GammaClaytonFamily, n: int) -> np.ndarray:
    """Per-component asymptotic variance diag((sum_j w_j I_j)^-1) / N."""
    if n <= 0:
        raise ValueError("N must be positive")
    return combine_fims(bank_fims(theta_star, banks, family), w).variances() / n
