"""Gamma marginals, the Clayton copula and their Sklar composition."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate

from qmle import special

# Below this the copula is evaluated as the independence (product) copula.
INDEPENDENCE_THETA = 1e-8


@dataclass(frozen=True)
class GammaMarginal:
    shape: float
    scale: float = 4.0

    def __post_init__(self):
        if not self.shape > 0.0:
            raise ValueError(f"Gamma shape must be positive, got {self.shape}")
        if not self.scale > 0.0:
            raise ValueError(f"Gamma scale must be positive, got {self.scale}")

    def pdf(self, y: float) -> float:
        return gamma_pdf(y, self)

    def logpdf(self, y: float) -> float:
        if y < 0.0:
            raise special.DomainError(f"y must be nonnegative, got {y}")
        if y == 0.0:
            if self.shape == 1.0:
                return -math.log(self.scale)
            return math.inf if self.shape < 1.0 else -math.inf
        return special.gamma_logpdf_std(self.shape, y / self.scale) - math.log(self.scale)

    def cdf(self, y: float) -> float:
        return gamma_cdf(y, self)

    def sf(self, y: float) -> float:
        if y < 0.0:
            raise special.DomainError(f"y must be nonnegative, got {y}")
        return special.regularized_q(self.shape, y / self.scale)

    def ppf(self, p: float) -> float:
        return gamma_quantile(p, self)

    def logpdf_array(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ((self.shape - 1.0) * np.log(y) - y / self.scale
                   - self.shape * math.log(self.scale) - math.lgamma(self.shape))
        return np.where(y > 0.0, out, -np.inf)

    def cdf_array(self, y: np.ndarray) -> np.ndarray:
        return special.gammainc_lower_array(self.shape, np.maximum(y, 0.0) / self.scale)

    def ppf_array(self, p: np.ndarray) -> np.ndarray:
        return self.scale * special.gammainc_lower_inv_array(self.shape, p)

    @property
    def mean(self) -> float:
        return self.shape * self.scale


def gamma_pdf(y: float, m: GammaMarginal) -> float:
    """Density y^(a-1) exp(-y/s) / (s^a Gamma(a))."""
    return math.exp(m.logpdf(y))


def gamma_cdf(y: float, m: GammaMarginal) -> float:
    if y < 0.0:
        raise special.DomainError(f"y must be nonnegative, got {y}")
    return special.regularized_p(m.shape, y / m.scale)


def gamma_quantile(p: float, m: GammaMarginal) -> float:
    if not 0.0 < p < 1.0:
        raise special.DomainError(f"p must lie in (0, 1), got {p}")
    return m.scale * special.gammainc_lower_inv(m.shape, p)


def _log_generator_sum(a: Sequence[float]) -> float:
    """log(sum_i exp(a_i) - n + 1) for a_i = -theta0 log u_i >= 0, overflow-safe."""
    m = max(a)
    if m < 1.0:
        return math.log1p(math.fsum(math.expm1(x) for x in a))
    return m + math.log(math.fsum(math.exp(x - m) for x in a) - (len(a) - 1) * math.exp(-m))


def _log_generator_sum_array(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    with np.errstate(over="ignore"):
        small = np.log1p(np.sum(np.expm1(np.minimum(a, 1.0)), axis=1))
    large = m + np.log(np.sum(np.exp(a - m[:, None]), axis=1) - (a.shape[1] - 1) * np.exp(-m))
    return np.where(m < 1.0, small, large)


@dataclass(frozen=True)
class ClaytonCopula:
    """Clayton copula with positive dependence parameter ``theta0``.

    The L-variate form C(u) = (sum u_i^-t - L + 1)^(-1/t) is used for
    L != 2; with L = 2 it reduces to the usual bivariate family.
    """

    theta0: float

    def __post_init__(self):
        if not self.theta0 > 0.0:
            raise ValueError(f"Clayton theta0 must be positive, got {self.theta0}")

    @property
    def independent(self) -> bool:
        return self.theta0 < INDEPENDENCE_THETA

    def cdf(self, us: Sequence[float]) -> float:
        """Joint CDF at the point ``us`` of the unit cube."""
        for u in us:
            if not 0.0 <= u <= 1.0:
                raise special.DomainError(f"copula argument outside [0, 1]: {u}")
        inner = [u for u in us if u < 1.0]
        if not inner:
            return 1.0
        if min(inner) == 0.0:
            return 0.0
        if len(inner) == 1:
            return inner[0]
        if self.independent:
            return math.prod(inner)
        t = self.theta0
        return math.exp(-_log_generator_sum([-t * math.log(u) for u in inner]) / t)

    def logpdf_array(self, u: np.ndarray) -> np.ndarray:
        """Log copula density at rows of ``u`` (shape (n, L)), interior points."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        n_dim = u.shape[1]
        logu = np.log(u)
        if n_dim == 1 or self.independent:
            return np.zeros(u.shape[0])
        t = self.theta0
        norm = sum(math.log1p(k * t) for k in range(1, n_dim))
        return (norm + (-1.0 - t) * logu.sum(axis=1)
                + (-n_dim - 1.0 / t) * _log_generator_sum_array(-t * logu))

    def sample_pairs(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Conditional-inversion map from independent uniforms (u, w) to (u, v)."""
        if self.independent:
            return np.column_stack([u, w])
        t = self.theta0
        v = ((w ** (-t / (1.0 + t)) - 1.0) * u ** (-t) + 1.0) ** (-1.0 / t)
        return np.column_stack([u, v])


def clayton_cdf(u: float, v: float, c: ClaytonCopula) -> float:
    return c.cdf((u, v))


def clayton_density(u: float, v: float, c: ClaytonCopula) -> float:
    """(1+t) u^(-1-t) v^(-1-t) (u^-t + v^-t - 1)^(-2-1/t) on the open square."""
    if not (0.0 < u < 1.0 and 0.0 < v < 1.0):
        raise special.DomainError(f"density needs interior arguments, got ({u}, {v})")
    if c.independent:
        return 1.0
    t = c.theta0
    lu, lv = math.log(u), math.log(v)
    log_s = _log_generator_sum([-t * lu, -t * lv])
    return math.exp(math.log1p(t) + (-1.0 - t) * (lu + lv) + (-2.0 - 1.0 / t) * log_s)


@dataclass(frozen=True)
class ParameterVector:
    """theta = (theta0, theta1, ..., thetaL): copula parameter then marginal shapes."""

    theta0: float
    marginal_shapes: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "marginal_shapes", tuple(float(s) for s in self.marginal_shapes))
        object.__setattr__(self, "theta0", float(self.theta0))
        if not all(math.isfinite(x) and x > 0.0 for x in self.as_tuple()):
            raise ValueError(f"parameters must be finite and positive: {self.as_tuple()}")

    @classmethod
    def from_array(cls, values) -> ParameterVector:
        values = [float(x) for x in values]
        return cls(values[0], tuple(values[1:]))

    def as_tuple(self) -> tuple[float, ...]:
        return (self.theta0, *self.marginal_shapes)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    @property
    def k(self) -> int:
        return 1 + len(self.marginal_shapes)


@dataclass(frozen=True)
class JointModel:
    marginals: tuple[GammaMarginal, ...]
    copula: ClaytonCopula

    @property
    def n_sensors(self) -> int:
        return len(self.marginals)

    def marginal_cdfs(self, y: Sequence[float]) -> list[float]:
        return [m.cdf(yi) for m, yi in zip(self.marginals, y)]

    def cdf(self, y: Sequence[float]) -> float:
        return self.copula.cdf(self.marginal_cdfs(y))

    def logpdf(self, y: Sequence[float]) -> float:
        return float(self.logpdf_array(np.asarray(y, dtype=float)[None, :])[0])

    def logpdf_array(self, ys: np.ndarray) -> np.ndarray:
        ys = np.atleast_2d(np.asarray(ys, dtype=float))
        if ys.shape[1] != self.n_sensors:
            raise ValueError(f"expected {self.n_sensors} columns, got {ys.shape[1]}")
        support = np.all(ys > 0.0, axis=1)
        safe = np.where(ys > 0.0, ys, 1.0)
        logp = sum(m.logpdf_array(safe[:, i]) for i, m in enumerate(self.marginals))
        u = np.column_stack([m.cdf_array(safe[:, i]) for i, m in enumerate(self.marginals)])
        inside = np.all((u > 0.0) & (u < 1.0), axis=1)
        u = np.where(inside[:, None], u, 0.5)
        out = logp + self.copula.logpdf_array(u)
        return np.where(support & inside, out, -np.inf)


@dataclass(frozen=True)
class GammaClaytonFamily:
    """Parametric family p(y | theta): Gamma(theta_i, scale_i) margins, Clayton(theta0) copula."""

    scales: tuple[float, ...] = (4.0, 4.0)

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))

    @property
    def n_sensors(self) -> int:
        return len(self.scales)

    @property
    def k(self) -> int:
        return self.n_sensors + 1

    def at(self, theta: ParameterVector) -> JointModel:
        if len(theta.marginal_shapes) != self.n_sensors:
            raise ValueError(
                f"theta has {len(theta.marginal_shapes)} marginal shapes, "
                f"model has {self.n_sensors} sensors")
        margins = tuple(GammaMarginal(a, s) for a, s in zip(theta.marginal_shapes, self.scales))
        return JointModel(margins, ClaytonCopula(theta.theta0))


PAPER_FAMILY = GammaClaytonFamily((4.0, 4.0))
PAPER_THETA = ParameterVector(1.0759, (4.0, 5.0))


def joint_logpdf(y: Sequence[float], theta: ParameterVector,
                 family: GammaClaytonFamily = PAPER_FAMILY) -> float:
    """log c(F_1(y_1), ..., F_L(y_L) | theta0) + sum_i log p_i(y_i | theta_i)."""
    return family.at(theta).logpdf(y)


@lru_cache(maxsize=256)
def _spearman_cached(theta0: float, epsabs: float) -> float:
    cop = ClaytonCopula(theta0)
    if cop.independent:
        return 0.0
    t = theta0

    def integrand(v, u):
        if u <= 0.0 or v <= 0.0:
            return 0.0
        return math.exp(-_log_generator_sum([-t * math.log(u), -t * math.log(v)]) / t)

    val, _ = integrate.dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=epsabs / 12.0, epsrel=0.0)
    return 12.0 * val - 3.0


def spearman_rho(c: ClaytonCopula, epsabs: float = 1e-5) -> float:
    """Spearman's rho, 12 * int int C(u, v) du dv - 3, by adaptive quadrature."""
    return _spearman_cached(float(c.theta0), float(epsabs))


def theta0_from_spearman(rho: float, tol: float = 1e-7) -> float:
    """Clayton parameter with the given Spearman rho, by bisection on ``spearman_rho``."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"target Spearman rho must lie in (0, 1), got {rho}")
    lo, hi = 1e-6, 1.0
    while spearman_rho(ClaytonCopula(hi), 1e-9) < rho:
        lo, hi = hi, 2.0 * hi
        if hi > 1e4:
            raise ValueError(f"Spearman rho {rho} not reachable")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if spearman_rho(ClaytonCopula(mid), 1e-9) < rho:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
