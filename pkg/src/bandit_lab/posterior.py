"""Priors and posteriors on an arm's mean.

A posterior is fully determined by the prior, the number of observations
``n`` and their sum (equivalently the empirical mean). Conjugate priors use
closed forms; :class:`GridDensity` handles any positive prior density through
``pi_{n,x}(u) ~ exp(-n d(x, u)) f(u)`` on a mesh.

Quantiles are computed through the upper tail, ``P(X >= q) = p``, which keeps
the extreme levels used by Bayes-UCB accurate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from scipy import special, stats

from .exp_family import DomainError, ExpFamilyModel, Family

__all__ = [
    "BetaPrior",
    "GaussianPrior",
    "GammaPrior",
    "InverseGammaPrior",
    "GridDensity",
    "Prior",
    "Posterior",
    "default_prior",
    "posterior_update",
    "posterior_density",
    "posterior_quantile",
    "posterior_tail",
    "posterior_mean",
    "posterior_sample",
    "upper_quantile",
    "upper_tail",
]

GRID_POINTS = 4096
TRUNCATION = 1e-8


@dataclass(frozen=True)
class BetaPrior:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta hyperparameters must be positive")


@dataclass(frozen=True)
class GaussianPrior:
    """Normal prior on the mean; ``variance=inf`` is the flat improper prior."""

    mean: float = 0.0
    variance: float = math.inf

    def __post_init__(self) -> None:
        if not self.variance > 0:
            raise ValueError("prior variance must be positive (inf for flat)")

    @property
    def flat(self) -> bool:
        return math.isinf(self.variance)


@dataclass(frozen=True)
class GammaPrior:
    """Gamma(shape, rate) prior on a Poisson mean."""

    shape: float = 1.0
    rate: float = 1.0

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("Gamma hyperparameters must be positive")


@dataclass(frozen=True)
class InverseGammaPrior:
    """InverseGamma(shape, scale) prior on an Exponential mean."""

    shape: float = 1.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("InverseGamma hyperparameters must be positive")


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Prior density tabulated on a strictly increasing mesh.

    The values must be positive and integrate to one (trapezoid rule) within
    1e-6; use :meth:`from_pdf` to normalize an arbitrary positive function.
    """

    grid: np.ndarray
    values: np.ndarray
    log_values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ValueError("grid and values must be 1-d arrays of equal length >= 2")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(values > 0):
            raise ValueError("prior density must be positive on the grid")
        mass = np.trapezoid(values, grid)
        if abs(mass - 1.0) > 1e-6:
            raise ValueError(f"prior density integrates to {mass}, not 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "log_values", np.log(values))

    @classmethod
    def from_pdf(
        cls, pdf: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, n: int = GRID_POINTS
    ) -> "GridDensity":
        grid = np.linspace(lo, hi, n)
        values = np.asarray(pdf(grid), dtype=float)
        return cls(grid, values / np.trapezoid(values, grid))

    @classmethod
    def from_prior(cls, prior: "Prior", model: ExpFamilyModel, n: int = GRID_POINTS) -> "GridDensity":
        """Tabulate a conjugate prior; unbounded domains are truncated at the
        1e-8 and 1 - 1e-8 prior quantiles."""
        dist = _scipy_dist(prior, model, 0, 0.0)
        lo, hi = model.mean_domain
        lo = max(lo, float(dist.ppf(TRUNCATION)))
        hi = min(hi, float(dist.isf(TRUNCATION)))
        return cls.from_pdf(dist.pdf, lo, hi, n)


Prior = Union[BetaPrior, GaussianPrior, GammaPrior, InverseGammaPrior, GridDensity]

_CONJUGATE = {
    BetaPrior: Family.BERNOULLI,
    GaussianPrior: Family.GAUSSIAN,
    GammaPrior: Family.POISSON,
    InverseGammaPrior: Family.EXPONENTIAL,
}


def default_prior(model: ExpFamilyModel) -> Prior:
    """Uniform for Bernoulli, flat for Gaussian, Gamma(1,1) for Poisson,
    InvGamma(1,1) for Exponential."""
    return {
        Family.BERNOULLI: BetaPrior(),
        Family.GAUSSIAN: GaussianPrior(),
        Family.POISSON: GammaPrior(),
        Family.EXPONENTIAL: InverseGammaPrior(),
    }[model.family]


def check_compatible(prior: Prior, model: ExpFamilyModel) -> None:
    fam = _CONJUGATE.get(type(prior))
    if fam is not None and fam is not model.family:
        raise ValueError(f"{type(prior).__name__} is not conjugate to {model.family.value} rewards")


# -- vectorized conjugate kernels --------------------------------------------
# n and total broadcast; everything returns arrays.


def _hyper(prior: Prior, model: ExpFamilyModel, n, total):
    n = np.asarray(n, dtype=float)
    total = np.asarray(total, dtype=float)
    if isinstance(prior, BetaPrior):
        return prior.alpha + total, prior.beta + n - total
    if isinstance(prior, GammaPrior):
        return prior.shape + total, prior.rate + n
    if isinstance(prior, InverseGammaPrior):
        return prior.shape + n, prior.scale + total
    if isinstance(prior, GaussianPrior):
        s2 = model.sigma2
        if prior.flat:
            with np.errstate(divide="ignore", invalid="ignore"):
                return total / n, s2 / n
        prec = 1.0 / prior.variance + n / s2
        return (prior.mean / prior.variance + total / s2) / prec, 1.0 / prec
    raise TypeError(type(prior))


def upper_quantile(prior: Prior, model: ExpFamilyModel, n, total, p):
    """q with P(X >= q) = p under the conjugate posterior."""
    p = np.asarray(p, dtype=float)
    a, b = _hyper(prior, model, n, total)
    if isinstance(prior, BetaPrior):
        return special.betainccinv(a, b, p)
    if isinstance(prior, GammaPrior):
        return special.gammainccinv(a, p) / b
    if isinstance(prior, InverseGammaPrior):
        return b / special.gammaincinv(a, p)
    if isinstance(prior, GaussianPrior):
        return a - np.sqrt(b) * special.ndtri(p)
    raise TypeError(type(prior))


def upper_tail(prior: Prior, model: ExpFamilyModel, n, total, v):
    """P(X >= v) under the conjugate posterior."""
    v = np.asarray(v, dtype=float)
    a, b = _hyper(prior, model, n, total)
    if isinstance(prior, BetaPrior):
        return special.betaincc(a, b, np.clip(v, 0.0, 1.0))
    if isinstance(prior, GammaPrior):
        return special.gammaincc(a, b * np.maximum(v, 0.0))
    if isinstance(prior, InverseGammaPrior):
        with np.errstate(divide="ignore"):
            return np.where(v <= 0, 1.0, special.gammainc(a, b / np.maximum(v, 0.0)))
    if isinstance(prior, GaussianPrior):
        return special.ndtr((a - v) / np.sqrt(b))
    raise TypeError(type(prior))


def _scipy_dist(prior: Prior, model: ExpFamilyModel, n, total):
    a, b = (float(h) for h in _hyper(prior, model, n, total))
    if isinstance(prior, BetaPrior):
        return stats.beta(a, b)
    if isinstance(prior, GammaPrior):
        return stats.gamma(a, scale=1.0 / b)
    if isinstance(prior, InverseGammaPrior):
        return stats.invgamma(a, scale=b)
    if isinstance(prior, GaussianPrior):
        if not math.isfinite(b):
            raise ValueError("flat Gaussian prior has no density before any observation")
        return stats.norm(a, math.sqrt(b))
    raise TypeError(type(prior))


# -- grid machinery ----------------------------------------------------------


def _grid_weights(grid: GridDensity, model: ExpFamilyModel, n: int, xbar: float) -> np.ndarray:
    """Normalized posterior density values on the mesh."""
    if n == 0:
        logw = grid.log_values.copy()
    else:
        logw = -n * model.kl(xbar, grid.grid) + grid.log_values
    logw -= np.max(logw)
    w = np.exp(logw)
    return w / np.trapezoid(w, grid.grid)


def _grid_cdf(grid: GridDensity, w: np.ndarray) -> np.ndarray:
    g = grid.grid
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(g))))
    return cdf / cdf[-1]


@dataclass(frozen=True)
class Posterior:
    """Posterior on one arm's mean after ``n`` observations summing to ``total``."""

    model: ExpFamilyModel
    prior: Prior
    n: int = 0
    total: float = 0.0

    def __post_init__(self) -> None:
        check_compatible(self.prior, self.model)
        if self.n < 0:
            raise ValueError("observation count must be nonnegative")

    @classmethod
    def from_stats(cls, model: ExpFamilyModel, prior: Prior, n: int, xbar: float) -> "Posterior":
        return cls(model, prior, int(n), float(n) * float(xbar) if n else 0.0)

    @property
    def xbar(self) -> float:
        return self.total / self.n if self.n else 0.0

    @property
    def is_grid(self) -> bool:
        return isinstance(self.prior, GridDensity)

    def update(self, reward: float) -> "Posterior":
        if not self.model.in_support(reward):
            raise DomainError(f"reward {reward} outside the {self.model.family.value} support")
        return replace(self, n=self.n + 1, total=self.total + float(reward))

    def hyperparameters(self) -> tuple[float, float]:
        if self.is_grid:
            raise TypeError("grid posteriors have no hyperparameters")
        a, b = _hyper(self.prior, self.model, self.n, self.total)
        return float(a), float(b)

    def _flat_guard(self) -> None:
        if isinstance(self.prior, GaussianPrior) and self.prior.flat and self.n == 0:
            raise ValueError("flat Gaussian prior is improper before any observation")

    # grid helpers
    def _grid_state(self):
        w = _grid_weights(self.prior, self.model, self.n, self.xbar)
        return w, _grid_cdf(self.prior, w)

    def density(self, u):
        u = np.asarray(u, dtype=float)
        self.model.check_mean(u, closed=True, what="u")
        if self.is_grid:
            g = self.prior.grid
            if np.any((u < g[0]) | (u > g[-1])):
                raise DomainError("u outside the grid span")
            w, _ = self._grid_state()
            out = np.interp(u, g, w)
        else:
            self._flat_guard()
            out = _scipy_dist(self.prior, self.model, self.n, self.total).pdf(u)
        return float(out) if out.ndim == 0 else out

    def tail(self, v):
        """P(X >= v)."""
        v = np.asarray(v, dtype=float)
        if self.is_grid:
            w, cdf = self._grid_state()
            out = 1.0 - np.interp(v, self.prior.grid, cdf, left=0.0, right=1.0)
        else:
            self._flat_guard()
            out = upper_tail(self.prior, self.model, self.n, self.total, v)
        return float(out) if out.ndim == 0 else out

    def upper_quantile(self, p):
        """q with P(X >= q) = p."""
        p = np.asarray(p, dtype=float)
        if self.is_grid:
            _, cdf = self._grid_state()
            out = _invert_cdf(cdf, self.prior.grid, 1.0 - p)
        else:
            self._flat_guard()
            out = upper_quantile(self.prior, self.model, self.n, self.total, p)
        return float(out) if out.ndim == 0 else out

    def quantile(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if np.any((alpha <= 0) | (alpha >= 1)):
            raise ValueError("quantile level must lie in (0, 1)")
        return self.upper_quantile(1.0 - alpha)

    def mean(self) -> float:
        if self.is_grid:
            w, _ = self._grid_state()
            return float(np.trapezoid(w * self.prior.grid, self.prior.grid))
        self._flat_guard()
        a, b = _hyper(self.prior, self.model, self.n, self.total)
        if isinstance(self.prior, BetaPrior):
            return float(a / (a + b))
        if isinstance(self.prior, GammaPrior):
            return float(a / b)
        if isinstance(self.prior, InverseGammaPrior):
            return float(b / (a - 1.0)) if a > 1 else math.inf
        return float(a)

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        if self.is_grid:
            _, cdf = self._grid_state()
            out = _invert_cdf(cdf, self.prior.grid, u)
        else:
            self._flat_guard()
            out = upper_quantile(self.prior, self.model, self.n, self.total, u)
        return float(out) if size is None else out


def _invert_cdf(cdf: np.ndarray, grid: np.ndarray, level) -> np.ndarray:
    """Inverse of the piecewise-linear CDF interpolant."""
    level = np.asarray(level, dtype=float)
    idx = np.searchsorted(cdf, level, side="left")
    idx = np.clip(idx, 1, cdf.size - 1)
    c0, c1 = cdf[idx - 1], cdf[idx]
    g0, g1 = grid[idx - 1], grid[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(c1 > c0, (level - c0) / (c1 - c0), 0.0)
    return g0 + np.clip(frac, 0.0, 1.0) * (g1 - g0)


# -- functional interface ------------------------------------------------------


def posterior_update(p: Posterior, reward: float) -> Posterior:
    return p.update(reward)


def posterior_density(p: Posterior, u):
    return p.density(u)


def posterior_quantile(p: Posterior, alpha):
    return p.quantile(alpha)


def posterior_tail(p: Posterior, v):
    return p.tail(v)


def posterior_mean(p: Posterior) -> float:
    return p.mean()


def posterior_sample(p: Posterior, rng: np.random.Generator, size=None):
    return p.sample(rng, size)


def grid_upper_quantile(grid: GridDensity, model: ExpFamilyModel, n, total, p) -> np.ndarray:
    """Elementwise grid quantiles for arrays of statistics (loops over entries)."""
    n, total, p = np.broadcast_arrays(np.asarray(n), np.asarray(total, dtype=float), np.asarray(p, dtype=float))
    out = np.empty(n.shape)
    for i in np.ndindex(n.shape):
        ni = int(n[i])
        xbar = total[i] / ni if ni else 0.0
        w = _grid_weights(grid, model, ni, xbar)
        out[i] = _invert_cdf(_grid_cdf(grid, w), grid.grid, 1.0 - p[i])
    return out
