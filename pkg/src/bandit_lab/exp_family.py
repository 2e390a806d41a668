"""One-parameter canonical exponential families and their divergences.

A family is described by its log-partition function ``b``. The mean of the
distribution with natural parameter ``theta`` is ``b'(theta)`` and its variance
is ``b''(theta)``. Everything in the package that needs a Kullback-Leibler
divergence between arms goes through :class:`ExpFamilyModel`.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "Family",
    "ExpFamilyModel",
    "ArmDistribution",
    "BanditInstance",
    "DomainError",
    "bernoulli",
    "gaussian",
    "poisson",
    "exponential",
    "kl_mean",
    "kl_natural",
    "variance",
    "d_level_set_sup",
    "d_bar",
    "d_tilde",
    "sample",
    "level_set_sup",
]

LEVEL_TOL = 1e-10
MAX_BISECTION_ITER = 200


class DomainError(ValueError):
    """A parameter lies outside the domain of the family."""


class Family(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class ExpFamilyModel:
    """A one-parameter exponential family.

    ``sigma2`` is only meaningful for the Gaussian family (known variance).
    Exponential rewards are the Gamma family with shape 1, natural parameter
    ``theta = -1/mu``.
    """

    family: Family
    sigma2: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.GAUSSIAN and not self.sigma2 > 0:
            raise ValueError(f"Gaussian variance must be positive, got {self.sigma2}")

    # -- domains ---------------------------------------------------------
    @property
    def theta_domain(self) -> tuple[float, float]:
        if self.family is Family.EXPONENTIAL:
            return (-math.inf, 0.0)
        return (-math.inf, math.inf)

    @property
    def mean_domain(self) -> tuple[float, float]:
        if self.family is Family.BERNOULLI:
            return (0.0, 1.0)
        if self.family is Family.GAUSSIAN:
            return (-math.inf, math.inf)
        return (0.0, math.inf)

    @property
    def mu_min(self) -> float:
        return self.mean_domain[0]

    @property
    def mu_max(self) -> float:
        return self.mean_domain[1]

    @property
    def bounded_above(self) -> bool:
        return math.isfinite(self.mu_max)

    def in_mean_domain(self, mu, closed: bool = False) -> np.ndarray:
        lo, hi = self.mean_domain
        mu = np.asarray(mu, dtype=float)
        if closed:
            return (mu >= lo) & (mu <= hi) & ~np.isnan(mu)
        return (mu > lo) & (mu < hi)

    def check_mean(self, mu, closed: bool = False, what: str = "mean") -> None:
        if not np.all(self.in_mean_domain(mu, closed=closed)):
            bad = np.asarray(mu, dtype=float)
            raise DomainError(
                f"{what} outside the {self.family.value} mean domain "
                f"{self.mean_domain}: {bad[~self.in_mean_domain(bad, closed)] if bad.ndim else bad}"
            )

    def check_theta(self, theta, what: str = "natural parameter") -> None:
        lo, hi = self.theta_domain
        theta = np.asarray(theta, dtype=float)
        if not np.all((theta > lo) & (theta < hi)):
            raise DomainError(f"{what} outside {self.theta_domain}")

    # -- log-partition and derivatives -----------------------------------
    def log_partition(self, theta):
        theta = np.asarray(theta, dtype=float)
        f = self.family
        if f is Family.BERNOULLI:
            return np.logaddexp(0.0, theta)
        if f is Family.GAUSSIAN:
            return 0.5 * self.sigma2 * theta**2
        if f is Family.POISSON:
            return np.exp(theta)
        return -np.log(-theta)

    def mean_of(self, theta):
        """``b'(theta)``: natural parameter to mean."""
        theta = np.asarray(theta, dtype=float)
        f = self.family
        if f is Family.BERNOULLI:
            return special.expit(theta)
        if f is Family.GAUSSIAN:
            return self.sigma2 * theta
        if f is Family.POISSON:
            return np.exp(theta)
        return -1.0 / theta

    def natural_of(self, mu):
        """Inverse of :meth:`mean_of`; boundary means map to +-inf."""
        mu = np.asarray(mu, dtype=float)
        f = self.family
        with np.errstate(divide="ignore"):
            if f is Family.BERNOULLI:
                return special.logit(mu)
            if f is Family.GAUSSIAN:
                return mu / self.sigma2
            if f is Family.POISSON:
                return np.log(mu)
            return -1.0 / mu

    def curvature(self, theta):
        """``b''(theta)``, the variance as a function of the natural parameter."""
        theta = np.asarray(theta, dtype=float)
        f = self.family
        if f is Family.BERNOULLI:
            s = special.expit(theta)
            return s * (1.0 - s)
        if f is Family.GAUSSIAN:
            return np.full_like(theta, self.sigma2)
        if f is Family.POISSON:
            return np.exp(theta)
        return 1.0 / theta**2

    def variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        f = self.family
        if f is Family.BERNOULLI:
            return mu * (1.0 - mu)
        if f is Family.GAUSSIAN:
            return np.full_like(mu, self.sigma2)
        if f is Family.POISSON:
            return mu.copy()
        return mu**2

    # -- divergences -----------------------------------------------------
    def kl(self, mu, nu):
        """d(mu, nu) in closed form, without domain checks.

        Boundary values of ``mu`` use 0 log 0 = 0; a boundary ``nu`` different
        from ``mu`` gives +inf.
        """
        p = np.asarray(mu, dtype=float)
        q = np.asarray(nu, dtype=float)
        f = self.family
        if f is Family.GAUSSIAN:
            return (p - q) ** 2 / (2.0 * self.sigma2)
        if f is Family.BERNOULLI:
            return special.rel_entr(p, q) + special.rel_entr(1.0 - p, 1.0 - q)
        if f is Family.POISSON:
            return special.rel_entr(p, q) - p + q
        with np.errstate(divide="ignore", invalid="ignore"):
            r = p / q
            out = r - 1.0 - np.log(r)
            return np.where(p == q, 0.0, out)

    def kl_theta(self, theta, lam):
        """K(theta, lambda) = b'(theta)(theta - lambda) - b(theta) + b(lambda)."""
        theta = np.asarray(theta, dtype=float)
        lam = np.asarray(lam, dtype=float)
        return (
            self.mean_of(theta) * (theta - lam)
            - self.log_partition(theta)
            + self.log_partition(lam)
        )

    def sample(self, mean, rng: np.random.Generator, size=None):
        mean = np.asarray(mean, dtype=float)
        f = self.family
        if f is Family.BERNOULLI:
            return (rng.random(size if size is not None else mean.shape) < mean).astype(float)
        if f is Family.GAUSSIAN:
            return rng.normal(mean, math.sqrt(self.sigma2), size=size)
        if f is Family.POISSON:
            return np.asarray(rng.poisson(mean, size=size), dtype=float)
        return rng.exponential(mean, size=size)

    def in_support(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        f = self.family
        if f is Family.BERNOULLI:
            return bool(np.all((x == 0.0) | (x == 1.0)))
        if f is Family.GAUSSIAN:
            return bool(np.all(np.isfinite(x)))
        if f is Family.POISSON:
            return bool(np.all((x >= 0) & (x == np.floor(x)) & np.isfinite(x)))
        return bool(np.all((x >= 0) & np.isfinite(x)))


def bernoulli() -> ExpFamilyModel:
    return ExpFamilyModel(Family.BERNOULLI)


def gaussian(sigma2: float = 1.0) -> ExpFamilyModel:
    return ExpFamilyModel(Family.GAUSSIAN, sigma2)


def poisson() -> ExpFamilyModel:
    return ExpFamilyModel(Family.POISSON)


def exponential() -> ExpFamilyModel:
    return ExpFamilyModel(Family.EXPONENTIAL)


@dataclass(frozen=True)
class ArmDistribution:
    model: ExpFamilyModel
    mean: float

    def __post_init__(self) -> None:
        self.model.check_mean(self.mean, what="arm mean")


@dataclass(frozen=True)
class BanditInstance:
    """K arms sharing one family."""

    model: ExpFamilyModel
    means: tuple[float, ...]
    arms: tuple[ArmDistribution, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        means = tuple(float(m) for m in self.means)
        if not means:
            raise ValueError("a bandit instance needs at least one arm")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "arms", tuple(ArmDistribution(self.model, m) for m in means))

    @classmethod
    def from_arms(cls, arms: Sequence[ArmDistribution]) -> "BanditInstance":
        models = {a.model for a in arms}
        if len(models) != 1:
            raise ValueError("all arms must share one exponential family")
        return cls(models.pop(), tuple(a.mean for a in arms))

    @property
    def n_arms(self) -> int:
        return len(self.means)

    @property
    def mu_star(self) -> float:
        return max(self.means)

    @property
    def optimal_set(self) -> tuple[int, ...]:
        best = self.mu_star
        return tuple(i for i, m in enumerate(self.means) if m == best)

    @property
    def gaps(self) -> np.ndarray:
        return self.mu_star - np.asarray(self.means)


# -- public operations --------------------------------------------------------


def kl_mean(model: ExpFamilyModel, mu, mu_prime):
    """Divergence d(mu, mu') between the family members with these means."""
    model.check_mean(mu, closed=True)
    model.check_mean(mu_prime, closed=True)
    out = model.kl(mu, mu_prime)
    return float(out) if np.ndim(out) == 0 else out


def kl_natural(model: ExpFamilyModel, theta, lam):
    model.check_theta(theta)
    model.check_theta(lam)
    out = model.kl_theta(theta, lam)
    return float(out) if np.ndim(out) == 0 else out


def variance(model: ExpFamilyModel, mu):
    model.check_mean(mu)
    out = model.variance(mu)
    return float(out) if np.ndim(out) == 0 else out


def sample(arm: ArmDistribution, rng: np.random.Generator, size=None):
    out = arm.model.sample(arm.mean, rng, size=size)
    return float(out) if size is None else out


def level_set_sup(
    div: Callable[[np.ndarray], np.ndarray],
    start,
    level,
    cap,
    *,
    tol: float = LEVEL_TOL,
    max_iter: int = MAX_BISECTION_ITER,
) -> np.ndarray:
    """Largest q in [start, cap] with div(q) <= level, for div increasing on it.

    ``div(start)`` must be 0. Unbounded ``cap`` triggers geometric bracket
    expansion from ``start + max(1, |start|)``.
    """
    start, level, cap = np.broadcast_arrays(
        np.asarray(start, dtype=float), np.asarray(level, dtype=float), np.asarray(cap, dtype=float)
    )
    shape = start.shape
    start, level, cap = start.ravel(), level.ravel(), cap.ravel()
    result = np.array(start, dtype=float)
    active = level > 0
    if not np.any(active):
        return result.reshape(shape)

    lo = start.copy()
    hi = cap.copy()
    inf_cap = ~np.isfinite(hi) & active
    if np.any(inf_cap):
        step = np.maximum(1.0, np.abs(start[inf_cap]))
        h = start[inf_cap] + step
        lv = level[inf_cap]
        for _ in range(2000):
            over = div_sub(div, h, inf_cap) > lv
            if np.all(over):
                break
            step = np.where(over, step, 2.0 * step)
            h = np.where(over, h, start[inf_cap] + step)
        hi[inf_cap] = h

    # level set reaches the cap
    at_cap = active & np.isfinite(hi) & ~inf_cap
    if np.any(at_cap):
        reach = div_sub(div, hi[at_cap], at_cap) <= level[at_cap]
        idx = np.flatnonzero(at_cap)[reach]
        result[idx] = cap[idx]
        active[idx] = False

    todo = np.flatnonzero(active)
    lo, hi, lv = lo[todo], hi[todo], level[todo]
    done = np.zeros(todo.size, dtype=bool)
    out = lo.copy()
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = div_sub(div, mid, todo)
        close = np.abs(val - lv) <= tol
        newly = close & ~done
        out[newly] = mid[newly]
        done |= close
        stuck = ~done & ((hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi)))
        out[stuck] = lo[stuck]
        done |= stuck
        if np.all(done):
            break
        below = val <= lv
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        out[~done] = lo[~done]
    result[todo] = out
    return result.reshape(shape)


def div_sub(div, q, mask_or_idx):
    """Evaluate ``div`` on a subset; ``div`` receives (q, index array)."""
    idx = np.flatnonzero(mask_or_idx) if np.asarray(mask_or_idx).dtype == bool else mask_or_idx
    return div(q, idx)


def _level_set(model: ExpFamilyModel, x, level, cap, first_arg=None):
    """Vectorized sup{q <= cap : d(first_arg, q) <= level}, starting at x."""
    x = np.asarray(x, dtype=float)
    first = x if first_arg is None else np.asarray(first_arg, dtype=float)
    x_b, first_b, level_b, cap_b = np.broadcast_arrays(
        x, first, np.asarray(level, dtype=float), np.asarray(cap, dtype=float)
    )
    if model.family is Family.GAUSSIAN:
        q = x_b + np.sqrt(2.0 * model.sigma2 * np.maximum(level_b, 0.0))
        return np.minimum(q, cap_b)
    fl = first_b.ravel()

    def div(q, idx):
        return model.kl(fl[idx], q)

    out = level_set_sup(div, x_b, level_b, cap_b)
    return np.minimum(out, cap_b)


def d_level_set_sup(model: ExpFamilyModel, x, level, cap=None):
    """sup{q <= cap : d(x, q) <= level}.

    ``x`` may sit on the closed boundary of the mean domain. ``cap`` defaults
    to the upper end of the mean domain.
    """
    cap = model.mu_max if cap is None else cap
    model.check_mean(x, closed=True, what="x")
    if np.any(np.asarray(level) < 0):
        raise DomainError("level must be nonnegative")
    lo, hi = model.mean_domain
    if np.any(np.asarray(cap) <= lo) or np.any(np.asarray(cap) > hi):
        raise DomainError(f"cap outside ({lo}, {hi}]")
    out = _level_set(model, x, level, cap)
    x_arr = np.asarray(x, dtype=float)
    out = np.where(np.asarray(level) == 0, np.minimum(x_arr, cap), out)
    return float(out) if np.ndim(out) == 0 else out


def _check_clamp(model: ExpFamilyModel, clamp_lo, clamp_hi) -> None:
    if not clamp_lo < clamp_hi:
        raise DomainError(f"invalid clamp interval [{clamp_lo}, {clamp_hi}]")
    model.check_mean(clamp_lo, what="clamp_lo")
    model.check_mean(clamp_hi, what="clamp_hi")


def d_bar(model: ExpFamilyModel, x, y, clamp_lo: float, clamp_hi: float):
    """d evaluated at the first argument projected onto [clamp_lo, clamp_hi]."""
    _check_clamp(model, clamp_lo, clamp_hi)
    model.check_mean(y, closed=True, what="y")
    out = model.kl(np.clip(x, clamp_lo, clamp_hi), y)
    return float(out) if np.ndim(out) == 0 else out


def _d_tilde(model: ExpFamilyModel, x, y, mu_lo: float):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = model.kl(np.maximum(x, mu_lo), y)
    slope = model.natural_of(y) - model.natural_of(mu_lo)
    ext = model.kl(mu_lo, y) + slope * (mu_lo - x)
    return np.where(x > mu_lo, inside, ext)


def d_tilde(model: ExpFamilyModel, x, y, mu_lo: float):
    """d extended linearly (in the first argument) below ``mu_lo``."""
    model.check_mean(y, closed=True, what="y")
    model.check_mean(mu_lo, what="mu_lo")
    out = _d_tilde(model, x, y, mu_lo)
    return float(out) if np.ndim(out) == 0 else out


def d_tilde_level_set_sup(model: ExpFamilyModel, x, level, mu_lo: float, cap: float):
    """sup{q <= cap : d_tilde(x, q) <= level}; the search starts at max(x, mu_lo)."""
    x = np.asarray(x, dtype=float)
    start = np.maximum(x, mu_lo)
    xs, lv, cp = np.broadcast_arrays(x, np.asarray(level, dtype=float), np.asarray(cap, dtype=float))
    st = np.broadcast_to(start, xs.shape)
    flat_x = xs.ravel()

    def div(q, idx):
        return _d_tilde(model, flat_x[idx], q, mu_lo)

    out = level_set_sup(div, st, lv, cp)
    return np.minimum(out, cp)
