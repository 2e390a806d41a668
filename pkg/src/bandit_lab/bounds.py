"""Regret lower bounds and numerical checks of the deviation inequalities.

Lower bounds
    * :func:`lai_robbins_curve` -- frequentist ``sum (mu* - mu_a)/d(mu_a, mu*) log T``.
    * :func:`bayes_risk_constant_homogeneous` / :func:`bayes_risk_constant_product`
      -- constants multiplying ``log^2 T`` in the Bayes-risk lower bound, from a
      prior density on the natural parameter.

Checks (each returns a report that serializes to JSON)
    * Chernoff tail of an empirical mean,
    * self-normalized deviation over a random number of samples,
    * maximal inequality for centred random walks,
    * quadratic (Pinsker-like) sandwiches of the divergence on a compact,
    * the posterior tail envelope ``A e^{-nd}/n <= pi_{n,x}([v, mu+)) <= B sqrt(n) e^{-nd}``.

Monte Carlo checks pass when ``empirical <= analytic + 3 * stderr``.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate, special, stats

from .exp_family import BanditInstance, DomainError, ExpFamilyModel, Family
from .posterior import BetaPrior, GaussianPrior, Posterior, Prior

__all__ = [
    "LowerBoundCurve",
    "BayesRiskConstant",
    "BayesRiskMethod",
    "BoundReport",
    "PinskerReport",
    "EnvelopeReport",
    "lai_robbins_curve",
    "bayes_risk_constant_homogeneous",
    "bayes_risk_constant_product",
    "bernoulli_uniform_constant",
    "candidate_constants",
    "beta_theta_prior",
    "pinsker_check",
    "chernoff_check",
    "self_normalized_bound",
    "self_normalized_check",
    "maximal_inequality_bound",
    "maximal_inequality_check",
    "posterior_tail_envelope",
    "reports_to_json",
    "SUITES",
    "run_suite",
]

N_SE = 3.0


# -- lower bounds ------------------------------------------------------------


@dataclass(frozen=True)
class LowerBoundCurve:
    constant: float

    def evaluate(self, T):
        return self.constant * np.log(T)

    __call__ = evaluate


def lai_robbins_curve(instance: BanditInstance) -> LowerBoundCurve:
    mu_star = instance.mu_star
    total = 0.0
    for m in sorted(instance.means):
        if m < mu_star:
            total += (mu_star - m) / float(instance.model.kl(m, mu_star))
    return LowerBoundCurve(total)


class BayesRiskMethod(str, enum.Enum):
    CLOSED_FORM_BERNOULLI_UNIFORM = "closed-form-bernoulli-uniform"
    NUMERIC_HOMOGENEOUS = "numeric-homogeneous"
    NUMERIC_GENERAL_PRODUCT = "numeric-general-product"


@dataclass(frozen=True)
class BayesRiskConstant:
    value: float
    method: BayesRiskMethod

    def evaluate(self, T):
        return self.value * np.log(T) ** 2


def _check_cdf(density, cdf, lo: float, hi: float) -> None:
    """Spot-check cdf' == density at a few interior points."""
    a = lo if math.isfinite(lo) else -8.0
    b = hi if math.isfinite(hi) else 8.0
    if not math.isfinite(lo) and math.isfinite(hi):
        a = hi - 16.0
    if math.isfinite(lo) and not math.isfinite(hi):
        b = lo + 16.0
    for z in np.linspace(a, b, 9)[1:-1]:
        h = 1e-5 * max(1.0, abs(z))
        fd = (cdf(z + h) - cdf(z - h)) / (2 * h)
        q = density(z)
        if not math.isclose(fd, q, rel_tol=1e-4, abs_tol=1e-7):
            raise ValueError(f"CDF derivative {fd} disagrees with density {q} at {z}")


def _quad(f, lo: float, hi: float) -> float:
    val, err = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=500)
    if not math.isfinite(val):
        raise ValueError("integrand is not integrable")
    return val


def bayes_risk_constant_homogeneous(
    density: Callable[[float], float],
    cdf: Callable[[float], float],
    K: int,
    theta_domain: tuple[float, float] = (-math.inf, math.inf),
) -> BayesRiskConstant:
    """K(K-1)/2 * integral of q^2 Q^(K-2) for i.i.d. natural-parameter priors."""
    if K < 2:
        raise ValueError("need at least two arms")
    lo, hi = theta_domain
    _check_cdf(density, cdf, lo, hi)
    integral = _quad(lambda th: density(th) ** 2 * cdf(th) ** (K - 2), lo, hi)
    return BayesRiskConstant(K * (K - 1) / 2.0 * integral, BayesRiskMethod.NUMERIC_HOMOGENEOUS)


def bayes_risk_constant_product(
    densities: Sequence[Callable[[float], float]],
    cdfs: Sequence[Callable[[float], float]],
    theta_domain: tuple[float, float] = (-math.inf, math.inf),
) -> BayesRiskConstant:
    """1/2 sum_a E[h_a(max_{i != a} theta_i)] for independent, non-identical priors.

    The maximum of the other arms has density
    ``sum_i h_i prod_{j != i} H_j``, collapsing the inner integral to one dimension.
    """
    K = len(densities)
    if K < 2 or len(cdfs) != K:
        raise ValueError("need matching densities and cdfs for at least two arms")
    lo, hi = theta_domain
    for h, H in zip(densities, cdfs):
        _check_cdf(h, H, lo, hi)
    total = 0.0
    for a in range(K):
        others = [i for i in range(K) if i != a]

        def max_density(th, others=others):
            acc = 0.0
            for i in others:
                term = densities[i](th)
                for j in others:
                    if j != i:
                        term *= cdfs[j](th)
                acc += term
            return acc

        total += _quad(lambda th, a=a, md=max_density: densities[a](th) * md(th), lo, hi)
    return BayesRiskConstant(0.5 * total, BayesRiskMethod.NUMERIC_GENERAL_PRODUCT)


def bernoulli_uniform_constant(K: int) -> float:
    """(K-1) / (2(K+1)) for K Bernoulli arms with uniform priors."""
    if K < 2:
        raise ValueError("need at least two arms")
    return 0.5 * (K - 1) / (K + 1)


def candidate_constants(K: int) -> dict[str, float]:
    """Both normalizations in circulation for the uniform Bernoulli constant."""
    return {"derived": bernoulli_uniform_constant(K), "undivided": (K - 1) / (K + 1)}


def beta_theta_prior(alpha: float = 1.0, beta: float = 1.0):
    """Density and CDF of logit(mu) for mu ~ Beta(alpha, beta)."""
    dist = stats.beta(alpha, beta)
    lognorm = special.betaln(alpha, beta)

    def density(th):
        # mu^alpha (1-mu)^beta / B(alpha, beta) with mu = expit(th)
        return math.exp(
            -alpha * math.log1p(math.exp(-th)) - beta * math.log1p(math.exp(th)) - lognorm
        ) if abs(th) < 700 else 0.0

    def cdf(th):
        return float(dist.cdf(special.expit(th)))

    return density, cdf


# -- reports -----------------------------------------------------------------


@dataclass
class BoundReport:
    name: str
    params: dict
    analytic: float
    empirical: float
    stderr: float
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PinskerReport:
    name: str
    params: dict
    c1: float
    c2: float
    n_pairs: int
    violations: dict
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnvelopeReport:
    name: str
    params: dict
    statement: int
    b_A: Optional[float]
    b_B: Optional[float]
    C: Optional[float]
    violations: list
    slope: Optional[float]
    rate: Optional[float]
    slope_rel_error: Optional[float]
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def reports_to_json(reports: Iterable, indent: int = 2) -> str:
    return json.dumps([_clean(r.to_dict()) for r in reports], indent=indent)


def _mc_report(name, params, analytic, hits: int, n: int) -> BoundReport:
    p = hits / n
    se = math.sqrt(p * (1.0 - p) / n)
    return BoundReport(name, params, float(analytic), p, se, bool(p <= analytic + N_SE * se))


# -- Pinsker-like sandwiches -------------------------------------------------


def pinsker_check(
    model: ExpFamilyModel,
    compact: tuple[float, float],
    n_samples: int,
    rng: np.random.Generator,
    grid_points: int = 10_001,
) -> PinskerReport:
    """Quadratic bounds on K and d, and the Lipschitz bound on the inverse mean map."""
    lo, hi = compact
    if not lo < hi:
        raise ValueError("degenerate compact")
    model.check_theta(np.array([lo, hi]))
    grid = np.linspace(lo, hi, grid_points)
    curv = model.curvature(grid)
    c1, c2 = float(curv.min()), float(curv.max())
    th = rng.uniform(lo, hi, n_samples)
    th2 = rng.uniform(lo, hi, n_samples)
    k = model.kl_theta(th, th2)
    sq = (th - th2) ** 2
    x, v = model.mean_of(th), model.mean_of(th2)
    d = model.kl(x, v)
    dsq = (x - v) ** 2
    slack = 1e-12

    def count(mask) -> int:
        return int(np.count_nonzero(mask))

    up = x < v
    viol = {
        "K_lower": count(c1 / 2 * sq > k * (1 + 1e-9) + slack),
        "K_upper": count(k > c2 / 2 * sq * (1 + 1e-9) + slack),
        "d_lower": count(dsq / (2 * c2) > d * (1 + 1e-9) + slack),
        "d_upper": count(d > dsq / (2 * c1) * (1 + 1e-9) + slack),
        "inverse_lipschitz": count(
            up & ((model.natural_of(v) - model.natural_of(x)) > (v - x) / c1 * (1 + 1e-9) + slack)
        ),
    }
    return PinskerReport(
        "pinsker",
        {"family": model.family.value, "compact": [lo, hi]},
        c1,
        c2,
        int(n_samples),
        viol,
        all(n == 0 for n in viol.values()),
    )


# -- sampling helpers --------------------------------------------------------


def _sample_sums(model: ExpFamilyModel, mu: float, s: int, size: int, rng: np.random.Generator):
    """Exact draws of the sum of s i.i.d. rewards with mean mu."""
    f = model.family
    if f is Family.BERNOULLI:
        return rng.binomial(s, mu, size).astype(float)
    if f is Family.GAUSSIAN:
        return rng.normal(s * mu, math.sqrt(s * model.sigma2), size)
    if f is Family.POISSON:
        return rng.poisson(s * mu, size).astype(float)
    return rng.gamma(s, mu, size)


def chernoff_check(
    model: ExpFamilyModel, s: int, x: float, mu: float, n_runs: int, rng: np.random.Generator
) -> BoundReport:
    """P(mean of s samples > x) <= exp(-s d(x, mu)) for x > mu."""
    if not x > mu:
        raise ValueError("the upper Chernoff bound needs x > mu")
    model.check_mean(mu)
    model.check_mean(x, closed=True)
    bound = math.exp(-s * float(model.kl(x, mu)))
    hits = int(np.count_nonzero(_sample_sums(model, mu, s, n_runs, rng) / s > x))
    return _mc_report("chernoff", {"family": model.family.value, "s": s, "x": x, "mu": mu}, bound, hits, n_runs)


def self_normalized_bound(delta: float, t: int) -> float:
    """(delta log t + 1) e^{1 - delta}."""
    if delta <= 0 or t < 1:
        raise ValueError("need delta > 0 and t >= 1")
    return (delta * math.log(t) + 1.0) * math.exp(1.0 - delta)


def _paths(model: ExpFamilyModel, mu: float, t: int, n_paths: int, rng: np.random.Generator, chunk: int = 8192):
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        yield model.sample(np.full((m, t), mu), rng)


def self_normalized_check(
    model: ExpFamilyModel, mu: float, delta: float, t: int, n_paths: int, rng: np.random.Generator
) -> BoundReport:
    """P(exists s <= t : s d+(mean_s, mu) >= delta), where d+ vanishes above mu."""
    model.check_mean(mu)
    s = np.arange(1, t + 1)
    hits = 0
    for y in _paths(model, mu, t, n_paths, rng):
        means = np.cumsum(y, axis=1) / s
        dplus = np.where(means < mu, model.kl(means, mu), 0.0)
        hits += int(np.count_nonzero(np.any(s * dplus >= delta, axis=1)))
    return _mc_report(
        "self-normalized",
        {"family": model.family.value, "mu": mu, "delta": delta, "t": t},
        self_normalized_bound(delta, t),
        hits,
        n_paths,
    )


def maximal_inequality_bound(model: ExpFamilyModel, mu: float, x: float, N: int) -> float:
    """exp(-N d(mu - x/N, mu))."""
    shifted = mu - x / N
    if not model.in_mean_domain(shifted, closed=True):
        raise DomainError(f"mu - x/N = {shifted} outside the mean domain")
    return math.exp(-N * float(model.kl(shifted, mu)))


def maximal_inequality_check(
    model: ExpFamilyModel, mu: float, x: float, N: int, n_paths: int, rng: np.random.Generator
) -> BoundReport:
    """P(max_{n <= N} sum_{i <= n} (mu - Y_i) >= x)."""
    bound = maximal_inequality_bound(model, mu, x, N)
    hits = 0
    for y in _paths(model, mu, N, n_paths, rng):
        walk = np.cumsum(mu - y, axis=1)
        hits += int(np.count_nonzero(walk.max(axis=1) >= x))
    return _mc_report(
        "maximal", {"family": model.family.value, "mu": mu, "x": x, "N": N}, bound, hits, n_paths
    )


# -- posterior tail envelope -------------------------------------------------


def _log_tail(post: Posterior, v: float) -> float:
    """log P(X >= v), with an arbitrary-precision fallback on underflow."""
    tail = post.tail(v)
    if tail > 1e-280:
        return math.log(tail)
    import mpmath as mpm

    mpm.mp.dps = 50
    prior, model = post.prior, post.model
    if isinstance(prior, BetaPrior):
        a, b = post.hyperparameters()
        # reflect so the integral starts at 0 and nothing cancels
        return float(mpm.log(mpm.betainc(b, a, 0, 1 - mpm.mpf(v), regularized=True)))
    if isinstance(prior, GaussianPrior):
        m, var = post.hyperparameters()
        return float(mpm.log(mpm.ncdf((m - v) / mpm.sqrt(var))))
    raise ValueError("tail underflow for a prior without a high-precision fallback")


def posterior_tail_envelope(
    prior: Prior,
    model: ExpFamilyModel,
    x: float,
    v: float,
    n_range: Sequence[int],
    rate_window: tuple[int, int] = (100, 1000),
    rate_tol: float = 0.02,
) -> EnvelopeReport:
    """Check the posterior tail envelope over ``n_range``.

    For ``x < v`` the residual ``R(n) = -log pi_{n,x}([v, mu+)) - n d(x, v)``
    must stay in ``[-0.5 log n - b_B, log n + b_A]`` with ``b_A, b_B`` fitted at
    the smallest n, and the least-squares slope of ``-log pi`` over
    ``rate_window`` must match ``d(x, v)`` within ``rate_tol``. For ``v <= x``
    the tail must stay above ``C / sqrt(n)`` with C fitted at the smallest n.
    """
    n_arr = np.array(sorted(int(n) for n in n_range))
    if n_arr.size == 0 or n_arr[0] < 1:
        raise ValueError("n_range must contain positive counts")
    model.check_mean(x)
    model.check_mean(v)
    logs = np.array([_log_tail(Posterior.from_stats(model, prior, int(n), x), v) for n in n_arr])
    params = {"family": model.family.value, "prior": type(prior).__name__, "x": x, "v": v,
              "n_min": int(n_arr[0]), "n_max": int(n_arr[-1])}
    if x < v:
        d = float(model.kl(x, v))
        L = -logs
        R = L - n_arr * d
        ln = np.log(n_arr)
        n0 = 0
        b_A = float(R[n0] - ln[n0])
        b_B = float(-R[n0] - 0.5 * ln[n0])
        bad = (R < -0.5 * ln - b_B - 1e-9) | (R > ln + b_A + 1e-9)
        window = (n_arr >= rate_window[0]) & (n_arr <= rate_window[1])
        slope = rel = None
        rate_ok = True
        if np.count_nonzero(window) >= 2:
            slope = float(np.polyfit(n_arr[window], L[window], 1)[0])
            rel = abs(slope - d) / d
            rate_ok = rel <= rate_tol
        return EnvelopeReport(
            "posterior-envelope", params, 1, b_A, b_B, None,
            [int(n) for n in n_arr[bad]], slope, d, rel, bool(not bad.any() and rate_ok),
        )
    tails = np.exp(logs)
    C = float(tails[0] * math.sqrt(n_arr[0]))
    bad = tails * np.sqrt(n_arr) < C * (1 - 1e-12)
    return EnvelopeReport(
        "posterior-envelope", params, 2, None, None, C,
        [int(n) for n in n_arr[bad]], None, None, None, bool(C > 0 and not bad.any()),
    )


# -- named suites ------------------------------------------------------------

MC_RUNS = 100_000


def _families():
    from .exp_family import bernoulli, exponential, gaussian, poisson

    return {"bernoulli": bernoulli(), "gaussian": gaussian(1.0), "poisson": poisson(),
            "exponential": exponential()}


def _suite_constants(rng, n_runs) -> list:
    out = []
    dens, cdf = beta_theta_prior()
    for K in range(2, 21):
        exact = bernoulli_uniform_constant(K)
        num = bayes_risk_constant_homogeneous(dens, cdf, K).value
        rel = abs(num - exact) / exact
        out.append(BoundReport("bayes-risk-constant", {"K": K}, exact, num, 0.0, bool(rel <= 1e-6)))
    return out


def _suite_pinsker(rng, n_runs) -> list:
    fam = _families()
    cases = [("bernoulli", (-2.0, 2.0)), ("gaussian", (-3.0, 3.0)), ("poisson", (0.0, 1.0)),
             ("exponential", (-2.0, -0.5))]
    return [pinsker_check(fam[f], box, n_runs, rng) for f, box in cases]


def _suite_chernoff(rng, n_runs) -> list:
    fam = _families()
    cases = [("bernoulli", 50, 0.6, 0.5), ("bernoulli", 50, 0.7, 0.5), ("gaussian", 20, 0.5, 0.0),
             ("poisson", 20, 2.5, 2.0), ("exponential", 20, 1.5, 1.0)]
    return [chernoff_check(fam[f], s, x, mu, n_runs, rng) for f, s, x, mu in cases]


def _suite_self_normalized(rng, n_runs) -> list:
    fam = _families()
    cases = [("bernoulli", 0.5, 5.0), ("bernoulli", 0.5, 8.0), ("gaussian", 0.0, 5.0),
             ("poisson", 1.0, 6.0), ("exponential", 1.0, 6.0)]
    return [self_normalized_check(fam[f], mu, d, 100, n_runs, rng) for f, mu, d in cases]


def _suite_maximal(rng, n_runs) -> list:
    fam = _families()
    cases = [("bernoulli", 0.5, 20.0, 100), ("gaussian", 0.0, 15.0, 50), ("poisson", 2.0, 10.0, 50),
             ("exponential", 1.0, 10.0, 50)]
    return [maximal_inequality_check(fam[f], mu, x, N, n_runs, rng) for f, mu, x, N in cases]


def _suite_envelope(rng, n_runs) -> list:
    fam = _families()
    n = range(1, 1001)
    return [
        posterior_tail_envelope(BetaPrior(), fam["bernoulli"], 0.3, 0.5, n),
        posterior_tail_envelope(BetaPrior(), fam["bernoulli"], 0.6, 0.5, n),
        posterior_tail_envelope(GaussianPrior(), fam["gaussian"], 0.0, 0.5, n),
        posterior_tail_envelope(GaussianPrior(), fam["gaussian"], 0.6, 0.5, n),
    ]


SUITES = {
    "constants": _suite_constants,
    "pinsker": _suite_pinsker,
    "chernoff": _suite_chernoff,
    "self-normalized": _suite_self_normalized,
    "maximal": _suite_maximal,
    "envelope": _suite_envelope,
}


def run_suite(name: str, seed: int = 0, n_runs: int = MC_RUNS) -> list:
    """Run a named validation suite (or ``"all"``) and return its reports."""
    if name == "all":
        return [r for key in SUITES for r in run_suite(key, seed, n_runs)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)} or 'all'")
    rng = np.random.default_rng([seed, list(SUITES).index(name)])
    return SUITES[name](rng, n_runs)
