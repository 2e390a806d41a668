"""Finite-horizon Gittins indices and the Bayes-optimal two-armed Bernoulli policy.

Both rest on backward induction over Beta posterior states. A state is a
prior ``Beta(alpha, beta)`` shifted by integer success/failure offsets.

The Gittins index ``G(pi, r)`` is the smallest price ``lam`` at which the
calibration game (pay ``lam`` per pull, stop whenever, at most ``r`` pulls) has
zero value. ``build_gittins_table`` computes it for every reachable
``(successes, failures, remaining)`` triple by bisection on ``lam``, with all
starting states sharing a remaining time vectorized together.
"""
from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate, stats

log = logging.getLogger(__name__)

__all__ = [
    "BetaState",
    "BetaGittinsTable",
    "TwoArmedSolution",
    "calibration_value",
    "fh_gittins_index",
    "build_gittins_table",
    "load_or_build_table",
    "bayes_optimal_two_armed",
    "bayes_optimal_values",
    "two_armed_policy_value",
    "expected_max_mean",
]

BISECTION_WIDTH = 1e-7
MAX_TABLE_HORIZON = 2000
MAX_DP_HORIZON = 100
TIE_TOL = 1e-12


@dataclass(frozen=True)
class BetaState:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("Beta state parameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def success(self) -> "BetaState":
        return BetaState(self.alpha + 1, self.beta)

    def failure(self) -> "BetaState":
        return BetaState(self.alpha, self.beta + 1)


def _calibration(alpha: np.ndarray, beta: np.ndarray, lam: np.ndarray, r: int) -> np.ndarray:
    """Calibration values V_lam(Beta(alpha, beta), r) for arrays of starts."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if r == 0:
        return np.zeros(np.broadcast(alpha, beta, lam).shape)
    a = alpha[..., None]
    ab = (alpha + beta)[..., None]
    lm = lam[..., None]
    # value at depth r (no pulls left) is 0 for every node
    v = np.zeros(np.broadcast(alpha, beta, lam).shape + (r + 1,))
    for j in range(r - 1, -1, -1):
        i = np.arange(j + 1)
        p = (a + i) / (ab + j)
        cont = p * (1.0 - lm + v[..., 1 : j + 2]) + (1.0 - p) * (v[..., 0 : j + 1] - lm)
        v = np.maximum(cont, 0.0)
    return v[..., 0]


def calibration_value(state: BetaState, r: int, lam: float) -> float:
    """Optimal value of paying ``lam`` per pull for at most ``r`` pulls."""
    if r < 0:
        raise ValueError("remaining time must be nonnegative")
    return float(_calibration(np.array(state.alpha), np.array(state.beta), np.array(lam), r))


def _gittins_bisect(alpha: np.ndarray, beta: np.ndarray, r: int, width: float = BISECTION_WIDTH):
    mean = alpha / (alpha + beta)
    if r == 1:
        return mean.copy()
    lo = mean.copy()
    hi = np.ones_like(mean)
    while np.max(hi - lo) > width:
        mid = 0.5 * (lo + hi)
        positive = _calibration(alpha, beta, mid, r) > 0
        lo = np.where(positive, mid, lo)
        hi = np.where(positive, hi, mid)
    return 0.5 * (lo + hi)


def fh_gittins_index(state: BetaState, r: int) -> float:
    """G(pi, r) for a Beta posterior; exactly the posterior mean when r = 1."""
    if r < 1:
        raise ValueError("remaining time must be at least 1")
    return float(_gittins_bisect(np.array([state.alpha]), np.array([state.beta]), r)[0])


@dataclass(frozen=True, eq=False)
class BetaGittinsTable:
    """Indices ``values[s, f, r]`` for the prior shifted by s successes and f
    failures with r rounds to go; defined where s + f + r <= horizon, r >= 1,
    NaN elsewhere."""

    prior: BetaState
    horizon: int
    values: np.ndarray

    def index(self, successes: int, failures: int, r: int) -> float:
        if r < 1 or successes + failures + r > self.horizon:
            raise KeyError((successes, failures, r))
        return float(self.values[successes, failures, r])

    def lookup(self, successes: np.ndarray, failures: np.ndarray, r) -> np.ndarray:
        return self.values[successes, failures, r]

    def entries(self):
        """(alpha_offset, beta_offset, r, G) rows in canonical order."""
        T = self.horizon
        for s in range(T + 1):
            for f in range(T + 1 - s):
                for r in range(1, T + 1 - s - f):
                    yield s, f, r, float(self.values[s, f, r])

    def __len__(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.values)))

    def save(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# alpha={self.prior.alpha!r},beta={self.prior.beta!r},horizon={self.horizon}\n")
            w = csv.writer(fh)
            w.writerow(["alpha_offset", "beta_offset", "r", "G"])
            for s, f, r, g in self.entries():
                w.writerow([s, f, r, repr(g)])

    @classmethod
    def load(cls, path) -> "BetaGittinsTable":
        path = Path(path)
        with path.open() as fh:
            header = fh.readline()
            if not header.startswith("#"):
                raise ValueError(f"{path}: missing Gittins table header")
            meta = dict(kv.split("=") for kv in header[1:].strip().split(","))
            prior = BetaState(float(meta["alpha"]), float(meta["beta"]))
            T = int(meta["horizon"])
            values = np.full((T + 1, T + 1, T + 1), np.nan)
            reader = csv.DictReader(fh)
            for row in reader:
                values[int(row["alpha_offset"]), int(row["beta_offset"]), int(row["r"])] = float(row["G"])
        return cls(prior, T, values)


def build_gittins_table(prior: BetaState, horizon: int) -> BetaGittinsTable:
    """Gittins indices for every state reachable within ``horizon`` rounds."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if horizon > MAX_TABLE_HORIZON:
        raise ValueError(f"horizon {horizon} exceeds the table limit {MAX_TABLE_HORIZON}")
    T = horizon
    values = np.full((T + 1, T + 1, T + 1), np.nan)
    for r in range(1, T + 1):
        n_max = T - r
        s, f = np.nonzero(np.add.outer(np.arange(n_max + 1), np.arange(n_max + 1)) <= n_max)
        g = _gittins_bisect(prior.alpha + s, prior.beta + f, r)
        values[s, f, r] = g
    return BetaGittinsTable(prior, T, values)


_TABLES: dict[tuple[float, float, int], BetaGittinsTable] = {}


def load_or_build_table(prior: BetaState, horizon: int, cache_dir=None) -> BetaGittinsTable:
    """Memoized table construction, optionally backed by a CSV cache directory."""
    key = (float(prior.alpha), float(prior.beta), int(horizon))
    if key in _TABLES:
        return _TABLES[key]
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"gittins_a{key[0]!r}_b{key[1]!r}_T{key[2]}.csv"
        if path.exists():
            table = BetaGittinsTable.load(path)
            _TABLES[key] = table
            return table
    log.info("building Gittins table for Beta(%s, %s), horizon %d", *key)
    table = build_gittins_table(prior, horizon)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.save(path)
    _TABLES[key] = table
    return table


# -- Bayes-optimal two-armed Bernoulli bandit --------------------------------


@dataclass(frozen=True, eq=False)
class TwoArmedSolution:
    """Exact solution of the two-armed Bernoulli bandit with Beta priors.

    ``actions[m][s1, f1, s2]`` is the optimal arm (0 or 1) after ``m`` pulls,
    with ``f2 = m - s1 - f1 - s2``; ``ties`` flags states where both arms are
    optimal (arm 0 is then chosen).
    """

    horizon: int
    prior: BetaState
    value: float
    actions: list
    ties: list

    def action(self, s1: int, f1: int, s2: int, f2: int) -> int:
        m = s1 + f1 + s2 + f2
        if min(s1, f1, s2, f2) < 0 or m >= self.horizon:
            raise KeyError((s1, f1, s2, f2))
        return int(self.actions[m][s1, f1, s2])

    def __getitem__(self, state) -> int:
        return self.action(*state)

    def is_tie(self, s1: int, f1: int, s2: int, f2: int) -> bool:
        return bool(self.ties[m := s1 + f1 + s2 + f2][s1, f1, s2]) if m < self.horizon else False

    @property
    def bayes_risk(self) -> float:
        return self.horizon * expected_max_mean(self.prior, 2) - self.value


def _two_armed_dp(horizon: int, prior: BetaState, keep_policy: bool):
    T = horizon
    a, b = prior.alpha, prior.beta
    w_next = np.zeros((T + 1, T + 1, T + 1))
    actions: list = [None] * T
    ties: list = [None] * T
    for m in range(T - 1, -1, -1):
        n = m + 1
        s1, f1, s2 = np.ogrid[0:n, 0:n, 0:n]
        f2 = m - s1 - f1 - s2
        valid = f2 >= 0
        with np.errstate(divide="ignore", invalid="ignore"):
            p1 = (a + s1) / (a + b + s1 + f1)
            p2 = np.where(valid, (a + s2) / (a + b + s2 + np.maximum(f2, 0)), 0.0)
        q1 = p1 * (1.0 + w_next[1 : n + 1, 0:n, 0:n]) + (1.0 - p1) * w_next[0:n, 1 : n + 1, 0:n]
        q2 = p2 * (1.0 + w_next[0:n, 0:n, 1 : n + 1]) + (1.0 - p2) * w_next[0:n, 0:n, 0:n]
        w = np.where(valid, np.maximum(q1, q2), 0.0)
        if keep_policy:
            tie = valid & (np.abs(q1 - q2) <= TIE_TOL * np.maximum(1.0, np.abs(q1)))
            actions[m] = np.where(valid & ~tie & (q2 > q1), 1, 0).astype(np.int8)
            ties[m] = tie
        # layer m-1 only reads indices < n
        w_next[:n, :n, :n] = w
    return float(w_next[0, 0, 0]), actions, ties


def bayes_optimal_two_armed(horizon: int, prior: BetaState = BetaState()) -> TwoArmedSolution:
    """Maximal expected total reward and the optimal action map."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if horizon > MAX_DP_HORIZON:
        raise ValueError(f"horizon {horizon} exceeds the exact DP limit {MAX_DP_HORIZON}")
    value, actions, ties = _two_armed_dp(horizon, prior, keep_policy=True)
    return TwoArmedSolution(horizon, prior, value, actions, ties)


def bayes_optimal_values(max_horizon: int, prior: BetaState = BetaState()) -> np.ndarray:
    """Optimal expected reward for every horizon 1..max_horizon (index T-1)."""
    if max_horizon > MAX_DP_HORIZON:
        raise ValueError(f"horizon {max_horizon} exceeds the exact DP limit {MAX_DP_HORIZON}")
    return np.array([_two_armed_dp(T, prior, keep_policy=False)[0] for T in range(1, max_horizon + 1)])


@functools.lru_cache(maxsize=None)
def _expected_max_mean(alpha: float, beta: float, k: int) -> float:
    if alpha == 1.0 and beta == 1.0:
        return k / (k + 1.0)
    dist = stats.beta(alpha, beta)
    val, _ = integrate.quad(lambda x: 1.0 - dist.cdf(x) ** k, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    return val


def expected_max_mean(prior: BetaState, k: int) -> float:
    """E[max of k independent means drawn from the Beta prior]."""
    return _expected_max_mean(float(prior.alpha), float(prior.beta), int(k))


def two_armed_policy_value(
    horizon: int,
    choose: Callable[[tuple[int, int, int, int], int], Optional[int]],
    prior: BetaState = BetaState(),
) -> float:
    """Exact Bayesian expected reward of a deterministic two-armed policy.

    ``choose(state, t)`` returns 0, 1, or None for a uniform random tie.
    Intended for small horizons (memoized recursion over all states).
    """
    a, b = prior.alpha, prior.beta

    @functools.lru_cache(maxsize=None)
    def value(s1: int, f1: int, s2: int, f2: int) -> float:
        t = s1 + f1 + s2 + f2
        if t == horizon:
            return 0.0
        arm = choose((s1, f1, s2, f2), t)
        arms = (0, 1) if arm is None else (arm,)
        total = 0.0
        for k in arms:
            if k == 0:
                p = (a + s1) / (a + b + s1 + f1)
                total += p * (1.0 + value(s1 + 1, f1, s2, f2)) + (1 - p) * value(s1, f1 + 1, s2, f2)
            else:
                p = (a + s2) / (a + b + s2 + f2)
                total += p * (1.0 + value(s1, f1, s2 + 1, f2)) + (1 - p) * value(s1, f1, s2, f2 + 1)
        return total / len(arms)

    return value(0, 0, 0, 0)


def gittins_chooser(table: BetaGittinsTable) -> Callable:
    """Two-armed FH-Gittins decision rule for :func:`two_armed_policy_value`."""

    def choose(state, t):
        s1, f1, s2, f2 = state
        r = table.horizon - t
        g1, g2 = table.index(s1, f1, r), table.index(s2, f2, r)
        if g1 == g2:
            return None
        return 0 if g1 > g2 else 1

    return choose
