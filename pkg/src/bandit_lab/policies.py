"""Arm-selection strategies.

Every strategy is a :class:`Policy` holding per-arm pull counts and reward sums
for a batch of independent games played in lockstep (``batch=1`` for a single
game). ``select`` returns one arm per game, ``update`` ingests the rewards.

Index policies share the same skeleton: each arm is pulled once, then the arm
with the largest index is chosen, ties broken uniformly at random.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import gittins
from .exp_family import (
    DomainError,
    ExpFamilyModel,
    Family,
    _level_set,
    d_tilde_level_set_sup,
)
from .posterior import (
    BetaPrior,
    GridDensity,
    Posterior,
    Prior,
    check_compatible,
    default_prior,
    grid_upper_quantile,
    upper_quantile,
)

__all__ = [
    "PolicyKind",
    "PolicyConfig",
    "ArmStatistics",
    "Policy",
    "PolicyState",
    "exploration_rate",
    "kl_ucb_family_index",
    "bayes_ucb_index",
    "moss_index",
    "select_arm",
    "update",
    "make_policy",
]


class PolicyKind(str, enum.Enum):
    KL_UCB = "kl-ucb"
    KL_UCB_PLUS = "kl-ucb-plus"
    KL_UCB_H_PLUS = "kl-ucb-h-plus"
    BAYES_UCB = "bayes-ucb"
    THOMPSON_SAMPLING = "thompson-sampling"
    MOSS = "moss"
    LAI_INDEX = "lai-index"
    FH_GITTINS_APPROX = "fh-gittins-approx"
    FH_GITTINS_EXACT = "fh-gittins-exact"
    BAYES_OPTIMAL_TWO_ARMED = "bayes-optimal-two-armed"
    UNIFORM_RANDOM = "uniform-random"


NEEDS_HORIZON = frozenset(
    {
        PolicyKind.KL_UCB_H_PLUS,
        PolicyKind.MOSS,
        PolicyKind.LAI_INDEX,
        PolicyKind.FH_GITTINS_APPROX,
        PolicyKind.FH_GITTINS_EXACT,
        PolicyKind.BAYES_OPTIMAL_TWO_ARMED,
    }
)
BAYESIAN = frozenset(
    {
        PolicyKind.BAYES_UCB,
        PolicyKind.THOMPSON_SAMPLING,
        PolicyKind.FH_GITTINS_EXACT,
        PolicyKind.BAYES_OPTIMAL_TWO_ARMED,
    }
)
# indices that do not move with the round counter; cached per arm
ROUND_FREE = frozenset({PolicyKind.KL_UCB_H_PLUS, PolicyKind.LAI_INDEX, PolicyKind.MOSS})
# play from the prior without the initial sweep over arms
NO_SWEEP = frozenset({PolicyKind.FH_GITTINS_EXACT, PolicyKind.BAYES_OPTIMAL_TWO_ARMED})


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    c: float = 0.0
    horizon: Optional[int] = None
    clamp: Optional[tuple[float, float]] = None
    prior: Optional[Prior] = None
    label: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        if self.c < 0:
            raise ValueError("exploration exponent c must be nonnegative")
        if self.kind in NEEDS_HORIZON and self.horizon is None:
            raise ValueError(f"{self.kind.value} requires a horizon")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be positive")
        if self.clamp is not None:
            lo, hi = self.clamp
            if not lo < hi:
                raise ValueError(f"invalid clamp interval {self.clamp}")
            object.__setattr__(self, "clamp", (float(lo), float(hi)))

    @property
    def name(self) -> str:
        return self.label or self.kind.value


@dataclass(frozen=True)
class ArmStatistics:
    pulls: int
    reward_sum: float

    @property
    def empirical_mean(self) -> float:
        return self.reward_sum / self.pulls if self.pulls else 0.0


def _log_t_logc(t, c: float):
    """log(t log^c t); the log log term only enters for t >= 3."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        lt = np.log(t)
        extra = np.where(t >= 3, c * np.log(np.maximum(lt, 1e-300)), 0.0) if c else 0.0
    return lt + extra


def exploration_rate(
    kind,
    t,
    n_pulls=1,
    T: Optional[int] = None,
    c: float = 0.0,
    n_arms: Optional[int] = None,
):
    """Right-hand side of the divergence constraint of an index, floored at 0."""
    kind = PolicyKind(kind)
    n = np.asarray(n_pulls, dtype=float)
    if kind in NEEDS_HORIZON and T is None:
        raise ValueError(f"{kind.value} requires a horizon")
    with np.errstate(divide="ignore"):
        if kind in (PolicyKind.KL_UCB, PolicyKind.BAYES_UCB):
            rate = _log_t_logc(t, c) + 0.0 * n
        elif kind is PolicyKind.KL_UCB_PLUS:
            rate = _log_t_logc(t, c) - np.log(n)
        elif kind is PolicyKind.KL_UCB_H_PLUS:
            rate = _log_t_logc(T, c) - np.log(n)
        elif kind is PolicyKind.LAI_INDEX:
            rate = math.log(T) - np.log(n)
        elif kind is PolicyKind.FH_GITTINS_APPROX:
            remaining = T - min(float(t), T - 1.0)
            rate = math.log(remaining) - np.log(n)
        elif kind is PolicyKind.MOSS:
            if n_arms is None:
                raise ValueError("moss requires the number of arms")
            rate = math.log(T / n_arms) - np.log(n)
        else:
            raise ValueError(f"{kind.value} has no exploration rate")
    rate = np.maximum(rate, 0.0)
    return float(rate) if rate.ndim == 0 else rate


def kl_ucb_family_index(stats: ArmStatistics, level: float, model: ExpFamilyModel) -> float:
    """sup{q : N d(mu_hat, q) <= level}."""
    if stats.pulls < 1:
        raise ValueError("index needs at least one pull")
    return float(_level_set(model, stats.empirical_mean, level / stats.pulls, model.mu_max))


def _quantile_tail_prob(t, c: float):
    """1 - (quantile level), i.e. 1/(t log^c t), capped at 1/2."""
    rate = np.maximum(_log_t_logc(t, c), 0.0)
    return np.minimum(np.exp(-rate), 0.5)


def bayes_ucb_index(posterior: Posterior, t, c: float = 0.0, clamp=None) -> float:
    """Posterior quantile of order 1 - 1/(t log^c t) (at least the median).

    With ``clamp=(lo, hi)`` the posterior is rebuilt from the empirical mean
    projected onto [lo, hi].
    """
    p = posterior
    if clamp is not None and p.n > 0:
        xbar = min(max(p.xbar, clamp[0]), clamp[1])
        p = Posterior.from_stats(p.model, p.prior, p.n, xbar)
    return float(p.upper_quantile(_quantile_tail_prob(t, c)))


def moss_index(stats: ArmStatistics, T: int, K: int) -> float:
    bonus = exploration_rate(PolicyKind.MOSS, 0, stats.pulls, T=T, n_arms=K)
    return stats.empirical_mean + math.sqrt(bonus / stats.pulls)


def _argmax_random_ties(values: np.ndarray, keys: np.ndarray) -> np.ndarray:
    best = values.max(axis=1, keepdims=True)
    return np.argmax(np.where(values >= best, keys, -1.0), axis=1)


class Policy:
    """Mutable state of one strategy over ``batch`` parallel games."""

    def __init__(
        self,
        config: PolicyConfig,
        model: ExpFamilyModel,
        n_arms: int,
        batch: int = 1,
        *,
        gittins_table: Optional[gittins.BetaGittinsTable] = None,
        dp_solution: Optional[gittins.TwoArmedSolution] = None,
        gittins_cache_dir=None,
    ) -> None:
        if n_arms < 1:
            raise ValueError("need at least one arm")
        self.config = config
        self.model = model
        self.n_arms = int(n_arms)
        self.batch = int(batch)
        kind = config.kind
        if config.clamp is not None:
            model.check_mean(np.asarray(config.clamp), what="clamp")
        self.prior: Optional[Prior] = None
        if kind in BAYESIAN:
            self.prior = config.prior if config.prior is not None else default_prior(model)
            check_compatible(self.prior, model)
        self.table = None
        self.solution = None
        if kind in (PolicyKind.FH_GITTINS_EXACT, PolicyKind.BAYES_OPTIMAL_TWO_ARMED):
            if model.family is not Family.BERNOULLI or not isinstance(self.prior, BetaPrior):
                raise ValueError(f"{kind.value} is only available for Bernoulli arms with a Beta prior")
        if kind is PolicyKind.FH_GITTINS_EXACT:
            state = gittins.BetaState(self.prior.alpha, self.prior.beta)
            if gittins_table is None:
                gittins_table = gittins.load_or_build_table(state, config.horizon, gittins_cache_dir)
            if gittins_table.horizon != config.horizon or gittins_table.prior != state:
                raise ValueError("Gittins table does not match the policy prior/horizon")
            self.table = gittins_table
        if kind is PolicyKind.BAYES_OPTIMAL_TWO_ARMED:
            if self.n_arms != 2 or self.prior != BetaPrior(1.0, 1.0):
                raise ValueError("bayes-optimal-two-armed needs K=2 and uniform priors")
            if dp_solution is None:
                dp_solution = gittins.bayes_optimal_two_armed(config.horizon)
            if dp_solution.horizon != config.horizon:
                raise ValueError("DP solution horizon does not match the policy horizon")
            self.solution = dp_solution
        self.reset()

    def reset(self) -> None:
        self.pulls = np.zeros((self.batch, self.n_arms), dtype=np.int64)
        self.sums = np.zeros((self.batch, self.n_arms))
        self.round = 0
        self._cached: Optional[np.ndarray] = None

    # -- views -------------------------------------------------------------
    @property
    def kind(self) -> PolicyKind:
        return self.config.kind

    @property
    def sweep(self) -> bool:
        return self.kind not in NO_SWEEP

    @property
    def empirical_means(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.pulls > 0, self.sums / np.maximum(self.pulls, 1), 0.0)

    def arm_statistics(self, game: int = 0) -> list[ArmStatistics]:
        return [
            ArmStatistics(int(n), float(s)) for n, s in zip(self.pulls[game], self.sums[game])
        ]

    def posterior(self, arm: int, game: int = 0) -> Posterior:
        if self.prior is None:
            raise TypeError(f"{self.kind.value} keeps no posterior")
        return Posterior(self.model, self.prior, int(self.pulls[game, arm]), float(self.sums[game, arm]))

    # -- indices -----------------------------------------------------------
    def _index(self, x: np.ndarray, n: np.ndarray, sums: np.ndarray, t: int) -> np.ndarray:
        cfg, model, kind = self.config, self.model, self.kind
        T = cfg.horizon
        if kind is PolicyKind.BAYES_UCB:
            p = _quantile_tail_prob(t, cfg.c)
            total = sums
            if cfg.clamp is not None:
                total = n * np.clip(x, *cfg.clamp)
            if isinstance(self.prior, GridDensity):
                return grid_upper_quantile(self.prior, model, n, total, p)
            return upper_quantile(self.prior, model, n, total, p)
        if kind is PolicyKind.FH_GITTINS_EXACT:
            s = np.rint(sums).astype(np.int64)
            return self.table.lookup(s, n - s, T - t)
        if kind is PolicyKind.MOSS:
            rate = exploration_rate(kind, t, n, T=T, n_arms=self.n_arms)
            return x + np.sqrt(rate / n)
        rate = exploration_rate(kind, t, n, T=T, c=cfg.c)
        level = rate / n
        if kind is PolicyKind.LAI_INDEX and cfg.clamp is not None:
            lo, hi = cfg.clamp
            return _level_set(model, np.clip(x, lo, hi), level, hi)
        if kind is PolicyKind.FH_GITTINS_APPROX and cfg.clamp is not None:
            lo, hi = cfg.clamp
            return d_tilde_level_set_sup(model, x, level, lo, hi)
        return _level_set(model, x, level, model.mu_max)

    def indices(self) -> np.ndarray:
        """Current index of every arm, shape (batch, n_arms)."""
        if self.kind in (
            PolicyKind.THOMPSON_SAMPLING,
            PolicyKind.UNIFORM_RANDOM,
            PolicyKind.BAYES_OPTIMAL_TWO_ARMED,
        ):
            raise TypeError(f"{self.kind.value} is not an index policy")
        if self.sweep and np.any(self.pulls == 0):
            raise ValueError("indices are defined once every arm has been pulled")
        if self.kind in ROUND_FREE:
            if self._cached is None:
                self._cached = self._index(self.empirical_means, self.pulls, self.sums, self.round)
            return self._cached
        return self._index(self.empirical_means, self.pulls, self.sums, self.round)

    # -- decisions ---------------------------------------------------------
    def select(self, rng: Optional[np.random.Generator] = None, *, tie_keys=None, uniforms=None) -> np.ndarray:
        """Arm to play in every game.

        ``tie_keys`` (batch, n_arms) uniforms break ties; Thompson Sampling
        additionally consumes ``uniforms`` (batch, n_arms) for posterior
        draws. Missing arrays are drawn from ``rng``.
        """
        B, K = self.batch, self.n_arms
        T = self.config.horizon
        if T is not None and self.kind in NEEDS_HORIZON and self.round >= T:
            raise ValueError(f"round {self.round} is past the horizon {T}")
        if not np.all(self.pulls.sum(axis=1) == self.round):
            raise RuntimeError("inconsistent policy state: pulls do not sum to the round")
        if self.sweep and self.round < K:
            return np.full(B, self.round, dtype=np.int64)
        if tie_keys is None:
            if rng is None:
                raise ValueError("need an rng or tie_keys")
            tie_keys = rng.random((B, K))
        kind = self.kind
        if kind is PolicyKind.UNIFORM_RANDOM:
            return np.argmax(tie_keys, axis=1)
        if kind is PolicyKind.BAYES_OPTIMAL_TWO_ARMED:
            s = np.rint(self.sums).astype(np.int64)
            f = self.pulls - s
            return self.solution.actions[self.round][s[:, 0], f[:, 0], s[:, 1]].astype(np.int64)
        if kind is PolicyKind.THOMPSON_SAMPLING:
            if uniforms is None:
                if rng is None:
                    raise ValueError("need an rng or uniforms")
                uniforms = rng.random((B, K))
            if isinstance(self.prior, GridDensity):
                draws = grid_upper_quantile(self.prior, self.model, self.pulls, self.sums, uniforms)
            else:
                draws = upper_quantile(self.prior, self.model, self.pulls, self.sums, uniforms)
            return _argmax_random_ties(draws, tie_keys)
        return _argmax_random_ties(self.indices(), tie_keys)

    def update(self, arms, rewards) -> None:
        arms = np.asarray(arms, dtype=np.int64).reshape(self.batch)
        rewards = np.asarray(rewards, dtype=float).reshape(self.batch)
        if not self.model.in_support(rewards):
            raise DomainError(f"reward outside the {self.model.family.value} support")
        rows = np.arange(self.batch)
        self.pulls[rows, arms] += 1
        self.sums[rows, arms] += rewards
        self.round += 1
        if self._cached is not None:
            n = self.pulls[rows, arms]
            s = self.sums[rows, arms]
            self._cached[rows, arms] = self._index(s / n, n, s, self.round)


PolicyState = Policy


def make_policy(config: PolicyConfig, model: ExpFamilyModel, n_arms: int, batch: int = 1, **kw) -> Policy:
    return Policy(config, model, n_arms, batch, **kw)


def select_arm(state: Policy, rng: np.random.Generator) -> int:
    """Arm chosen by a single-game policy."""
    if state.batch != 1:
        raise ValueError("select_arm drives single-game policies; use Policy.select")
    return int(state.select(rng)[0])


def update(state: Policy, arm: int, reward: float) -> Policy:
    state.update([arm], [reward])
    return state
