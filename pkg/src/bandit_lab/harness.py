"""Monte Carlo experiments: regret curves, Bayes-risk curves and their emission.

Replications run in lockstep batches. A batch pre-draws, per replication,

* the arm means (Bayes-risk mode; stream ``MEANS_STREAM``),
* a reward table ``rewards[a, s]`` giving the s-th reward of arm a
  (stream ``REWARDS_STREAM``, shared by all policies),
* tie-breaking keys and Thompson uniforms (one private stream per policy),

so a replication's trajectory depends only on ``(seed, replication, policy)``.
The batch size is derived from the problem size alone, never from the worker
count, and results are reduced in replication order: output is bit-identical
for any number of workers.
"""
from __future__ import annotations

import enum
import functools
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import gittins, rng as rngmod
from .bounds import (
    bayes_risk_constant_homogeneous,
    bernoulli_uniform_constant,
    beta_theta_prior,
    lai_robbins_curve,
)
from .exp_family import BanditInstance, ExpFamilyModel, Family
from .policies import BAYESIAN, Policy, PolicyConfig, PolicyKind
from .posterior import (
    BetaPrior,
    GammaPrior,
    GaussianPrior,
    GridDensity,
    InverseGammaPrior,
    Prior,
    check_compatible,
)

__all__ = [
    "Mode",
    "PointPrior",
    "ArmPrior",
    "ExperimentConfig",
    "PolicyCurve",
    "Overlay",
    "RunResult",
    "Trajectory",
    "ConfigError",
    "default_checkpoints",
    "run_episode",
    "run_experiment",
    "monte_carlo_regret",
    "bayes_risk_estimate",
    "emit",
    "to_csv",
    "fit_log_squared",
    "prior_to_dict",
    "prior_from_dict",
    "policy_to_dict",
]

MEMORY_BUDGET = 256 * 2**20
MAX_BATCH = 4096
N_CHECKPOINTS = 64
CSV_HEADER = "t,policy,mean_regret,stderr,n_reps,seed"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class Mode(str, enum.Enum):
    FIXED_INSTANCE = "fixed-instance"
    BAYES_RISK = "bayes-risk"


@dataclass(frozen=True)
class PointPrior:
    """Point mass: every replication uses the same arm mean."""

    value: float


ArmPrior = Union[BetaPrior, GaussianPrior, GammaPrior, InverseGammaPrior, PointPrior]


# -- prior (de)serialization -------------------------------------------------

_PRIOR_TYPES = {
    "beta": (BetaPrior, ("alpha", "beta")),
    "gaussian": (GaussianPrior, ("mean", "variance")),
    "gamma": (GammaPrior, ("shape", "rate")),
    "inverse-gamma": (InverseGammaPrior, ("shape", "scale")),
    "point": (PointPrior, ("value",)),
}


def prior_to_dict(prior) -> dict:
    if isinstance(prior, GridDensity):
        return {"type": "grid", "points": int(prior.grid.size)}
    for name, (cls, keys) in _PRIOR_TYPES.items():
        if type(prior) is cls:
            out = {"type": name}
            for k in keys:
                v = float(getattr(prior, k))
                out[k] = v if math.isfinite(v) else "inf"
            return out
    raise TypeError(f"cannot serialize prior {prior!r}")


def prior_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _PRIOR_TYPES:
        raise ConfigError(f"unknown prior type {kind!r}; expected one of {sorted(_PRIOR_TYPES)}")
    cls, keys = _PRIOR_TYPES[kind]
    unknown = set(d) - set(keys)
    if unknown:
        raise ConfigError(f"unknown keys for {kind} prior: {sorted(unknown)}")
    try:
        return cls(**{k: float(v) for k, v in d.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {kind} prior: {exc}") from exc


def policy_to_dict(p: PolicyConfig) -> dict:
    out: dict = {"kind": p.kind.value, "c": float(p.c)}
    if p.horizon is not None:
        out["horizon"] = int(p.horizon)
    if p.clamp is not None:
        out["clamp"] = [float(p.clamp[0]), float(p.clamp[1])]
    if p.prior is not None:
        out["prior"] = prior_to_dict(p.prior)
    if p.label is not None:
        out["label"] = p.label
    return out


# -- configuration -----------------------------------------------------------


def default_checkpoints(T: int, n: int = N_CHECKPOINTS) -> tuple[int, ...]:
    """Geometric grid of ``n`` points on [1, T] (rounded, deduplicated) plus T."""
    pts = np.unique(np.rint(np.geomspace(1, T, n)).astype(np.int64))
    return tuple(int(t) for t in np.union1d(pts, [T]))


def _draw_means(prior: ArmPrior, g: np.random.Generator) -> float:
    if isinstance(prior, PointPrior):
        return prior.value
    if isinstance(prior, BetaPrior):
        return float(g.beta(prior.alpha, prior.beta))
    if isinstance(prior, GaussianPrior):
        return float(g.normal(prior.mean, math.sqrt(prior.variance)))
    if isinstance(prior, GammaPrior):
        return float(g.gamma(prior.shape, 1.0 / prior.rate))
    return float(prior.scale / g.gamma(prior.shape, 1.0))


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a family, arms (fixed or drawn), policies and a budget.

    ``workers``, ``output`` and ``gittins_cache_dir`` only affect execution and
    are not echoed into results.
    """

    model: ExpFamilyModel
    policies: tuple[PolicyConfig, ...]
    horizon: int
    replications: int
    seed: int = 0
    mode: Mode = Mode.FIXED_INSTANCE
    means: Optional[tuple[float, ...]] = None
    arm_priors: Optional[tuple[ArmPrior, ...]] = None
    checkpoints: Optional[tuple[int, ...]] = None
    regret: str = "pseudo"
    overlays: bool = True
    output: Optional[str] = None
    format: str = "csv"
    workers: int = 1
    gittins_cache_dir: Optional[str] = None

    def __post_init__(self) -> None:
        set_ = functools.partial(object.__setattr__, self)
        try:
            set_("mode", Mode(self.mode))
        except ValueError:
            raise ConfigError(f"unknown mode {self.mode!r}") from None
        T, N = int(self.horizon), int(self.replications)
        set_("horizon", T)
        set_("replications", N)
        if N < 1:
            raise ConfigError("replications must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit nonnegative integer")
        set_("seed", int(self.seed))
        if self.mode is Mode.FIXED_INSTANCE:
            if not self.means:
                raise ConfigError("fixed-instance mode needs arm means")
            try:
                BanditInstance(self.model, tuple(self.means))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            set_("means", tuple(float(m) for m in self.means))
            if self.arm_priors is not None:
                raise ConfigError("arm priors are only used in bayes-risk mode")
        else:
            if not self.arm_priors:
                raise ConfigError("bayes-risk mode needs per-arm priors")
            if self.means is not None:
                raise ConfigError("fixed arm means are only used in fixed-instance mode")
            set_("arm_priors", tuple(self.arm_priors))
            for p in self.arm_priors:
                if isinstance(p, PointPrior):
                    try:
                        self.model.check_mean(p.value, what="point prior")
                    except ValueError as exc:
                        raise ConfigError(str(exc)) from exc
                elif isinstance(p, GaussianPrior) and p.flat:
                    raise ConfigError("cannot draw arm means from a flat prior")
                else:
                    try:
                        check_compatible(p, self.model)
                    except ValueError as exc:
                        raise ConfigError(str(exc)) from exc
        K = self.n_arms
        if T < K:
            raise ConfigError(f"horizon {T} is shorter than the number of arms {K}")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ConfigError(f"policy names must be unique, got {names}")
        reserved = {"lower_bound", "lower_bound_alt", "bayes_optimal"}
        if reserved & set(names):
            raise ConfigError(f"policy names {sorted(reserved)} are reserved for overlays")
        for p in self.policies:
            if p.horizon is not None and p.horizon != T:
                raise ConfigError(f"policy {p.name} horizon {p.horizon} differs from the experiment horizon {T}")
        if self.checkpoints is None:
            set_("checkpoints", default_checkpoints(T))
        else:
            cps = tuple(int(t) for t in self.checkpoints)
            if list(cps) != sorted(set(cps)):
                raise ConfigError("checkpoints must be strictly increasing")
            if cps and (cps[0] < 1 or cps[-1] > T):
                raise ConfigError(f"checkpoints must lie in [1, {T}]")
            set_("checkpoints", cps)
        if self.regret not in ("pseudo", "realized"):
            raise ConfigError("regret must be 'pseudo' or 'realized'")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be 'csv' or 'json'")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def n_arms(self) -> int:
        return len(self.means) if self.mode is Mode.FIXED_INSTANCE else len(self.arm_priors)

    @property
    def instance(self) -> BanditInstance:
        if self.mode is not Mode.FIXED_INSTANCE:
            raise ValueError("bayes-risk experiments have no fixed instance")
        return BanditInstance(self.model, self.means)

    def to_dict(self) -> dict:
        """Echo in the configuration-file vocabulary."""
        out: dict = {
            "mode": self.mode.value,
            "family": self.model.family.value,
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "checkpoints": list(self.checkpoints),
            "regret": self.regret,
            "overlays": self.overlays,
        }
        if self.model.family is Family.GAUSSIAN:
            out["sigma2"] = float(self.model.sigma2)
        if self.mode is Mode.FIXED_INSTANCE:
            out["arms"] = list(self.means)
        else:
            out["arm_priors"] = [prior_to_dict(p) for p in self.arm_priors]
        out["policy"] = [policy_to_dict(p) for p in self.policies]
        return out


# -- results -----------------------------------------------------------------


@dataclass
class PolicyCurve:
    name: str
    mean_regret: list[float]
    stderr: list[float]
    mean_pulls: list[float]
    total_pulls: list[int]
    exploration_c: float


@dataclass
class Overlay:
    name: str
    values: list[float]
    description: str = ""


@dataclass
class RunResult:
    checkpoints: list[int]
    n_reps: int
    seed: int
    curves: list[PolicyCurve]
    overlays: list[Overlay] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def curve(self, name: str) -> PolicyCurve:
        for c in self.curves:
            if c.name == name:
                return c
        raise KeyError(name)

    def overlay(self, name: str) -> Overlay:
        for o in self.overlays:
            if o.name == name:
                return o
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "checkpoints": list(self.checkpoints),
            "n_reps": self.n_reps,
            "seed": self.seed,
            "curves": [vars(c).copy() for c in self.curves],
            "overlays": [vars(o).copy() for o in self.overlays],
            "config": self.config,
            "metadata": self.metadata,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(
            checkpoints=[int(t) for t in d["checkpoints"]],
            n_reps=int(d["n_reps"]),
            seed=int(d["seed"]),
            curves=[PolicyCurve(**c) for c in d["curves"]],
            overlays=[Overlay(**o) for o in d.get("overlays", [])],
            config=d.get("config", {}),
            metadata=d.get("metadata", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        return cls.from_dict(json.loads(text))


# -- single episode ----------------------------------------------------------


@dataclass
class Trajectory:
    arms: np.ndarray
    rewards: np.ndarray
    pseudo_regret: np.ndarray

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.arms, minlength=0)


def run_episode(
    instance: BanditInstance, policy: Policy, T: int, rng: np.random.Generator
) -> Trajectory:
    """Play T rounds of a fresh single-game policy on ``instance``."""
    if policy.model != instance.model:
        raise ValueError(
            f"policy family {policy.model.family.value} does not match instance family "
            f"{instance.model.family.value}"
        )
    if policy.n_arms != instance.n_arms or policy.batch != 1:
        raise ValueError("policy must be a single game over the instance's arms")
    if policy.round != 0:
        raise ValueError("run_episode needs a fresh policy state")
    means = np.asarray(instance.means)
    arms = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    for t in range(T):
        a = int(policy.select(rng)[0])
        r = float(instance.model.sample(means[a], rng))
        policy.update([a], [r])
        arms[t], rewards[t] = a, r
    gaps = instance.gaps
    return Trajectory(arms, rewards, np.cumsum(gaps[arms]))


# -- batched simulation ------------------------------------------------------


def batch_size(n_arms: int, horizon: int, n_policies: int = 1) -> int:
    """Replications per batch, from the memory budget only."""
    per_rep = 8 * n_arms * horizon * 3
    return int(max(1, min(MAX_BATCH, MEMORY_BUDGET // per_rep)))


@functools.lru_cache(maxsize=8)
def _dp_solution(horizon: int) -> gittins.TwoArmedSolution:
    return gittins.bayes_optimal_two_armed(horizon)


def _make_policy(pc: PolicyConfig, cfg: ExperimentConfig, B: int) -> Policy:
    kw = {}
    if pc.kind is PolicyKind.FH_GITTINS_EXACT:
        kw["gittins_cache_dir"] = cfg.gittins_cache_dir
    if pc.kind is PolicyKind.BAYES_OPTIMAL_TWO_ARMED:
        kw["dp_solution"] = _dp_solution(pc.horizon)
    return Policy(pc, cfg.model, cfg.n_arms, B, **kw)


def _simulate_batch(cfg: ExperimentConfig, start: int, stop: int):
    """Per-policy (regret[B, C], final pulls[B, K]) for replications [start, stop)."""
    K, T, model = cfg.n_arms, cfg.horizon, cfg.model
    B = stop - start
    reps = range(start, stop)
    if cfg.mode is Mode.FIXED_INSTANCE:
        means = np.tile(np.asarray(cfg.means), (B, 1))
    else:
        means = np.empty((B, K))
        for i, r in enumerate(reps):
            g = rngmod.stream(cfg.seed, r, rngmod.MEANS_STREAM)
            means[i] = [_draw_means(p, g) for p in cfg.arm_priors]
    table = np.empty((B, K, T))
    for i, r in enumerate(reps):
        g = rngmod.stream(cfg.seed, r, rngmod.REWARDS_STREAM)
        table[i] = model.sample(np.broadcast_to(means[i][:, None], (K, T)), g)
    gaps = means.max(axis=1, keepdims=True) - means
    cps = np.asarray(cfg.checkpoints, dtype=np.int64)
    rows = np.arange(B)
    out = []
    for pc in cfg.policies:
        thompson = pc.kind is PolicyKind.THOMPSON_SAMPLING
        ties = np.empty((B, T, K))
        uniforms = np.empty((B, T, K)) if thompson else None
        sid = rngmod.policy_stream_id(pc.name)
        for i, r in enumerate(reps):
            g = rngmod.stream(cfg.seed, r, sid)
            ties[i] = g.random((T, K))
            if thompson:
                uniforms[i] = g.random((T, K))
        pol = _make_policy(pc, cfg, B)
        counts = np.zeros((B, cps.size, K), dtype=np.int64)
        cum = np.zeros(B)
        cum_at = np.zeros((B, cps.size))
        ci = 0
        for t in range(T):
            arms = pol.select(tie_keys=ties[:, t], uniforms=uniforms[:, t] if thompson else None)
            r = table[rows, arms, pol.pulls[rows, arms]]
            pol.update(arms, r)
            cum += r
            while ci < cps.size and cps[ci] == t + 1:
                counts[:, ci] = pol.pulls
                cum_at[:, ci] = cum
                ci += 1
        if cfg.regret == "pseudo":
            regret = np.einsum("bck,bk->bc", counts.astype(float), gaps)
        else:
            regret = cps[None, :] * means.max(axis=1, keepdims=True) - cum_at
        out.append((regret, pol.pulls.copy()))
    return out


def _batches(cfg: ExperimentConfig) -> list[tuple[int, int]]:
    B = batch_size(cfg.n_arms, cfg.horizon)
    N = cfg.replications
    return [(s, min(s + B, N)) for s in range(0, N, B)]


def _run_batches(cfg: ExperimentConfig):
    jobs = _batches(cfg)
    workers = min(int(cfg.workers), len(jobs))
    if workers <= 1:
        return [_simulate_batch(cfg, s, e) for s, e in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_simulate_batch, [cfg] * len(jobs), *zip(*jobs)))


def _overlays(cfg: ExperimentConfig) -> list[Overlay]:
    t = np.asarray(cfg.checkpoints, dtype=float)
    if not cfg.overlays or cfg.regret != "pseudo":
        return []
    if cfg.mode is Mode.FIXED_INSTANCE:
        curve = lai_robbins_curve(cfg.instance)
        return [Overlay("lower_bound", list(map(float, curve.constant * np.log(t))),
                        f"Lai-Robbins constant {curve.constant!r} times log t")]
    priors = set(cfg.arm_priors)
    K = cfg.n_arms
    if cfg.model.family is not Family.BERNOULLI or len(priors) != 1 or K < 2:
        return []
    prior = priors.pop()
    if not isinstance(prior, BetaPrior):
        return []
    if prior == BetaPrior(1.0, 1.0):
        const = bernoulli_uniform_constant(K)
    else:
        dens, cdf = beta_theta_prior(prior.alpha, prior.beta)
        const = bayes_risk_constant_homogeneous(dens, cdf, K).value
    log2 = np.log(t) ** 2
    out = [
        Overlay("lower_bound", list(map(float, const * log2)), f"Bayes-risk constant {const!r} times log^2 t"),
        Overlay("lower_bound_alt", list(map(float, 2 * const * log2)),
                f"alternative normalization {2 * const!r} times log^2 t"),
    ]
    if K == 2 and prior == BetaPrior(1.0, 1.0) and cfg.horizon <= gittins.MAX_DP_HORIZON:
        risks = [gittins.bayes_optimal_two_armed(int(h)).bayes_risk for h in cfg.checkpoints]
        out.append(Overlay("bayes_optimal", [float(r) for r in risks],
                           "exact Bayes risk of the optimal strategy for each horizon"))
    return out


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    start = time.perf_counter()
    parts = _run_batches(cfg)
    N, T = cfg.replications, cfg.horizon
    curves = []
    for j, pc in enumerate(cfg.policies):
        regret = np.concatenate([p[j][0] for p in parts], axis=0)
        pulls = np.concatenate([p[j][1] for p in parts], axis=0)
        mean = regret.mean(axis=0)
        se = regret.std(axis=0, ddof=1) / math.sqrt(N) if N > 1 else np.zeros_like(mean)
        totals = pulls.sum(axis=0)
        curves.append(
            PolicyCurve(
                pc.name,
                [float(v) for v in mean],
                [float(v) for v in se],
                [float(v) for v in totals / N],
                [int(v) for v in totals],
                float(pc.c),
            )
        )
    overlays = _overlays(cfg)
    meta = {
        "regret": cfg.regret,
        "stderr": "sample standard deviation / sqrt(n_reps)",
        "confidence_band": "mean +/- 3 stderr",
        "exploration_c": {pc.name: float(pc.c) for pc in cfg.policies},
        "wall_clock_seconds": time.perf_counter() - start,
    }
    return RunResult(list(cfg.checkpoints), N, cfg.seed, curves, overlays, cfg.to_dict(), meta)


def monte_carlo_regret(cfg: ExperimentConfig) -> RunResult:
    """Frequentist regret on a fixed instance."""
    if cfg.mode is not Mode.FIXED_INSTANCE:
        raise ConfigError("monte_carlo_regret needs a fixed-instance configuration")
    return run_experiment(cfg)


def bayes_risk_estimate(cfg: ExperimentConfig) -> RunResult:
    """Bayes risk: arm means are redrawn from the priors in every replication."""
    if cfg.mode is not Mode.BAYES_RISK:
        raise ConfigError("bayes_risk_estimate needs a bayes-risk configuration")
    return run_experiment(cfg)


# -- emission ----------------------------------------------------------------


def to_csv(result: RunResult) -> str:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    n, seed = result.n_reps, result.seed
    for c in result.curves:
        for t, m, s in zip(result.checkpoints, c.mean_regret, c.stderr):
            buf.write(f"{t},{c.name},{m!r},{s!r},{n},{seed}\n")
    for o in result.overlays:
        for t, v in zip(result.checkpoints, o.values):
            buf.write(f"{t},{o.name},{v!r},0.0,{n},{seed}\n")
    return buf.getvalue()


def emit(result: RunResult, fmt: str = "csv", path: Optional[Union[str, os.PathLike]] = None) -> str:
    """Render ``result`` as CSV or JSON; write it to ``path`` when given."""
    if fmt == "csv":
        text = to_csv(result)
    elif fmt == "json":
        text = result.to_json() + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write results to {os.fspath(path)!r}: {exc.strerror}") from exc
    return text


def fit_log_squared(result: RunResult, policy: str, upper_half: bool = True):
    """Least-squares fit of mean regret against log^2 t.

    Returns ``(slope, intercept, r_squared)`` over the upper half of the
    checkpoints (or all of them).
    """
    t = np.asarray(result.checkpoints, dtype=float)
    y = np.asarray(result.curve(policy).mean_regret)
    if upper_half:
        keep = slice(len(t) // 2, None)
        t, y = t[keep], y[keep]
    if t.size < 3:
        raise ValueError("need at least three checkpoints to fit")
    x = np.log(t) ** 2
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2
