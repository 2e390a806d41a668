"""Experiment configuration files.

Configurations are TOML documents: flat top-level keys plus one ``[[policy]]``
table per strategy. Unknown keys anywhere are errors. Example::

    mode = "fixed-instance"          # or "bayes-risk"
    family = "bernoulli"             # gaussian, poisson, exponential
    arms = [0.05, 0.15]              # fixed-instance: arm means
    horizon = 1000
    replications = 5000
    seed = 42

    [[policy]]
    kind = "kl-ucb"
    c = 0.0

    [[policy]]
    kind = "bayes-ucb"
    clamp = [0.01, 0.99]
    prior = { type = "beta", alpha = 1.0, beta = 1.0 }

Bayes-risk experiments replace ``arms`` by ``n_arms`` plus a shared
``arm_prior`` table, or by an ``arm_priors`` array with one table per arm.
"""
from __future__ import annotations

import os
from typing import Any, Mapping, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exp_family import ExpFamilyModel, Family
from .harness import ConfigError, ExperimentConfig, Mode, default_checkpoints, prior_from_dict
from .policies import PolicyConfig, PolicyKind

__all__ = ["TOP_LEVEL_KEYS", "POLICY_KEYS", "load_config", "parse_config", "apply_overrides"]

TOP_LEVEL_KEYS = {
    "mode": "fixed-instance | bayes-risk (default fixed-instance)",
    "family": "bernoulli | gaussian | poisson | exponential (required)",
    "sigma2": "known reward variance, gaussian only (default 1.0)",
    "arms": "list of arm means (fixed-instance)",
    "n_arms": "number of arms sharing arm_prior (bayes-risk)",
    "arm_prior": "prior table shared by all arms (bayes-risk)",
    "arm_priors": "list of per-arm prior tables (bayes-risk)",
    "horizon": "number of rounds T (required)",
    "replications": "number of Monte Carlo replications N (required)",
    "seed": "64-bit nonnegative seed (default 0)",
    "checkpoints": "explicit list of recorded rounds",
    "n_checkpoints": "size of the default geometric checkpoint grid (default 64)",
    "regret": "pseudo | realized (default pseudo)",
    "overlays": "emit lower-bound and exact-optimum overlay rows (default true)",
    "out": "output path (default stdout)",
    "format": "csv | json (default csv)",
    "workers": "worker processes (default 1)",
    "gittins_cache": "directory for cached Gittins tables",
    "policy": "array of policy tables",
}

POLICY_KEYS = {
    "kind": "policy name, e.g. kl-ucb, kl-ucb-plus, bayes-ucb, thompson-sampling",
    "c": "exploration exponent (default 0)",
    "horizon": "must equal the experiment horizon when given",
    "clamp": "[lo, hi] clamp of the empirical mean",
    "prior": "prior table for Bayesian policies",
    "label": "name used in output (default: kind)",
}


def _unknown(keys, allowed, where: str) -> None:
    bad = sorted(set(keys) - set(allowed))
    if bad:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(bad)}")


def _policy(d: Mapping[str, Any], horizon: int) -> PolicyConfig:
    if not isinstance(d, Mapping):
        raise ConfigError("each [[policy]] entry must be a table")
    _unknown(d, POLICY_KEYS, "[[policy]]")
    if "kind" not in d:
        raise ConfigError("[[policy]] entry without a kind")
    try:
        kind = PolicyKind(d["kind"])
    except ValueError:
        names = ", ".join(k.value for k in PolicyKind)
        raise ConfigError(f"unknown policy kind {d['kind']!r}; expected one of {names}") from None
    clamp = d.get("clamp")
    if clamp is not None and (not isinstance(clamp, Sequence) or len(clamp) != 2):
        raise ConfigError("clamp must be a pair [lo, hi]")
    try:
        return PolicyConfig(
            kind=kind,
            c=float(d.get("c", 0.0)),
            horizon=int(d.get("horizon", horizon)),
            clamp=tuple(clamp) if clamp is not None else None,
            prior=prior_from_dict(d["prior"]) if "prior" in d else None,
            label=d.get("label"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid policy {d['kind']!r}: {exc}") from exc


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed document."""
    _unknown(raw, TOP_LEVEL_KEYS, "configuration")
    for key in ("family", "horizon", "replications"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    try:
        family = Family(raw["family"])
        model = ExpFamilyModel(family, float(raw.get("sigma2", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"invalid family: {exc}") from exc
    if "sigma2" in raw and family is not Family.GAUSSIAN:
        raise ConfigError("sigma2 only applies to the gaussian family")
    try:
        mode = Mode(raw.get("mode", Mode.FIXED_INSTANCE.value))
    except ValueError:
        raise ConfigError(f"unknown mode {raw['mode']!r}") from None
    horizon = raw["horizon"]
    if not isinstance(horizon, int) or isinstance(horizon, bool):
        raise ConfigError("horizon must be an integer")
    means = priors = None
    if mode is Mode.FIXED_INSTANCE:
        for key in ("n_arms", "arm_prior", "arm_priors"):
            if key in raw:
                raise ConfigError(f"{key!r} is only valid in bayes-risk mode")
        if "arms" not in raw:
            raise ConfigError("fixed-instance mode needs 'arms'")
        means = tuple(float(m) for m in raw["arms"])
    else:
        if "arms" in raw:
            raise ConfigError("'arms' is only valid in fixed-instance mode")
        if "arm_priors" in raw:
            if "arm_prior" in raw or "n_arms" in raw:
                raise ConfigError("give either arm_priors or n_arms with arm_prior, not both")
            priors = tuple(prior_from_dict(p) for p in raw["arm_priors"])
        elif "arm_prior" in raw and "n_arms" in raw:
            priors = (prior_from_dict(raw["arm_prior"]),) * int(raw["n_arms"])
        else:
            raise ConfigError("bayes-risk mode needs arm_priors, or n_arms with arm_prior")
    policies = raw.get("policy", [])
    if not isinstance(policies, list):
        raise ConfigError("'policy' must be an array of tables ([[policy]])")
    checkpoints = raw.get("checkpoints")
    if checkpoints is None and "n_checkpoints" in raw:
        checkpoints = default_checkpoints(horizon, int(raw["n_checkpoints"]))
    try:
        return ExperimentConfig(
            model=model,
            policies=tuple(_policy(p, horizon) for p in policies),
            horizon=horizon,
            replications=int(raw["replications"]),
            seed=int(raw.get("seed", 0)),
            mode=mode,
            means=means,
            arm_priors=priors,
            checkpoints=tuple(checkpoints) if checkpoints is not None else None,
            regret=str(raw.get("regret", "pseudo")),
            overlays=bool(raw.get("overlays", True)),
            output=raw.get("out"),
            format=str(raw.get("format", "csv")),
            workers=int(raw.get("workers", 1)),
            gittins_cache_dir=raw.get("gittins_cache"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def read_document(path: "os.PathLike | str") -> dict:
    """Parse a TOML file; syntax errors become :class:`ConfigError`."""
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        return tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{os.fspath(path)}: {exc}") from exc


def apply_overrides(raw: dict, **overrides: Optional[Any]) -> dict:
    """Return a copy of ``raw`` with command-line overrides applied.

    ``policy`` is a list of names: each selects the configured policy with that
    name (label or kind), or adds a default policy of that kind.
    """
    out = dict(raw)
    for key in ("horizon", "replications", "seed", "family", "out", "format", "workers"):
        if overrides.get(key) is not None:
            out[key] = overrides[key]
    if overrides.get("arms") is not None:
        out["arms"] = list(overrides["arms"])
    names = overrides.get("policy")
    if names:
        existing = {p.get("label", p.get("kind")): p for p in raw.get("policy", []) if isinstance(p, Mapping)}
        out["policy"] = [dict(existing[n]) if n in existing else {"kind": n} for n in names]
    if overrides.get("horizon") is not None:
        # explicit policy horizons follow the overridden experiment horizon
        out["policy"] = [
            {**p, "horizon": overrides["horizon"]} if isinstance(p, Mapping) and "horizon" in p else p
            for p in out.get("policy", [])
        ]
        if "checkpoints" in out:
            out["checkpoints"] = [t for t in out["checkpoints"] if t <= overrides["horizon"]]
    return out


def load_config(path: "os.PathLike | str", **overrides) -> ExperimentConfig:
    return parse_config(apply_overrides(read_document(path), **overrides))
