from __future__ import annotations

import json
import math

import numpy as np
import pytest

from bandit_lab.exp_family import BanditInstance, bernoulli, exponential, poisson
from bandit_lab.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    Mode,
    PointPrior,
    RunResult,
    bayes_risk_estimate,
    default_checkpoints,
    emit,
    fit_log_squared,
    monte_carlo_regret,
    run_episode,
    run_experiment,
    to_csv,
)
from bandit_lab.policies import Policy, PolicyConfig
from bandit_lab.posterior import BetaPrior
from bandit_lab.rng import policy_stream_id, stream


def small_config(**kw):
    base = dict(
        model=bernoulli(),
        policies=(PolicyConfig("kl-ucb"), PolicyConfig("thompson-sampling")),
        horizon=200,
        replications=40,
        seed=9,
        means=(0.3, 0.5),
    )
    base.update(kw)
    return ExperimentConfig(**base)


class TestStreams:
    def test_pure_function_of_keys(self):
        a = stream(1, 5, 1).random(4)
        b = stream(1, 5, 1).random(4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, stream(1, 6, 1).random(4))
        assert not np.array_equal(a, stream(2, 5, 1).random(4))

    def test_policy_streams_distinct(self):
        assert policy_stream_id("kl-ucb") != policy_stream_id("kl-ucb-plus")
        assert policy_stream_id("a") >= 2


class TestEpisode:
    def test_single_arm_zero_regret(self):
        inst = BanditInstance(bernoulli(), (0.4,))
        traj = run_episode(inst, Policy(PolicyConfig("kl-ucb"), bernoulli(), 1), 100, np.random.default_rng(0))
        assert np.all(traj.pseudo_regret == 0)

    def test_counts_conserved(self):
        inst = BanditInstance(bernoulli(), (0.2, 0.8))
        traj = run_episode(inst, Policy(PolicyConfig("kl-ucb-plus"), bernoulli(), 2), 300, np.random.default_rng(1))
        assert np.bincount(traj.arms, minlength=2).sum() == 300
        assert traj.pseudo_regret[-1] == pytest.approx(0.6 * np.sum(traj.arms == 0))

    def test_family_mismatch(self):
        inst = BanditInstance(poisson(), (1.0, 2.0))
        with pytest.raises(ValueError):
            run_episode(inst, Policy(PolicyConfig("kl-ucb"), bernoulli(), 2), 10, np.random.default_rng(0))

    def test_uniform_random_regret_rate(self):
        cfg = ExperimentConfig(bernoulli(), (PolicyConfig("uniform-random"),), 10_000, 1000, seed=0,
                               means=(0.2, 0.8), checkpoints=(10_000,))
        res = monte_carlo_regret(cfg)
        assert res.curves[0].mean_regret[-1] / 10_000 == pytest.approx(0.3, abs=0.01)


class TestRun:
    def test_invariants(self):
        res = run_experiment(small_config())
        gaps = np.array([0.2, 0.0])
        for c in res.curves:
            assert np.all(np.diff(c.mean_regret) >= 0)
            assert sum(c.total_pulls) == 200 * 40
            assert sum(c.mean_pulls) == pytest.approx(200)
            assert c.mean_regret[-1] == pytest.approx(float(gaps @ np.array(c.mean_pulls)), abs=1e-9)
            assert all(s >= 0 for s in c.stderr)
        assert res.overlay("lower_bound").values[0] == 0.0

    def test_deterministic_across_workers(self):
        a = to_csv(run_experiment(small_config(workers=1)))
        b = to_csv(run_experiment(small_config(workers=3)))
        assert a == b

    def test_replication_independent_of_batch(self):
        # a replication's trajectory does not depend on which batch it ran in
        from bandit_lab.harness import _simulate_batch

        cfg = small_config()
        alone = _simulate_batch(cfg, 3, 4)
        within = _simulate_batch(cfg, 0, 10)
        for (r1, n1), (r10, n10) in zip(alone, within):
            np.testing.assert_array_equal(r1[0], r10[3])
            np.testing.assert_array_equal(n1[0], n10[3])

    def test_seed_changes_output(self):
        assert to_csv(run_experiment(small_config(seed=1))) != to_csv(run_experiment(small_config(seed=2)))

    def test_bayes_risk_overlays(self):
        cfg = ExperimentConfig(bernoulli(), (PolicyConfig("fh-gittins-exact", horizon=20),), 20, 200, seed=1,
                               mode="bayes-risk", arm_priors=(BetaPrior(),) * 2)
        res = bayes_risk_estimate(cfg)
        names = [o.name for o in res.overlays]
        assert names == ["lower_bound", "lower_bound_alt", "bayes_optimal"]
        assert res.overlay("lower_bound_alt").values[-1] == pytest.approx(2 * res.overlay("lower_bound").values[-1])
        opt = res.overlay("bayes_optimal").values
        c = res.curves[0]
        assert all(m >= o - 3 * s - 1e-12 for m, o, s in zip(c.mean_regret, opt, c.stderr))

    def test_point_prior_matches_fixed_instance(self):
        pols = (PolicyConfig("kl-ucb"),)
        fixed = run_experiment(ExperimentConfig(bernoulli(), pols, 300, 300, seed=4, means=(0.3, 0.6)))
        point = run_experiment(ExperimentConfig(bernoulli(), pols, 300, 300, seed=4, mode="bayes-risk",
                                                arm_priors=(PointPrior(0.3), PointPrior(0.6))))
        a, b = fixed.curves[0], point.curves[0]
        assert b.mean_regret[-1] == pytest.approx(a.mean_regret[-1], abs=3 * math.hypot(a.stderr[-1], b.stderr[-1]))

    def test_realized_regret(self):
        res = run_experiment(small_config(regret="realized", overlays=True))
        assert res.overlays == []
        assert res.metadata["regret"] == "realized"

    def test_exponential_runs(self):
        cfg = ExperimentConfig(exponential(), (PolicyConfig("kl-ucb"), PolicyConfig("bayes-ucb")), 100, 5,
                               means=(1.0, 2.0))
        res = run_experiment(cfg)
        assert res.curves[0].mean_regret[-1] > 0


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kw",
        [dict(horizon=1), dict(replications=0), dict(checkpoints=(5, 3)), dict(checkpoints=(0, 5)),
         dict(checkpoints=(500,)), dict(means=(0.3, 1.5)), dict(policies=()),
         dict(policies=(PolicyConfig("kl-ucb"), PolicyConfig("kl-ucb"))), dict(regret="other"),
         dict(policies=(PolicyConfig("moss", horizon=50),)), dict(seed=-1), dict(mode="nope")],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            small_config(**kw)

    def test_mode_requirements(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(bernoulli(), (PolicyConfig("kl-ucb"),), 10, 1, mode="bayes-risk")
        with pytest.raises(ConfigError):
            ExperimentConfig(bernoulli(), (PolicyConfig("kl-ucb"),), 10, 1, mode=Mode.BAYES_RISK,
                             arm_priors=(BetaPrior(),), means=(0.5,))

    def test_default_checkpoints(self):
        cps = default_checkpoints(1000)
        assert cps[0] == 1 and cps[-1] == 1000
        assert len(cps) <= 65 and list(cps) == sorted(set(cps))
        assert default_checkpoints(5) == (1, 2, 3, 4, 5)


class TestEmit:
    def test_csv_shape(self):
        res = run_experiment(small_config())
        lines = to_csv(res).splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) - 1 == len(res.checkpoints) * (len(res.curves) + len(res.overlays))
        t, name, mean, se, n, seed = lines[1].split(",")
        assert (name, n, seed) == ("kl-ucb", "40", "9")
        assert float(mean) == res.curves[0].mean_regret[0]

    def test_empty_checkpoints(self):
        res = run_experiment(small_config(checkpoints=()))
        assert to_csv(res) == CSV_HEADER + "\n"

    def test_json_round_trip(self, tmp_path):
        res = run_experiment(small_config())
        path = tmp_path / "r.json"
        text = emit(res, "json", path)
        back = RunResult.from_json(path.read_text())
        assert back == res
        assert back.to_json() + "\n" == text
        assert json.loads(text)["config"]["policy"][0]["kind"] == "kl-ucb"

    def test_io_error_has_path(self, tmp_path):
        res = run_experiment(small_config(replications=2))
        with pytest.raises(OSError, match="nope"):
            emit(res, "csv", tmp_path / "nope" / "x.csv")

    def test_fit_log_squared(self):
        t = np.arange(1, 101)
        res = RunResult(list(map(int, t)), 1, 0, [])
        from bandit_lab.harness import PolicyCurve

        y = 0.7 * np.log(t) ** 2 + 2.0
        res.curves.append(PolicyCurve("p", list(y), [0.0] * 100, [0.0], [0], 0.0))
        slope, icpt, r2 = fit_log_squared(res, "p")
        assert slope == pytest.approx(0.7) and icpt == pytest.approx(2.0) and r2 == pytest.approx(1.0)
