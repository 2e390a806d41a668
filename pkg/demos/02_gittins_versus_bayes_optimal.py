"""
How close is the finite-horizon Gittins index to Bayes optimal?
===============================================================

For two Bernoulli arms with uniform priors the Bayes-optimal policy can be
computed exactly by dynamic programming. The finite-horizon Gittins policy
plays the arm with the largest index, where each index only looks at its own
arm. Here we compare the two exactly for short horizons, then by simulation.
"""
from __future__ import annotations

from bandit_lab.exp_family import bernoulli
from bandit_lab.gittins import BetaState, bayes_optimal_two_armed, expected_max_mean, fh_gittins_index, two_armed_policy_value
from bandit_lab.harness import ExperimentConfig, run_experiment
from bandit_lab.policies import PolicyConfig
from bandit_lab.posterior import BetaPrior

prior = BetaState(1, 1)
print(f"{'T':>4}{'optimal reward':>16}{'gittins reward':>16}{'optimal regret':>16}")
for T in (2, 5, 10, 20):
    opt = bayes_optimal_two_armed(T).value

    def gittins(state, m, T=T):
        s1, f1, s2, f2 = state
        g1 = fh_gittins_index(BetaState(1 + s1, 1 + f1), T - m)
        g2 = fh_gittins_index(BetaState(1 + s2, 1 + f2), T - m)
        return 0 if g1 >= g2 else 1

    git = two_armed_policy_value(T, gittins)
    regret = T * expected_max_mean(prior, 2) - opt
    print(f"{T:>4}{opt:>16.6f}{git:>16.6f}{regret:>16.6f}")

# the same comparison by Monte Carlo, with the exact optimum as an overlay
T = 40
cfg = ExperimentConfig(bernoulli(), (PolicyConfig("fh-gittins-exact", horizon=T),), T, 20_000, seed=1,
                       mode="bayes-risk", arm_priors=(BetaPrior(),) * 2, checkpoints=(10, 20, 40))
res = run_experiment(cfg)
curve, opt = res.curves[0], res.overlay("bayes_optimal").values
print("\nBayes risk by simulation (20000 games):")
for t, m, s, o in zip(res.checkpoints, curve.mean_regret, curve.stderr, opt):
    print(f"  t={t:>3}  fh-gittins {m:.4f} +/- {s:.4f}   optimal {o:.4f}")
