"""
Frequentist and Bayesian indices side by side
=============================================

An arm with 3 successes out of 10 pulls, seen at round t = 100. Each index
policy turns those statistics into an optimistic estimate of the arm's mean.
The kl-UCB family inverts a divergence level set, Bayes-UCB reads off a
posterior quantile and the finite-horizon Gittins index calibrates the arm
against a known one.
"""
from __future__ import annotations

import numpy as np

from bandit_lab.exp_family import bernoulli, d_level_set_sup, kl_mean
from bandit_lab.gittins import BetaState, fh_gittins_index
from bandit_lab.policies import ArmStatistics, PolicyKind, bayes_ucb_index, exploration_rate, kl_ucb_family_index
from bandit_lab.posterior import BetaPrior, Posterior

model = bernoulli()
stats = ArmStatistics(pulls=10, reward_sum=3.0)
t, T = 100, 1000

# the divergence that drives every index
print(f"d(0.3, 0.5) = {kl_mean(model, 0.3, 0.5):.6f}")
print(f"largest q with d(0.3, q) <= 0.2: {d_level_set_sup(model, 0.3, 0.2):.6f}\n")

print(f"{'index':<22}{'value':>10}")
for kind in (PolicyKind.KL_UCB, PolicyKind.KL_UCB_PLUS, PolicyKind.KL_UCB_H_PLUS):
    level = exploration_rate(kind, t, stats.pulls, T=T)
    print(f"{kind.value:<22}{kl_ucb_family_index(stats, level, model):>10.4f}")

posterior = Posterior.from_stats(model, BetaPrior(), stats.pulls, stats.empirical_mean)
print(f"{'bayes-ucb':<22}{bayes_ucb_index(posterior, t):>10.4f}")

# Gittins: Beta(1 + 3, 1 + 7) posterior with T - t rounds to go
state = BetaState(1 + 3, 1 + 7)
for r in (1, 10, 100):
    print(f"{f'fh-gittins (r={r})':<22}{fh_gittins_index(state, r):>10.4f}")

# the Gittins index grows with the remaining horizon, like log(T / n)
rs = np.array([1, 2, 5, 10, 20, 50])
print("\nGittins index against remaining rounds:",
      ", ".join(f"{r}:{fh_gittins_index(state, int(r)):.3f}" for r in rs))
