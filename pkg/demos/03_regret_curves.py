"""
Regret curves on a hard Bernoulli instance
==========================================

Two arms with means 0.05 and 0.15 are hard to tell apart. We compare kl-UCB,
kl-UCB+ and Bayes-UCB over 1000 rounds and set their regret against the
asymptotic Lai-Robbins rate. That rate only describes large horizons; at
T = 1000 it still lies above all three curves. A reduced number of
replications keeps the run short; the acceptance suite uses 5000.
"""
from __future__ import annotations

import numpy as np

from bandit_lab.bounds import lai_robbins_curve
from bandit_lab.exp_family import BanditInstance, bernoulli
from bandit_lab.harness import ExperimentConfig, run_episode, run_experiment
from bandit_lab.policies import PolicyConfig, make_policy

model, means = bernoulli(), (0.05, 0.15)

# one game, played step by step
traj = run_episode(BanditInstance(model, means), make_policy(PolicyConfig("kl-ucb"), model, 2), 200,
                   np.random.default_rng(3))
print(f"one game of 200 rounds: arm 0 pulled {np.sum(traj.arms == 0)} times, regret {traj.pseudo_regret[-1]:.2f}\n")

cfg = ExperimentConfig(model, tuple(PolicyConfig(k) for k in ("kl-ucb", "kl-ucb-plus", "bayes-ucb")),
                       1000, 500, seed=7, means=means, checkpoints=(10, 100, 300, 1000))
res = run_experiment(cfg)
lr = lai_robbins_curve(BanditInstance(model, means))
print(f"Lai-Robbins constant {lr.constant:.4f}")
print(f"{'t':>6}" + "".join(f"{c.name:>16}" for c in res.curves) + f"{'lower bound':>14}")
for i, t in enumerate(res.checkpoints):
    row = "".join(f"{c.mean_regret[i]:>10.2f} ({c.stderr[i]:.2f})" for c in res.curves)
    print(f"{t:>6}{row}{lr(t):>14.2f}")
