# Short PPO run on a small graph, compared against picking neighbours at random.
# About 5 s per episode on one CPU core; lower EPISODES for a quick look.
import numpy as np
import torch

from persistmon.env_sim import EnvConfig, make_scenario
from persistmon.ppo_train import (BestOnValidation, TrainConfig, random_rollout_reward, rollout,
                                  train)

EPISODES = 300
torch.set_num_threads(1)

cfg = TrainConfig(nodes_range=(50, 50), history_range=(25, 25), targets_range=(2, 2),
                  fixed_speed_ratio=1 / 20, d=64, lr=1e-3, minibatch=256,
                  episodes=EPISODES, out_dir="desk_run")


def scenarios(first_seed):
    return [make_scenario(EnvConfig(num_targets=2, speed_ratio=1 / 20, seed=first_seed + j),
                          num_nodes=50) for j in range(10)]


held, validation = scenarios(100_000), scenarios(200_000)
baseline = np.mean([random_rollout_reward(sc, cfg, np.random.default_rng(j))
                    for j, sc in enumerate(held)])
print(f"random neighbour policy: {baseline:.3f}")

# An untrained argmax policy tends to bounce between two nodes, and greedy reward
# is noisy early in training, so keep the parameters that did best on validation.
select = BestOnValidation(validation, cfg, T=25, every=50)
policy, rows = train(cfg, callback=select)
for ep, score in select.history:
    print(f"episode {ep}: validation reward {score:.3f}")
select.restore(policy)
r = np.mean([sum(rollout(policy, sc, cfg, np.random.default_rng(j), 25, greedy=True).rewards)
             for j, sc in enumerate(held)])
print(f"kept episode {select.best_episode}: held-out reward {r:.3f} ({r / baseline:.2f}x random)")
# last parameters in desk_run/final, curves in desk_run/curves.csv
