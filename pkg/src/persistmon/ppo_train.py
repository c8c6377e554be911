"""PPO training: rollouts on randomized scenarios, clipped surrogate updates,
learning-rate decay and the speed-ratio curriculum."""

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .env_sim import EnvConfig, make_scenario
from .episode import GraphEpisode, roadmap_for
from .nn_core import load_checkpoint, save_checkpoint
from .policy_net import PolicyNet, collate

log = logging.getLogger(__name__)


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    clip_eps: float = 0.2
    value_coef: float = 0.5
    normalize_advantages: bool = True
    episode_cap: int = 256
    minibatch: int = 512
    epochs: int = 4
    lr: float = 1e-4
    lr_decay: float = 0.96
    lr_decay_every: int = 64
    max_speed_ratio: float = 0.1
    curriculum_episodes: int = 10_000
    fixed_speed_ratio: float | None = None
    nodes_range: tuple = (100, 200)
    history_range: tuple = (50, 100)
    targets_range: tuple = (2, 5)
    k: int = 10
    pool_stride: int = 5
    future: bool = True
    episodes: int = 50_000
    episodes_per_batch: int = 1
    workers: int = 1
    d: int = 128
    heads: int = 4
    grad_clip: float = 10.0
    seed: int = 0
    checkpoint_every: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        self.nodes_range = tuple(self.nodes_range)
        self.history_range = tuple(self.history_range)
        self.targets_range = tuple(self.targets_range)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


def learning_rate(cfg, episodes_done):
    return cfg.lr * cfg.lr_decay ** (episodes_done // cfg.lr_decay_every)


def curriculum_speed(cfg, episodes_done):
    """Upper bound of the sampled speed ratio after ``episodes_done`` episodes."""
    return cfg.max_speed_ratio * min(1.0, episodes_done / cfg.curriculum_episodes)


@dataclass
class RolloutBatch:
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    returns: np.ndarray | None = None
    advantages: np.ndarray | None = None

    def __len__(self):
        return len(self.actions)

    def extend(self, other):
        for name in ("observations", "actions", "log_probs", "rewards", "values"):
            getattr(self, name).extend(getattr(other, name))
        self.returns = np.concatenate([self.returns, other.returns])
        self.advantages = np.concatenate([self.advantages, other.advantages])


def discounted_returns(rewards, gamma):
    """Suffix sums ``R_t = sum_k gamma^k r_{t+k}``, truncated at the episode end."""
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def rollout(policy, scenario, cfg, rng, T, greedy=False, prior="full"):
    """One episode of ``cfg.episode_cap`` decisions with sampled (or greedy) actions."""
    roadmap = roadmap_for(scenario)
    ep = GraphEpisode(scenario, roadmap, prior, max_steps=cfg.episode_cap,
                      record=False, future=cfg.future)
    batch = RolloutBatch()
    while not ep.done:
        obs = ep.observation(T, cfg.pool_stride)
        a, logp, value = policy.act(obs, greedy=greedy, rng=rng)
        batch.observations.append(obs)
        batch.actions.append(a)
        batch.log_probs.append(logp)
        batch.values.append(value)
        batch.rewards.append(ep.step(a))
    batch.returns = discounted_returns(batch.rewards, cfg.gamma)
    batch.advantages = batch.returns - np.asarray(batch.values)
    return batch


def random_rollout_reward(scenario, cfg, rng, prior="full"):
    """Episodic reward of the uniform-random-neighbour control policy."""
    roadmap = roadmap_for(scenario)
    ep = GraphEpisode(scenario, roadmap, prior, max_steps=cfg.episode_cap, record=False,
                      future=cfg.future)
    while not ep.done:
        ep.step(int(rng.integers(len(ep.neighbors()))))
    return float(np.sum(ep.rewards))


def greedy_reward(policy, scenario, cfg, T, seed=0, prior="full"):
    """Episodic reward of the argmax policy on ``scenario``."""
    return float(np.sum(rollout(policy, scenario, cfg, np.random.default_rng(seed), T,
                                greedy=True, prior=prior).rewards))


class BestOnValidation:
    """Training callback that scores the greedy policy on fixed validation scenarios
    every ``every`` episodes and keeps a copy of the best parameters."""

    def __init__(self, scenarios, cfg, T, every=50):
        self.scenarios = list(scenarios)
        self.cfg = cfg
        self.T = T
        self.every = every
        self.history = []
        self.best_score = -np.inf
        self.best_episode = None
        self.best_state = None

    def score(self, policy):
        return float(np.mean([greedy_reward(policy, sc, self.cfg, self.T, j)
                              for j, sc in enumerate(self.scenarios)]))

    def __call__(self, episodes, policy, rows=None):
        if episodes % self.every:
            return
        s = self.score(policy)
        self.history.append((episodes, s))
        log.info("validation episodes=%d greedy_reward=%.3f", episodes, s)
        if s > self.best_score:
            self.best_score, self.best_episode = s, episodes
            self.best_state = {k: v.detach().clone() for k, v in policy.state_dict().items()}

    def restore(self, policy):
        if self.best_state is not None:
            policy.load_state_dict(self.best_state)
        return policy


def clipped_surrogate(ratio, adv, clip_eps):
    """Per-sample ``min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)``."""
    return torch.minimum(ratio * adv, torch.clamp(ratio, 1 - clip_eps, 1 + clip_eps) * adv)


def ppo_loss(new_log_probs, old_log_probs, advantages, values, returns, clip_eps=0.2,
             value_coef=0.5):
    """Scalar to minimise plus its parts ``(total, surrogate, value_loss)``.

    ``surrogate`` is the batch mean of the clipped objective (to be maximised).
    """
    ratio = torch.exp(new_log_probs - old_log_probs)
    surrogate = clipped_surrogate(ratio, advantages, clip_eps).mean()
    value_loss = ((values - returns) ** 2).mean()
    return -surrogate + value_coef * value_loss, surrogate, value_loss


def batch_loss(policy, batch, idx, cfg, advantages):
    data = collate([batch.observations[i] for i in idx], next(policy.parameters()).dtype)
    out = policy(data)
    actions = torch.as_tensor([batch.actions[i] for i in idx])
    new_logp = out.log_probs.gather(1, actions.unsqueeze(1)).squeeze(1)
    old_logp = torch.as_tensor([batch.log_probs[i] for i in idx], dtype=new_logp.dtype)
    adv = torch.as_tensor(advantages[idx], dtype=new_logp.dtype)
    ret = torch.as_tensor(batch.returns[idx], dtype=new_logp.dtype)
    return ppo_loss(new_logp, old_logp, adv, out.value_estimate, ret, cfg.clip_eps,
                    cfg.value_coef)


def prepared_advantages(batch, cfg):
    adv = np.asarray(batch.advantages, dtype=float)
    if cfg.normalize_advantages and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv


def ppo_update(policy, optimizer, batch, cfg, rng):
    """``cfg.epochs`` passes of shuffled minibatch updates; returns per-epoch mean losses."""
    adv = prepared_advantages(batch, cfg)
    n = len(batch)
    history = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        parts = []
        for start in range(0, n, cfg.minibatch):
            idx = perm[start:start + cfg.minibatch]
            total, surr, vloss = batch_loss(policy, batch, idx, cfg, adv)
            if not torch.isfinite(total):
                raise NonFiniteLoss(f"loss={total.item()} surrogate={surr.item()} "
                                    f"value_loss={vloss.item()}")
            optimizer.zero_grad()
            total.backward()
            torch.nn.utils.clip_grad_norm_(policy.parameters(), cfg.grad_clip)
            optimizer.step()
            parts.append((total.item(), surr.item(), vloss.item(), len(idx)))
        w = np.array([p[3] for p in parts], dtype=float)
        history.append(tuple(np.average([p[k] for p in parts], weights=w) for k in range(3)))
    return history


def frozen_batch_loss(policy, batch, cfg):
    """Loss over a whole batch without updating parameters."""
    adv = prepared_advantages(batch, cfg)
    with torch.no_grad():
        total, _, _ = batch_loss(policy, batch, np.arange(len(batch)), cfg, adv)
    return float(total)


def sample_setting(cfg, episodes_done, rng):
    """Per-batch randomisation of graph size, history length, target count and speed."""
    V = int(rng.integers(cfg.nodes_range[0], cfg.nodes_range[1] + 1))
    T = int(rng.integers(cfg.history_range[0], cfg.history_range[1] + 1))
    N = int(rng.integers(cfg.targets_range[0], cfg.targets_range[1] + 1))
    if cfg.fixed_speed_ratio is not None:
        rv = cfg.fixed_speed_ratio
    else:
        rv = float(rng.uniform(0.0, curriculum_speed(cfg, episodes_done)))
    return V, T, N, rv


def training_scenario(cfg, episode_index, V, N, rv):
    seed = int(np.random.SeedSequence([cfg.seed, 1, episode_index]).generate_state(1)[0])
    env = EnvConfig(num_targets=N, speed_ratio=rv, seed=seed)
    return make_scenario(env, num_nodes=V, k=cfg.k)


def build_policy(cfg):
    torch.manual_seed(cfg.seed)
    return PolicyNet(d=cfg.d, heads=cfg.heads, target_dim=4 if cfg.future else 2)


def _worker_rollout(args):
    state, pcfg, cfg, scenario, T, rng_seed = args
    torch.set_num_threads(1)
    policy = PolicyNet(**pcfg)
    policy.load_state_dict(state)
    return rollout(policy, scenario, cfg, np.random.default_rng(rng_seed), T)


def collect(policy, cfg, jobs, pool=None):
    """Run rollouts for ``jobs = [(scenario, T, rng_seed), ...]`` against frozen parameters."""
    if pool is None:
        return [rollout(policy, sc, cfg, np.random.default_rng(rs), T) for sc, T, rs in jobs]
    state = {k: v.detach().clone() for k, v in policy.state_dict().items()}
    args = [(state, policy.config, cfg, sc, T, rs) for sc, T, rs in jobs]
    return list(pool.map(_worker_rollout, args))


CURVE_FIELDS = ["episode", "reward", "loss", "surrogate", "value_loss", "lr", "max_speed_ratio",
                "num_nodes", "history", "num_targets", "speed_ratio"]


def train(cfg, policy=None, callback=None):
    """Train and return ``(policy, curve_rows)``; persists curves/checkpoints if ``out_dir``."""
    policy = policy or build_policy(cfg)
    optimizer = torch.optim.Adam(policy.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    rows = []
    writer = None
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        with open(os.path.join(cfg.out_dir, "train_config.json"), "w") as f:
            json.dump(asdict(cfg), f, indent=1)
        fh = open(os.path.join(cfg.out_dir, "curves.csv"), "w", newline="")
        writer = csv.DictWriter(fh, CURVE_FIELDS)
        writer.writeheader()
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    episodes = 0
    try:
        while episodes < cfg.episodes:
            V, T, N, rv = sample_setting(cfg, episodes, rng)
            n_eps = min(cfg.episodes_per_batch, cfg.episodes - episodes)
            jobs = [(training_scenario(cfg, episodes + j, V, N, rv), T,
                     int(rng.integers(2 ** 63))) for j in range(n_eps)]
            batches = collect(policy, cfg, jobs, pool)
            batch = batches[0]
            for b in batches[1:]:
                batch.extend(b)
            lr = learning_rate(cfg, episodes)
            for g in optimizer.param_groups:
                g["lr"] = lr
            hist = ppo_update(policy, optimizer, batch, cfg, rng)
            total, surr, vloss = hist[-1]
            for j, b in enumerate(batches):
                row = {"episode": episodes + j + 1, "reward": float(np.sum(b.rewards)),
                       "loss": total, "surrogate": surr, "value_loss": vloss, "lr": lr,
                       "max_speed_ratio": curriculum_speed(cfg, episodes), "num_nodes": V,
                       "history": T, "num_targets": N, "speed_ratio": rv}
                rows.append(row)
                if writer:
                    writer.writerow(row)
            episodes += n_eps
            log.info("episodes=%d reward=%.3f loss=%.4f", episodes, rows[-1]["reward"], total)
            if cfg.out_dir and cfg.checkpoint_every and episodes % cfg.checkpoint_every < n_eps:
                save_checkpoint(policy, os.path.join(cfg.out_dir, f"ckpt_{episodes:06d}"),
                                {"policy": policy.config, "episodes": episodes})
            if callback:
                callback(episodes, policy, rows)
    finally:
        if pool:
            pool.shutdown()
        if writer:
            fh.close()
    if cfg.out_dir:
        save_checkpoint(policy, os.path.join(cfg.out_dir, "final"),
                        {"policy": policy.config, "episodes": episodes})
    return policy, rows


def load_policy(path):
    from .nn_core import read_checkpoint
    manifest, _ = read_checkpoint(path)
    policy = PolicyNet(**manifest["meta"]["policy"])
    load_checkpoint(policy, path)
    return policy
