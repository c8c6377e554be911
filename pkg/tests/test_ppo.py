import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from persistmon.env_sim import EnvConfig, make_scenario
from persistmon.ppo_train import (BestOnValidation, NonFiniteLoss, TrainConfig, batch_loss,
                                  build_policy, clipped_surrogate, curriculum_speed,
                                  discounted_returns, frozen_batch_loss, greedy_reward,
                                  learning_rate, ppo_loss, ppo_update, prepared_advantages,
                                  rollout, train)


def small_cfg(**kw):
    base = dict(d=16, heads=2, episode_cap=8, minibatch=4, nodes_range=(30, 30),
                history_range=(10, 10), targets_range=(2, 2), fixed_speed_ratio=0.05,
                episodes=2, seed=3)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def batch():
    cfg = small_cfg()
    sc = make_scenario(EnvConfig(num_targets=2, speed_ratio=0.05, seed=1), num_nodes=30)
    return rollout(build_policy(cfg), sc, cfg, np.random.default_rng(0), T=10)


def test_returns_known_values():
    np.testing.assert_allclose(discounted_returns([1.0, 0.0, 2.0], 0.5), [1.5, 1.0, 2.0])


def test_returns_gamma_zero_is_reward():
    r = np.random.default_rng(0).uniform(size=12)
    np.testing.assert_array_equal(discounted_returns(r, 0.0), r)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=60), st.floats(0.01, 1.0))
def test_returns_recursion(rewards, gamma):
    R = discounted_returns(rewards, gamma)
    assert R[-1] == rewards[-1]
    for t in range(len(rewards) - 1):
        assert R[t] == pytest.approx(rewards[t] + gamma * R[t + 1], rel=1e-12, abs=1e-12)


def test_config_rejects_bad_gamma():
    with pytest.raises(ValueError):
        TrainConfig(gamma=0.0)


def test_rollout_capped(batch):
    assert len(batch) == 8
    assert len(batch.observations) == len(batch.rewards) == len(batch.log_probs) == 8
    np.testing.assert_allclose(batch.returns, discounted_returns(batch.rewards, 0.99))
    assert all(r >= 0 for r in batch.rewards)


def test_default_cap():
    assert TrainConfig().episode_cap == 256


def test_ratio_one_at_rollout_parameters(batch):
    cfg = small_cfg()
    policy = build_policy(cfg)
    adv = prepared_advantages(batch, cfg)
    with torch.no_grad():
        total, surr, _ = batch_loss(policy, batch, np.arange(len(batch)), cfg, adv)
    # ratio == 1 so the surrogate reduces to the mean advantage
    assert surr.item() == pytest.approx(adv.mean(), abs=1e-5)


def test_clipped_surrogate_cases():
    ratio = torch.tensor([0.5, 1.5, 0.5, 1.5, 1.0])
    adv = torch.tensor([1.0, 1.0, -1.0, -1.0, 2.0])
    got = clipped_surrogate(ratio, adv, 0.2).tolist()
    assert got == pytest.approx([0.5, 1.2, -0.8, -1.5, 2.0])


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 5), st.floats(-5, 5), st.floats(0.05, 0.5))
def test_surrogate_is_pessimistic(rho, adv, eps):
    r, a = torch.tensor([rho], dtype=torch.float64), torch.tensor([adv], dtype=torch.float64)
    assert clipped_surrogate(r, a, eps).item() <= rho * adv + 1e-12


def test_ppo_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    logits = torch.tensor(rng.normal(size=(6, 4)), requires_grad=True)
    old = torch.log_softmax(torch.tensor(rng.normal(size=(6, 4))), -1)[:, 0]
    adv, ret = torch.tensor(rng.normal(size=6)), torch.tensor(rng.normal(size=6))
    vals = torch.tensor(rng.normal(size=6), requires_grad=True)

    def f(lg, v):
        return ppo_loss(torch.log_softmax(lg, -1)[:, 0], old, adv, v, ret, 0.2, 0.5)[0]

    f(logits, vals).backward()
    h = 1e-6
    for i in range(6):
        for j in range(4):
            e = torch.zeros_like(logits)
            e[i, j] = h
            fd = (f(logits + e, vals) - f(logits - e, vals)).item() / (2 * h)
            assert logits.grad[i, j].item() == pytest.approx(fd, abs=1e-7)
        e = torch.zeros_like(vals)
        e[i] = h
        fd = (f(logits, vals + e) - f(logits, vals - e)).item() / (2 * h)
        assert vals.grad[i].item() == pytest.approx(fd, abs=1e-7)


def test_value_coefficient():
    z = torch.zeros(3)
    total, surr, vloss = ppo_loss(z, z, z, torch.tensor([1.0, 2.0, 3.0]), z, 0.2, 0.5)
    assert vloss.item() == pytest.approx(14 / 3)
    assert total.item() == pytest.approx(0.5 * 14 / 3)


def test_learning_rate_schedule():
    cfg = TrainConfig(lr=1e-4)
    assert learning_rate(cfg, 0) == 1e-4
    assert learning_rate(cfg, 63) == 1e-4
    assert learning_rate(cfg, 64) == pytest.approx(0.96e-4)
    assert learning_rate(cfg, 640) == pytest.approx(1e-4 * 0.96 ** 10)


def test_curriculum_schedule():
    cfg = TrainConfig()
    assert curriculum_speed(cfg, 0) == 0.0
    assert curriculum_speed(cfg, 5000) == pytest.approx(0.05)
    assert curriculum_speed(cfg, 10000) == pytest.approx(0.1)
    assert curriculum_speed(cfg, 50000) == pytest.approx(0.1)


def test_update_reduces_frozen_loss(batch):
    cfg = small_cfg(lr=1e-3)
    policy = build_policy(cfg)
    before = frozen_batch_loss(policy, batch, cfg)
    opt = torch.optim.Adam(policy.parameters(), lr=cfg.lr)
    hist = ppo_update(policy, opt, batch, cfg, np.random.default_rng(0))
    assert len(hist) == cfg.epochs
    assert frozen_batch_loss(policy, batch, cfg) < before


def test_nonfinite_loss_raises(batch):
    cfg = small_cfg()
    policy = build_policy(cfg)
    bad = type(batch)(**{k: getattr(batch, k) for k in batch.__dataclass_fields__})
    bad.returns = batch.returns.copy()
    bad.returns[0] = np.nan
    opt = torch.optim.Adam(policy.parameters())
    with pytest.raises(NonFiniteLoss):
        ppo_update(policy, opt, bad, cfg, np.random.default_rng(0))


def test_training_reproducible(tmp_path):
    runs = []
    for name in ("a", "b"):
        cfg = small_cfg(out_dir=str(tmp_path / name))
        policy, rows = train(cfg)
        runs.append((rows, {k: v.clone() for k, v in policy.state_dict().items()}))
    assert runs[0][0] == runs[1][0]
    for k in runs[0][1]:
        assert torch.equal(runs[0][1][k], runs[1][1][k])
    assert (tmp_path / "a" / "final" / "manifest.json").exists()
    assert (tmp_path / "a" / "curves.csv").read_text() == (tmp_path / "b" / "curves.csv").read_text()


def test_best_on_validation_keeps_best(batch):
    cfg = small_cfg()
    sc = make_scenario(EnvConfig(num_targets=2, speed_ratio=0.05, seed=1), num_nodes=30)
    select = BestOnValidation([sc], cfg, T=10, every=2)
    policy = build_policy(cfg)
    select(1, policy)
    assert select.history == []
    select(2, policy)
    first = {k: v.clone() for k, v in policy.state_dict().items()}
    assert select.best_episode == 2 and select.best_score == pytest.approx(
        greedy_reward(policy, sc, cfg, 10))
    with torch.no_grad():
        for p in policy.parameters():
            p.add_(1.0)
    select.best_score = np.inf   # nothing later can beat it
    select(4, policy)
    assert select.best_episode == 2 and len(select.history) == 2
    select.restore(policy)
    for k, v in policy.state_dict().items():
        assert torch.equal(v, first[k])
