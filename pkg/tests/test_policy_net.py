import json
from dataclasses import replace

import numpy as np
import pytest
import torch

from persistmon.obs_builder import ObservationSequence, build_observation
from persistmon.policy_net import EmptyNeighborSet, PolicyNet, collate, export_attention
from persistmon.roadmap import build_roadmap


@pytest.fixture(autouse=True)
def _double():
    prev = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(prev)


def make_net(seed=0, **kw):
    torch.manual_seed(seed)
    kw.setdefault("d", 32)
    return PolicyNet(**kw).double()


def random_obs(V=30, N=3, W=4, k=6, seed=0, masked=1):
    rm = build_roadmap(V, k, seed=seed)
    rng = np.random.default_rng(seed)
    hist = [rng.uniform(size=(V, N, 4)) for _ in range(5 * (W - masked))]
    times = list(np.cumsum(rng.uniform(0.1, 0.2, size=len(hist))))
    return build_observation(hist, times, rm, int(rng.integers(V)), T=5 * W, s=5)


def probs(net, obs):
    with torch.no_grad():
        out = net(collate([obs], torch.float64))
    return out.action_probs[0].numpy(), out.value_estimate[0].item()


def test_output_is_distribution():
    net, obs = make_net(), random_obs()
    p, v = probs(net, obs)
    assert p.shape == (len(obs.neighbor_indices),)
    assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(v)


def test_target_permutation_invariance():
    net, obs = make_net(), random_obs()
    perm = [2, 0, 1]
    shuffled = replace(obs, target_features=obs.target_features[:, :, perm])
    np.testing.assert_allclose(probs(net, shuffled)[0], probs(net, obs)[0], atol=1e-12)


def test_duplicate_target_collapses():
    net, obs = make_net(), random_obs(N=2)
    dup = replace(obs, target_features=np.concatenate(
        [obs.target_features, obs.target_features], axis=2))
    np.testing.assert_allclose(probs(net, dup)[0], probs(net, obs)[0], atol=1e-12)


def test_masked_windows_are_opaque():
    net, obs = make_net(), random_obs(W=4, masked=2)
    assert obs.temporal_mask.sum() == 2
    tf = obs.target_features.copy()
    tags = obs.traj_length_tags.copy()
    tf[obs.temporal_mask] = np.random.default_rng(9).uniform(size=tf[obs.temporal_mask].shape)
    tags[obs.temporal_mask] = 7.5
    p0, v0 = probs(net, obs)
    p1, v1 = probs(net, replace(obs, target_features=tf, traj_length_tags=tags))
    np.testing.assert_array_equal(p0, p1)
    assert v0 == v1


def test_tags_matter():
    net, obs = make_net(decoder_init_std=0.3), random_obs(W=4, masked=0)
    bumped = replace(obs, traj_length_tags=obs.traj_length_tags * 3 + 0.5)
    assert np.abs(probs(net, bumped)[0] - probs(net, obs)[0]).max() > 1e-9


def test_spectral_features_matter():
    net, obs = make_net(decoder_init_std=0.3), random_obs()
    flat = replace(obs, spectral_features=np.zeros_like(obs.spectral_features))
    assert np.abs(probs(net, flat)[0] - probs(net, obs)[0]).max() > 1e-9


def test_node_relabel_equivariance():
    net, obs = make_net(decoder_init_std=0.3), random_obs()
    V = len(obs.node_coords)
    perm = np.random.default_rng(3).permutation(V)
    inv = np.argsort(perm)
    moved = ObservationSequence(
        node_coords=obs.node_coords[perm],
        target_features=obs.target_features[:, perm],
        traj_length_tags=obs.traj_length_tags,
        temporal_mask=obs.temporal_mask,
        dijkstra_to_current=obs.dijkstra_to_current[perm],
        spectral_features=obs.spectral_features[perm],
        current_node_index=int(inv[obs.current_node_index]),
        neighbor_indices=inv[obs.neighbor_indices],
    )
    np.testing.assert_allclose(probs(net, moved)[0], probs(net, obs)[0], atol=1e-10)


def test_single_neighbor_probability_one():
    net, obs = make_net(), random_obs()
    one = replace(obs, neighbor_indices=obs.neighbor_indices[:1])
    assert probs(net, one)[0].tolist() == [1.0]


def test_empty_neighbor_set():
    with pytest.raises(EmptyNeighborSet):
        collate([replace(random_obs(), neighbor_indices=np.zeros(0, dtype=int))])


@pytest.mark.parametrize("k", [3, 10, 25])
def test_neighbor_counts(k):
    obs = random_obs(V=60, k=k, seed=k)
    p, _ = probs(make_net(), obs)
    assert len(p) == len(obs.neighbor_indices) >= k


def test_near_uniform_at_init():
    obs = random_obs()
    K = len(obs.neighbor_indices)
    for seed in range(100):
        p, _ = probs(make_net(seed), obs)
        assert np.abs(p - 1 / K).max() < 0.05 / K


def test_padded_batch_matches_single():
    net = make_net(decoder_init_std=0.3)
    a = random_obs(seed=1)
    b = replace(random_obs(seed=1), neighbor_indices=a.neighbor_indices[:2])
    with torch.no_grad():
        out = net(collate([a, b], torch.float64))
    np.testing.assert_allclose(out.action_probs[0].numpy(), probs(net, a)[0], atol=1e-12)
    np.testing.assert_allclose(out.action_probs[1, :2].numpy(), probs(net, b)[0], atol=1e-12)
    assert torch.all(out.action_probs[1, 2:] == 0)
    assert torch.all(torch.isinf(out.log_probs[1, 2:]))


def test_greedy_act_is_argmax():
    net, obs = make_net(decoder_init_std=0.3), random_obs()
    a, logp, _ = net.act(obs, greedy=True)
    p, _ = probs(net, obs)
    assert a == int(np.argmax(p)) and logp == pytest.approx(np.log(p[a]))


def test_attention_export(tmp_path):
    net, obs = make_net(), random_obs(V=20, N=2, W=3, k=5)
    with torch.no_grad():
        out = net(collate([obs], torch.float64), trace=True)
    export_attention(out.attention_traces, tmp_path / "att.json", decision=1)
    data = json.loads((tmp_path / "att.json").read_text())
    assert set(data) == {"target", "temporal", "spatial", "decoder", "decision"}
    assert np.array(data["spatial"]).shape == (1, 20, 4, 20)
    np.testing.assert_allclose(np.array(data["temporal"]).sum(-1), 1.0, atol=1e-9)
