"""Spatio-temporal attention policy: target, temporal and spatial encoders,
then a pointer-style decoder over the current node's neighbours."""

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .nn_core import TransformerBlock, masked_softmax

DIST_SCALE = math.sqrt(2.0)


class EmptyNeighborSet(ValueError):
    pass


@dataclass
class PolicyOutput:
    action_probs: torch.Tensor     # (B, K), zero on padded neighbours
    log_probs: torch.Tensor        # (B, K), -inf on padded neighbours
    value_estimate: torch.Tensor   # (B,)
    attention_traces: dict | None = None


def collate(observations, dtype=torch.float32):
    """Stack observations sharing |V|, N and window count into batched tensors."""
    obs = list(observations)
    k_max = max(len(o.neighbor_indices) for o in obs)
    if min(len(o.neighbor_indices) for o in obs) == 0:
        raise EmptyNeighborSet("an observation has no neighbours")
    nb = np.zeros((len(obs), k_max), dtype=np.int64)
    nb_mask = np.zeros((len(obs), k_max), dtype=bool)
    for b, o in enumerate(obs):
        nb[b, :len(o.neighbor_indices)] = o.neighbor_indices
        nb_mask[b, :len(o.neighbor_indices)] = True

    def stack(attr):
        return torch.as_tensor(np.stack([getattr(o, attr) for o in obs]), dtype=dtype)

    return {
        "coords": stack("node_coords"),
        "target_features": stack("target_features"),
        "tags": stack("traj_length_tags"),
        "temporal_mask": torch.as_tensor(np.stack([o.temporal_mask for o in obs])),
        "dist": stack("dijkstra_to_current"),
        "spectral": stack("spectral_features"),
        "current": torch.as_tensor([o.current_node_index for o in obs], dtype=torch.int64),
        "neighbors": torch.as_tensor(nb),
        "neighbor_mask": torch.as_tensor(nb_mask),
    }


class PolicyNet(nn.Module):
    def __init__(self, d=128, heads=4, target_dim=4, spectral_dim=8, decoder_init_std=1e-3):
        super().__init__()
        self.config = {"d": d, "heads": heads, "target_dim": target_dim,
                       "spectral_dim": spectral_dim}
        self.d = d
        self.coord_embed = nn.Linear(2, d)
        self.target_embed = nn.Linear(target_dim, d)
        self.target_encoder = TransformerBlock(d, heads)
        self.tag_embed = nn.Linear(1, d)
        self.temporal_encoder = TransformerBlock(d, heads)
        self.spectral_embed = nn.Linear(spectral_dim, d)
        self.spatial_encoder = TransformerBlock(d, heads)
        self.dist_proj = nn.Linear(d + 1, d)
        self.dec_q = nn.Linear(d, d, bias=False)
        self.dec_k = nn.Linear(d, d, bias=False)
        self.value_head = nn.Linear(d, 1)
        nn.init.normal_(self.dec_q.weight, std=decoder_init_std)
        nn.init.normal_(self.dec_k.weight, std=decoder_init_std)

    def encode_targets(self, coords, target_features):
        """coords ``(B, V, 2)``, target_features ``(B, W, V, N, F)`` -> ``(B, W, V, d)``."""
        B, W, V, N, _ = target_features.shape
        h_c = self.coord_embed(coords)                          # (B, V, d)
        h_g = self.target_embed(target_features)                # (B, W, V, N, d)
        q = h_c.unsqueeze(1).expand(B, W, V, self.d).unsqueeze(-2)  # (B, W, V, 1, d)
        out, scores = self.target_encoder(q, h_g)
        return out.squeeze(-2), scores

    def encode_temporal(self, h_g, tags, temporal_mask):
        """h_g ``(B, W, V, d)``; mask True marks padded windows -> ``(B, V, d)``."""
        B, W, V, d = h_g.shape
        h = h_g + self.tag_embed(tags.unsqueeze(-1)).unsqueeze(2)   # (B, W, V, d)
        h = h.transpose(1, 2)                                        # (B, V, W, d)
        q = h[:, :, :1]
        keep = (~temporal_mask).view(B, 1, 1, W)
        out, scores = self.temporal_encoder(q, h, keep)
        return out.squeeze(2), scores

    def encode_spatial(self, h_tg, spectral):
        h = h_tg + self.spectral_embed(spectral)
        return self.spatial_encoder(h, h)

    def decode(self, h_stg, dist, current, neighbors, neighbor_mask=None):
        if neighbors.shape[-1] == 0:
            raise EmptyNeighborSet("current node has no neighbours")
        if neighbor_mask is None:
            neighbor_mask = torch.ones_like(neighbors, dtype=torch.bool)
        h = self.dist_proj(torch.cat([h_stg, (dist / DIST_SCALE).unsqueeze(-1)], dim=-1))
        idx = torch.arange(h.shape[0])
        h_cur = h[idx, current]                                     # (B, d)
        h_nb = h[idx.unsqueeze(-1), neighbors]                      # (B, K, d)
        scores = (self.dec_k(h_nb) @ self.dec_q(h_cur).unsqueeze(-1)).squeeze(-1) / math.sqrt(self.d)
        probs = masked_softmax(scores, neighbor_mask)
        logp = torch.log_softmax(scores.masked_fill(~neighbor_mask, float("-inf")), dim=-1)
        value = self.value_head(h_cur).squeeze(-1)
        return probs, logp, value

    def forward(self, batch, trace=False):
        h_g, s_t = self.encode_targets(batch["coords"], batch["target_features"])
        h_tg, s_w = self.encode_temporal(h_g, batch["tags"], batch["temporal_mask"])
        h_stg, s_v = self.encode_spatial(h_tg, batch["spectral"])
        probs, logp, value = self.decode(h_stg, batch["dist"], batch["current"],
                                         batch["neighbors"], batch["neighbor_mask"])
        traces = None
        if trace:
            traces = {"target": s_t.detach(), "temporal": s_w.detach(),
                      "spatial": s_v.detach(), "decoder": probs.detach()}
        return PolicyOutput(probs, logp, value, traces)

    def act(self, obs, greedy=True, rng=None):
        """Choose a neighbour position for one observation; returns ``(index, log_prob, value)``."""
        with torch.no_grad():
            out = self(collate([obs], self.value_head.weight.dtype))
        p = out.action_probs[0].double().numpy()
        if greedy:
            a = int(np.argmax(p))
        else:
            p = p / p.sum()
            a = int(rng.choice(len(p), p=p))
        return a, float(out.log_probs[0, a]), float(out.value_estimate[0])


def export_attention(traces, path, decision=None):
    """Dump attention scores of one forward pass as JSON lists."""
    payload = {k: v.cpu().numpy().tolist() for k, v in traces.items()}
    if decision is not None:
        payload["decision"] = decision
    with open(path, "w") as f:
        json.dump(payload, f)
