"""Attention building blocks and checkpoint I/O on top of torch.

Reverse-mode gradients come from torch autograd; this module adds the
masked multi-head attention with post-norm residuals that the policy uses and
a portable checkpoint format (JSON manifest + flat little-endian float32).
"""

import json
import math
import os

import numpy as np
import torch
from torch import nn

CHECKPOINT_FORMAT = "persistmon-checkpoint/1"


class ShapeMismatch(ValueError):
    pass


class AllMaskedRow(ValueError):
    pass


def masked_softmax(scores, mask=None):
    """Softmax over the last axis; ``mask`` is True where attention is allowed."""
    if mask is not None:
        if not bool(mask.any(dim=-1).all()):
            raise AllMaskedRow("a query row has every key masked")
        scores = scores.masked_fill(~mask, float("-inf"))
    return torch.softmax(scores, dim=-1)


class AttentionLayer(nn.Module):
    """Multi-head cross attention followed by a residual connection and layer norm.

    ``forward(h_q, h_kv, mask)`` takes queries ``(..., n_q, d)``, keys/values
    ``(..., n_k, d)`` and an optional boolean mask broadcastable to
    ``(..., n_q, n_k)``; returns the normalised output and scores
    ``(..., n_q, heads, n_k)``.
    """

    def __init__(self, d, heads=4):
        super().__init__()
        if d % heads:
            raise ShapeMismatch(f"d={d} not divisible by heads={heads}")
        self.d, self.heads, self.d_head = d, heads, d // heads
        self.w_q = nn.Linear(d, d, bias=False)
        self.w_k = nn.Linear(d, d, bias=False)
        self.w_v = nn.Linear(d, d, bias=False)
        self.w_o = nn.Linear(d, d, bias=False)
        self.norm = nn.LayerNorm(d)

    def forward(self, h_q, h_kv, mask=None):
        if h_q.shape[-1] != self.d or h_kv.shape[-1] != self.d:
            raise ShapeMismatch("feature dimension does not match layer width")
        if h_q.shape[:-2] != h_kv.shape[:-2]:
            raise ShapeMismatch(f"batch shapes differ: {tuple(h_q.shape)} vs {tuple(h_kv.shape)}")
        *batch, n_q, _ = h_q.shape
        n_k = h_kv.shape[-2]
        q = self.w_q(h_q).reshape(*batch, n_q, self.heads, self.d_head).transpose(-2, -3)
        k = self.w_k(h_kv).reshape(*batch, n_k, self.heads, self.d_head).transpose(-2, -3)
        v = self.w_v(h_kv).reshape(*batch, n_k, self.heads, self.d_head).transpose(-2, -3)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.d_head)   # (..., H, n_q, n_k)
        if mask is not None:
            mask = mask.unsqueeze(-3)
        alpha = masked_softmax(scores, mask)
        out = (alpha @ v).transpose(-2, -3).reshape(*batch, n_q, self.d)
        return self.norm(h_q + self.w_o(out)), alpha.transpose(-2, -3)


class FeedForward(nn.Module):
    def __init__(self, d, hidden=None):
        super().__init__()
        hidden = hidden or 2 * d
        self.net = nn.Sequential(nn.Linear(d, hidden), nn.GELU(), nn.Linear(hidden, d))
        self.norm = nn.LayerNorm(d)

    def forward(self, h):
        return self.norm(h + self.net(h))


class TransformerBlock(nn.Module):
    """Attention sublayer then position-wise feed-forward sublayer, both post-norm."""

    def __init__(self, d, heads=4):
        super().__init__()
        self.attn = AttentionLayer(d, heads)
        self.ffn = FeedForward(d)

    def forward(self, h_q, h_kv, mask=None):
        h, scores = self.attn(h_q, h_kv, mask)
        return self.ffn(h), scores


def backward(loss, module):
    """Run reverse mode from a scalar loss; returns ``{name: grad}``."""
    module.zero_grad(set_to_none=True)
    loss.backward()
    return {n: p.grad for n, p in module.named_parameters() if p.grad is not None}


def save_checkpoint(module, path, meta=None):
    """Write ``path/manifest.json`` and ``path/weights.bin``."""
    os.makedirs(path, exist_ok=True)
    tensors, offset, chunks = [], 0, []
    for name, t in module.state_dict().items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False).ravel()
        tensors.append({"name": name, "shape": list(t.shape), "offset": offset, "count": arr.size})
        offset += arr.size
        chunks.append(arr)
    manifest = {"format": CHECKPOINT_FORMAT, "dtype": "float32", "byte_order": "little",
                "tensors": tensors, "meta": meta or {}}
    with open(os.path.join(path, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    flat = np.concatenate(chunks) if chunks else np.zeros(0, "<f4")
    flat.astype("<f4").tofile(os.path.join(path, "weights.bin"))


def read_checkpoint(path):
    with open(os.path.join(path, "manifest.json")) as f:
        manifest = json.load(f)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unknown checkpoint format {manifest.get('format')!r}")
    flat = np.fromfile(os.path.join(path, "weights.bin"), dtype="<f4")
    state = {}
    for t in manifest["tensors"]:
        arr = flat[t["offset"]:t["offset"] + t["count"]].reshape(t["shape"])
        state[t["name"]] = torch.from_numpy(arr.astype(np.float32))
    return manifest, state


def load_checkpoint(module, path):
    manifest, state = read_checkpoint(path)
    module.load_state_dict(state)
    return manifest
