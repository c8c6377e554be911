"""Policy input: pooled history of belief-augmented roadmaps plus graph features."""

import math
from dataclasses import dataclass

import numpy as np

from .belief_gp import EVICTION_FACTOR, KernelParams, stamp
from .roadmap import NUM_EIGVECS, dijkstra_from

FUTURE_DT = 2.0
TAG_SCALE = EVICTION_FACTOR * KernelParams().l_temporal


def snapshot(beliefs, nodes, t, future=True, dt=FUTURE_DT):
    """Per-node belief features, shape ``(V, N, 4)`` (or ``(V, N, 2)`` without future).

    ``beliefs`` entries may be ``None`` for a target with no readings (prior).
    Feature order per target: mean now, std now, mean at ``t + dt``, std at ``t + dt``.
    """
    nodes = np.asarray(nodes, dtype=float)
    width = 4 if future else 2
    out = np.empty((len(nodes), len(beliefs), width))
    now = stamp(nodes, t)
    later = stamp(nodes, t + dt)
    for i, b in enumerate(beliefs):
        if b is None:
            out[:, i, 0::2] = 0.0
            out[:, i, 1::2] = 1.0
            continue
        f = b.regress(now)
        out[:, i, 0], out[:, i, 1] = f.mean, f.std
        if future:
            g = b.regress(later)
            out[:, i, 2], out[:, i, 3] = g.mean, g.std
    return out


@dataclass
class ObservationSequence:
    node_coords: np.ndarray        # (V, 2)
    target_features: np.ndarray    # (T', V, N, F), most recent window first
    traj_length_tags: np.ndarray   # (T',)
    temporal_mask: np.ndarray      # (T',) True where the window predates the episode
    dijkstra_to_current: np.ndarray  # (V,)
    spectral_features: np.ndarray  # (V, m)
    current_node_index: int
    neighbor_indices: np.ndarray

    @property
    def num_windows(self):
        return len(self.traj_length_tags)


def _pad_targets(snap, n):
    if snap.shape[1] == n:
        return snap
    pad = np.zeros((snap.shape[0], n - snap.shape[1], snap.shape[2]))
    pad[..., 1::2] = 1.0
    return np.concatenate([snap, pad], axis=1)


def pool_history(history, times, T, s, tag_scale=TAG_SCALE):
    """Average-pool the last ``T`` snapshots in windows of ``s`` (most recent first).

    ``history`` is oldest-first; windows partially before the episode start
    average only the snapshots that exist, fully missing windows are zeroed
    and flagged in the returned mask.  Each window's tag is the path length
    since its oldest snapshot divided by ``tag_scale``.
    """
    if T < 1 or s < 1:
        raise ValueError("T and s must be >= 1")
    cur = len(history) - 1
    n = max(h.shape[1] for h in history)
    V, _, F = history[-1].shape
    nw = math.ceil(T / s)
    feats = np.zeros((nw, V, n, F))
    tags = np.zeros(nw)
    mask = np.ones(nw, dtype=bool)
    t_now = times[cur]
    oldest_allowed = cur - T + 1
    for w in range(nw):
        hi = cur - w * s
        lo = max(cur - (w + 1) * s + 1, oldest_allowed, 0)
        if hi < lo:
            continue
        window = [_pad_targets(history[k], n) for k in range(lo, hi + 1)]
        feats[w] = np.mean(window, axis=0)
        tags[w] = (t_now - times[lo]) / tag_scale
        mask[w] = False
    return feats, tags, mask


def build_observation(history, times, roadmap, current_node, T, s, tag_scale=TAG_SCALE,
                      m=NUM_EIGVECS):
    feats, tags, mask = pool_history(history, times, T, s, tag_scale)
    return ObservationSequence(
        node_coords=roadmap.nodes,
        target_features=feats,
        traj_length_tags=tags,
        temporal_mask=mask,
        dijkstra_to_current=dijkstra_from(roadmap, current_node),
        spectral_features=roadmap.spectral(m),
        current_node_index=int(current_node),
        neighbor_indices=np.asarray(roadmap.neighbors[current_node], dtype=int),
    )
