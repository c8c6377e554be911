"""Probabilistic roadmap over the unit square with shortest paths and spectral features."""

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

NUM_EIGVECS = 8


class ConnectivityFailure(RuntimeError):
    pass


@dataclass
class Roadmap:
    nodes: np.ndarray            # (V, 2)
    neighbors: list              # sorted neighbor index arrays, symmetric
    seed: int | None = None
    k: int = 10
    _features: np.ndarray | None = None
    _weights: csr_matrix | None = None

    def __len__(self):
        return len(self.nodes)

    @property
    def edges(self):
        return [(i, int(j)) for i, nb in enumerate(self.neighbors) for j in nb if i < j]

    def weight_matrix(self):
        if self._weights is not None:
            return self._weights
        rows, cols, w = [], [], []
        for i, nb in enumerate(self.neighbors):
            for j in nb:
                rows.append(i)
                cols.append(j)
                w.append(float(np.linalg.norm(self.nodes[i] - self.nodes[j])))
        n = len(self.nodes)
        self._weights = csr_matrix((w, (rows, cols)), shape=(n, n))
        return self._weights

    def is_connected(self):
        return _connected(self.neighbors)

    def spectral(self, m=NUM_EIGVECS):
        if self._features is None or self._features.shape[1] != m:
            self._features = spectral_features(self, m)
        return self._features

    def to_dict(self):
        return {"nodes": self.nodes.tolist(), "edges": self.edges,
                "seed": self.seed, "k": self.k}

    @classmethod
    def from_dict(cls, d):
        nodes = np.asarray(d["nodes"], dtype=float)
        adj = [set() for _ in range(len(nodes))]
        for i, j in d["edges"]:
            adj[i].add(j)
            adj[j].add(i)
        return cls(nodes, [np.array(sorted(a), dtype=int) for a in adj],
                   d.get("seed"), d.get("k", 10))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _connected(neighbors):
    n = len(neighbors)
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    q = deque([0])
    while q:
        u = q.popleft()
        for v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                q.append(v)
    return bool(seen.all())


def knn_neighbors(nodes, k):
    """Symmetrized k-nearest-neighbor adjacency."""
    tree = cKDTree(nodes)
    _, idx = tree.query(nodes, k=k + 1)
    adj = [set() for _ in range(len(nodes))]
    for i, row in enumerate(idx):
        for j in row:
            if j != i:
                adj[i].add(int(j))
                adj[int(j)].add(i)
    return [np.array(sorted(a), dtype=int) for a in adj]


def build_roadmap(num_nodes, k=10, rng=None, max_attempts=100, seed=None):
    if num_nodes < k + 1:
        raise ValueError("num_nodes must be at least k + 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        nodes = rng.uniform(0.0, 1.0, size=(num_nodes, 2))
        nb = knn_neighbors(nodes, k)
        if _connected(nb):
            return Roadmap(nodes, nb, seed, k)
    raise ConnectivityFailure(f"no connected roadmap after {max_attempts} attempts")


def dijkstra_from(roadmap, source):
    return dijkstra(roadmap.weight_matrix(), directed=False, indices=int(source))


def normalized_laplacian(roadmap):
    n = len(roadmap)
    A = np.zeros((n, n))
    for i, nb in enumerate(roadmap.neighbors):
        A[i, nb] = 1.0
    deg = A.sum(1)
    inv_sqrt = np.where(deg > 0, 1.0 / np.sqrt(np.maximum(deg, 1e-300)), 0.0)
    return np.eye(n) - inv_sqrt[:, None] * A * inv_sqrt[None, :]


def spectral_features(roadmap, m=NUM_EIGVECS):
    """Eigenvectors of the normalized Laplacian for the ``m`` smallest nontrivial eigenvalues.

    Each column's sign is fixed so that its largest-magnitude entry is positive.
    If the graph has fewer than ``m + 1`` nodes the remaining columns are zero.
    """
    n = len(roadmap)
    if n == 1:
        return np.zeros((1, m))
    L = normalized_laplacian(roadmap)
    _, vecs = np.linalg.eigh(L)
    vecs = vecs[:, 1:m + 1]
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    vecs = vecs * np.where(signs == 0, 1.0, signs)
    if vecs.shape[1] < m:
        vecs = np.hstack([vecs, np.zeros((n, m - vecs.shape[1]))])
    return vecs
