"""Per-target spatio-temporal GP belief over space x time.

Each target keeps a window of timestamped binary readings and is conditioned
noiselessly (up to a small diagonal jitter) under a zero-mean, unit-variance
prior with an anisotropic Matern 3/2 kernel.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import brentq

SQRT3 = np.sqrt(3.0)
EVICTION_FACTOR = 1.993
JITTER = 1e-8
MAX_JITTER = 1e-4


class FactorizationFailure(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelParams:
    l_spatial: float = 0.1
    l_temporal: float = 3.0
    prior_variance: float = 1.0
    prior_mean: float = 0.0

    def __post_init__(self):
        if self.l_spatial <= 0 or self.l_temporal <= 0:
            raise ValueError("length scales must be positive")

    @property
    def eviction_horizon(self):
        return EVICTION_FACTOR * self.l_temporal

    @property
    def scales(self):
        return np.array([self.l_spatial, self.l_spatial, self.l_temporal])


def matern32(a, b, params=KernelParams()):
    """Kernel value between two (x, y, t) points."""
    d = np.sqrt(np.sum(((np.asarray(a, float) - np.asarray(b, float)) / params.scales) ** 2))
    return params.prior_variance * (1.0 + SQRT3 * d) * np.exp(-SQRT3 * d)


def matern32_matrix(A, B, params=KernelParams()):
    A = np.asarray(A, dtype=float).reshape(-1, 3) / params.scales
    B = np.asarray(B, dtype=float).reshape(-1, 3) / params.scales
    diff = A[:, None, :] - B[None, :, :]
    r = SQRT3 * np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return params.prior_variance * (1.0 + r) * np.exp(-r)


def eviction_lag(threshold=0.99, params=KernelParams()):
    """Purely temporal lag at which the posterior std from one reading reaches ``threshold``.

    Solves ``sqrt(1 - k(lag)^2) = threshold`` for the unit-variance kernel.
    """
    target_k = np.sqrt(1.0 - threshold ** 2)

    def f(lag):
        x = SQRT3 * lag / params.l_temporal
        return (1.0 + x) * np.exp(-x) - target_k

    return brentq(f, 0.0, 100.0 * params.l_temporal, xtol=1e-14)


@dataclass
class BeliefField:
    query_points: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"query_points": self.query_points.tolist(),
                "mean": self.mean.tolist(), "std": self.std.tolist()}


class TargetBelief:
    """GP posterior for one target, built from its active window of readings."""

    def __init__(self, params=KernelParams()):
        self.params = params
        self.X = np.zeros((0, 3))
        self.z = np.zeros(0)
        self._chol = None
        self._alpha = None

    def __len__(self):
        return len(self.z)

    @property
    def eviction_horizon(self):
        return self.params.eviction_horizon

    def add(self, x, y, t, z):
        self.add_many(np.array([[x, y, t]]), np.array([z], dtype=float))
        return self

    def add_many(self, X, z):
        X = np.asarray(X, dtype=float).reshape(-1, 3)
        z = np.asarray(z, dtype=float).reshape(-1)
        if len(z) == 0:
            return self
        X = np.vstack([self.X, X])
        z = np.concatenate([self.z, z])
        # duplicate timestamped locations: keep the latest value
        _, first_rev = np.unique(X[::-1], axis=0, return_index=True)
        keep = np.sort(len(X) - 1 - first_rev)
        self.X, self.z = X[keep], z[keep]
        self._chol = None
        return self

    def evict(self, current_time):
        keep = (current_time - self.X[:, 2]) < self.eviction_horizon
        if not keep.all():
            self.X, self.z = self.X[keep], self.z[keep]
            self._chol = None
        return self

    def _factorize(self):
        if self._chol is not None or len(self.z) == 0:
            return
        K = matern32_matrix(self.X, self.X, self.params)
        jitter = JITTER
        while True:
            try:
                chol = cho_factor(K + jitter * np.eye(len(K)), lower=True, check_finite=False)
                if np.all(np.diag(chol[0]) > 0):
                    break
            except np.linalg.LinAlgError:
                pass
            jitter *= 10.0
            if jitter > MAX_JITTER * (1 + 1e-9):
                raise FactorizationFailure(
                    "Gram matrix not positive definite; duplicate readings?")
        self._chol = chol
        resid = self.z - self.params.prior_mean
        self._alpha = cho_solve(chol, resid, check_finite=False)

    def regress(self, queries):
        Q = np.asarray(queries, dtype=float).reshape(-1, 3)
        pv = self.params.prior_variance
        if len(self.z) == 0:
            return BeliefField(Q, np.full(len(Q), self.params.prior_mean),
                               np.full(len(Q), np.sqrt(pv)))
        self._factorize()
        Kqx = matern32_matrix(Q, self.X, self.params)
        mean = self.params.prior_mean + Kqx @ self._alpha
        v = solve_triangular(self._chol[0], Kqx.T, lower=True, check_finite=False)
        var = np.clip(pv - np.sum(v ** 2, axis=0), 0.0, pv)
        return BeliefField(Q, mean, np.sqrt(var))

    def predict_future(self, points, t, dt=2.0):
        """Regress at 2-D ``points`` stamped ``t + dt``."""
        return self.regress(stamp(points, t + dt))

    def copy(self):
        b = TargetBelief(self.params)
        b.X, b.z = self.X.copy(), self.z.copy()
        return b


def stamp(points, t):
    """Attach timestamp ``t`` to an array of 2-D points."""
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.column_stack([P, np.full(len(P), float(t))])


def regress(belief, queries):
    return belief.regress(queries)


def evict(belief, current_time):
    return belief.evict(current_time)


def predict_future(belief, points, t, dt=2.0):
    return belief.predict_future(points, t, dt)


def export_field(field, path):
    """Write a belief snapshot as ``.json`` or ``.csv`` (columns x, y, t, mean, std)."""
    path = str(path)
    if path.endswith(".json"):
        with open(path, "w") as f:
            json.dump(field.to_dict(), f)
        return
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["x", "y", "t", "mean", "std"])
        for q, m, s in zip(field.query_points, field.mean, field.std):
            w.writerow([repr(float(q[0])), repr(float(q[1])), repr(float(q[2])),
                        repr(float(m)), repr(float(s))])
