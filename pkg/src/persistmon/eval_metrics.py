"""Reward signal and evaluation metrics over ground-truth target areas."""

import csv
from dataclasses import dataclass, field

import numpy as np

from .belief_gp import stamp

LOST_THRESHOLD = 0.9
LN2 = np.log(2.0)


class EmptyArea(ValueError):
    pass


class EvalGrid:
    """Uniform ``n x n`` grid over the unit square (pitch ``1/(n-1)``)."""

    def __init__(self, n=30, radius=0.1):
        g = np.linspace(0.0, 1.0, n)
        xx, yy = np.meshgrid(g, g, indexing="xy")
        self.points = np.column_stack([xx.ravel(), yy.ravel()])
        self.radius = radius

    def __len__(self):
        return len(self.points)

    def area_mask(self, target_pos):
        d = np.linalg.norm(self.points - np.asarray(target_pos, dtype=float), axis=1)
        return d <= self.radius + 1e-12

    def area_points(self, target_pos):
        return self.points[self.area_mask(target_pos)]


def target_area_uncertainty(belief, target_pos, grid, t):
    """Mean posterior std over the grid points inside the target's area at time ``t``."""
    pts = grid.area_points(target_pos)
    if len(pts) == 0:
        raise EmptyArea("target area contains no grid points")
    if belief is None:
        return 1.0
    return float(np.mean(belief.regress(stamp(pts, t)).std))


def reward(sigma_prev, sigma_now):
    """Sum of per-target uncertainty decreases; increases are ignored."""
    prev = np.asarray(sigma_prev, dtype=float)
    now = np.asarray(sigma_now, dtype=float)
    if prev.shape != now.shape:
        raise ValueError("uncertainty vectors differ in length")
    return float(np.sum(np.maximum(prev - now, 0.0)))


def ground_truth_field(points, target_pos, std=0.1):
    d2 = np.sum((np.asarray(points) - np.asarray(target_pos)) ** 2, axis=1)
    return np.exp(-0.5 * d2 / std ** 2)


def jsd(p, q):
    """Jensen-Shannon divergence (natural log) between two non-negative fields.

    Both inputs are normalised to sum to one first.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = np.where(p > 0, p * np.log(p / m), 0.0)
        kl_q = np.where(q > 0, q * np.log(q / m), 0.0)
    return float(min(max(0.5 * kl_p.sum() + 0.5 * kl_q.sum(), 0.0), LN2))


def belief_jsd(mean_field, target_pos, grid, gt_std=0.1):
    belief = np.clip(np.asarray(mean_field, dtype=float), 1e-12, 1e6)
    return jsd(belief, ground_truth_field(grid.points, target_pos, gt_std))


def jsd_metric(mean_fields, true_positions, grid):
    """Average JSD over targets for one evaluation instant."""
    return float(np.mean([belief_jsd(m, y, grid) for m, y in zip(mean_fields, true_positions)]))


@dataclass
class MetricTrace:
    num_targets: int
    times: list = field(default_factory=list)
    sigma: list = field(default_factory=list)      # per instant: per-target sigma-bar
    counts: list = field(default_factory=list)     # per instant: cumulative z=1 counts
    jsd: list = field(default_factory=list)        # per instant: per-target JSD

    def record(self, t, sigma, counts, jsd_values=None):
        self.times.append(float(t))
        self.sigma.append([float(s) for s in sigma])
        self.counts.append([int(c) for c in counts])
        if jsd_values is not None:
            self.jsd.append([float(j) for j in jsd_values])

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        n = self.num_targets
        header = (["time"] + [f"sigma_{i}" for i in range(n)]
                  + [f"obs_{i}" for i in range(n)]
                  + ([f"jsd_{i}" for i in range(n)] if self.jsd else []))
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(header)
            for k, t in enumerate(self.times):
                row = [f"{t:.10g}"] + [f"{s:.10g}" for s in self.sigma[k]] + self.counts[k]
                if self.jsd:
                    row += [f"{j:.10g}" for j in self.jsd[k]]
                w.writerow(row)


def unc_metric(trace):
    """Time-averaged mean target-area uncertainty and the spread between targets."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    s = np.asarray(trace.sigma, dtype=float)
    per_target = s.mean(axis=0)
    return float(s.mean()), float(per_target.std())


def minob_metric(trace):
    if len(trace) == 0:
        return 0
    return int(min(trace.counts[-1]))


def mean_jsd(trace):
    if not trace.jsd:
        return float("nan")
    return float(np.mean(trace.jsd))


def lost_targets(sigma):
    return [i for i, s in enumerate(sigma) if s > LOST_THRESHOLD]
