"""Closed-tour heuristics: nearest-neighbor construction and 2-opt improvement.

Used both to shape the ground-truth target loops and by the TSP-loop baseline.
"""

import numpy as np


def tour_length(points, order):
    pts = np.asarray(points, dtype=float)[list(order)]
    return float(np.linalg.norm(pts - np.roll(pts, -1, axis=0), axis=1).sum())


def nearest_neighbor_tour(points, start=0):
    """Greedy closed tour starting at ``start``."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        return []
    unvisited = np.ones(n, dtype=bool)
    order = [start]
    unvisited[start] = False
    for _ in range(n - 1):
        last = pts[order[-1]]
        d = np.linalg.norm(pts - last, axis=1)
        d[~unvisited] = np.inf
        nxt = int(np.argmin(d))
        order.append(nxt)
        unvisited[nxt] = False
    return order


def two_opt(points, order, max_passes=100):
    """Improve a closed tour by segment reversal until no improving move remains."""
    pts = np.asarray(points, dtype=float)
    order = list(order)
    n = len(order)
    if n < 4:
        return order
    for _ in range(max_passes):
        improved = False
        for i in range(n - 1):
            a, b = pts[order[i]], pts[order[i + 1]]
            for j in range(i + 2, n if i > 0 else n - 1):
                c, d = pts[order[j]], pts[order[(j + 1) % n]]
                delta = (np.hypot(*(a - c)) + np.hypot(*(b - d))
                         - np.hypot(*(a - b)) - np.hypot(*(c - d)))
                if delta < -1e-12:
                    order[i + 1:j + 1] = order[i + 1:j + 1][::-1]
                    a, b = pts[order[i]], pts[order[i + 1]]
                    improved = True
        if not improved:
            break
    return order


def solve_tour(points, start=0):
    return two_opt(points, nearest_neighbor_tour(points, start))
