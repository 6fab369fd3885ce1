"""Pure-Python kernels. Reference semantics for ``_ckernels.pyx``.

Both backends must produce bit-identical output for identical input; the
tree builder draws its feature subsets from the same splitmix64 stream and
evaluates split scores with the same floating-point expression order.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


def _best_split_on_feature(values: np.ndarray, labels: np.ndarray):
    """Lowest weighted-Gini boundary between distinct sorted values.

    Returns ``(score, threshold)`` or ``None`` if the column is constant.
    """
    order = np.argsort(values, kind="stable")
    v = values[order]
    lab = labels[order]
    m = len(v)
    boundary = np.nonzero(v[:-1] < v[1:])[0]
    if len(boundary) == 0:
        return None
    ones = np.cumsum(lab, dtype=np.int64)
    tot1 = int(ones[-1])
    tot0 = m - tot1
    l1 = ones[boundary].astype(np.float64)
    nl = (boundary + 1).astype(np.float64)
    l0 = nl - l1
    nr = m - nl
    r1 = tot1 - l1
    r0 = tot0 - l0
    score = (nl - (l0 * l0 + l1 * l1) / nl) + (nr - (r0 * r0 + r1 * r1) / nr)
    k = int(np.argmin(score))  # first minimum == lowest threshold on ties
    i = int(boundary[k])
    a = float(v[i])
    b = float(v[i + 1])
    thr = a + (b - a) * 0.5
    if thr >= b:
        thr = a
    return float(score[k]), thr


def build_tree(X, y, sample_idx, max_depth: int, mtry: int, min_samples_split: int, seed: int):
    """Grow one CART tree with Gini splits on a bootstrap sample.

    Returns ``(feature, threshold, left, right, count0, count1)`` node arrays;
    ``feature == -1`` marks a leaf.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int8)
    samples = np.array(sample_idx, dtype=np.intp)
    n_feat = X.shape[1]
    mtry = max(1, min(mtry, n_feat))
    rng = SplitMix64(seed)
    perm = list(range(n_feat))

    cap = 2 * len(samples) + 1
    feature = np.full(cap, -1, dtype=np.int32)
    threshold = np.zeros(cap, dtype=np.float64)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    count0 = np.zeros(cap, dtype=np.int32)
    count1 = np.zeros(cap, dtype=np.int32)

    n_nodes = 1
    stack = [(0, 0, len(samples), 0)]  # node, start, end, depth
    while stack:
        node, start, end, depth = stack.pop()
        idx = samples[start:end]
        lab = y[idx]
        c1 = int(lab.sum())
        c0 = (end - start) - c1
        count0[node] = c0
        count1[node] = c1
        if depth >= max_depth or end - start < min_samples_split or c0 == 0 or c1 == 0:
            continue

        for j in range(mtry):
            r = j + rng.next() % (n_feat - j)
            perm[j], perm[r] = perm[r], perm[j]
        subset = sorted(perm[:mtry])

        best = None
        for f in subset:
            found = _best_split_on_feature(X[idx, f], lab)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], f)
        if best is None:
            continue

        _, thr, f = best
        go_left = X[idx, f] <= thr
        samples[start:end] = np.concatenate([idx[go_left], idx[~go_left]])
        mid = start + int(go_left.sum())
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack.append((right[node], mid, end, depth + 1))
        stack.append((left[node], start, mid, depth + 1))

    s = slice(0, n_nodes)
    return feature[s].copy(), threshold[s].copy(), left[s].copy(), right[s].copy(), count0[s].copy(), count1[s].copy()


def tree_votes(feature, threshold, left, right, count0, count1, X):
    """Per-row vote of one tree: 1 = Spoof, 0 = Legitimate (ties vote Legitimate)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.zeros(len(X), dtype=np.int32)
    for r in range(len(X)):
        row = X[r]
        node = 0
        while feature[node] >= 0:
            node = left[node] if row[feature[node]] <= threshold[node] else right[node]
        out[r] = 1 if count1[node] > count0[node] else 0
    return out


def forest_votes(offsets, feature, threshold, left, right, count0, count1, X):
    """Sum of Spoof votes over all trees packed back to back; ``offsets`` has n_trees + 1 entries."""
    X = np.asarray(X, dtype=np.float64)
    total = np.zeros(len(X), dtype=np.int32)
    for t in range(len(offsets) - 1):
        s = slice(int(offsets[t]), int(offsets[t + 1]))
        total += tree_votes(feature[s], threshold[s], left[s], right[s], count0[s], count1[s], X)
    return total


def waypoint_walk(x0, y0, home_x, home_y, roam_km, lo, hi, dt_s, speeds_kmh, heading_noise_rad, waypoint_draws, rho=0.0):
    """Waypoint motion with AR(1) heading noise, clamped to the square ``[lo, hi]^2``.

    The heading offset follows ``e[i] = rho * e[i-1] + heading_noise_rad[i]``
    and is added to the bearing toward the current waypoint.

    ``waypoint_draws`` is a ``(k, 2)`` array of U[0,1) pairs consumed in order
    (cyclically) for each new waypoint. Returns an ``(n + 1, 2)`` position array.
    """
    n = len(speeds_kmh)
    draws = np.asarray(waypoint_draws, dtype=np.float64)
    k = len(draws)
    pos = np.empty((n + 1, 2), dtype=np.float64)
    x = float(x0)
    y = float(y0)
    pos[0, 0] = x
    pos[0, 1] = y
    used = 0

    def next_waypoint():
        nonlocal used
        u1 = float(draws[used % k, 0])
        u2 = float(draws[used % k, 1])
        used += 1
        r = roam_km * math.sqrt(u1)
        th = 2.0 * math.pi * u2
        wx = min(max(home_x + r * math.sin(th), lo), hi)
        wy = min(max(home_y + r * math.cos(th), lo), hi)
        return wx, wy

    wx, wy = next_waypoint()
    e = 0.0
    for i in range(n):
        e = rho * e + float(heading_noise_rad[i])
        step = float(speeds_kmh[i]) * dt_s / 3600.0
        dx = wx - x
        dy = wy - y
        dist = math.hypot(dx, dy)
        if step >= dist:
            if step > 0.0:
                x = wx
                y = wy
                wx, wy = next_waypoint()
        else:
            h = math.atan2(dx, dy) + e
            x = min(max(x + step * math.sin(h), lo), hi)
            y = min(max(y + step * math.cos(h), lo), hi)
        pos[i + 1, 0] = x
        pos[i + 1, 1] = y
    return pos
