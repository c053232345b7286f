"""Exhaustive nearest-neighbour search, the oracle for the kd-tree path."""

import numpy as np

from ..geometry.types import as_points


def nearest_d2(queries, points, chunk=1024):
    """Squared distance and lowest-index nearest point for every query row."""
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    p = as_points(points)
    d2 = np.empty(len(q))
    idx = np.empty(len(q), dtype=np.int64)
    for lo in range(0, len(q), chunk):
        block = q[lo:lo + chunk]
        dx = block[:, None, 0] - p[None, :, 0]
        dy = block[:, None, 1] - p[None, :, 1]
        dz = block[:, None, 2] - p[None, :, 2]
        full = dx * dx + dy * dy + dz * dz
        # argmin returns the first minimum, i.e. the lowest index on ties
        k = np.argmin(full, axis=1)
        idx[lo:lo + chunk] = k
        d2[lo:lo + chunk] = full[np.arange(len(block)), k]
    return d2, idx


def nearest(queries, points):
    d2, idx = nearest_d2(queries, points)
    return np.sqrt(d2), idx


def chamfer(s, t, mode="l2", aggregation="mean"):
    def reduce(x):
        if aggregation == "max":
            return np.max(x)
        return np.clip(np.mean(x), np.min(x), np.max(x))

    d_st, _ = nearest_d2(s, t)
    d_ts, _ = nearest_d2(t, s)
    if mode == "l2":
        d_st, d_ts = np.sqrt(d_st), np.sqrt(d_ts)
    return float(reduce(d_st)) + float(reduce(d_ts))


def fscore(pred, gt, tau):
    d_pg, _ = nearest(pred, gt)
    d_gp, _ = nearest(gt, pred)
    precision = 100.0 * np.count_nonzero(d_pg <= tau) / len(d_pg)
    recall = 100.0 * np.count_nonzero(d_gp <= tau) / len(d_gp)
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f
