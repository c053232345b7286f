"""Exact nearest-neighbour index over 3D points.

A median-split kd-tree with bucketed leaves. Queries return the same
``(distance, index)`` as an exhaustive scan, bit for bit: squared distances
are accumulated as ``dx*dx + dy*dy + dz*dz`` in that order (see
``bruteforce.nearest``), candidates are ranked by ``(d2, index)`` so ties go
to the lowest index, and subtrees are pruned only when their lower bound is
strictly greater than the current best.
"""

import numba
import numpy as np

from ..errors import EmptyCloud
from ..geometry.types import as_points

LEAF_SIZE = 16


def _build(points, leaf_size):
    n = len(points)
    perm = np.arange(n, dtype=np.int64)
    # node arrays grown in python lists; converted to numpy once done
    split_dim, split_val, left, right, start, stop = [], [], [], [], [], []

    def new_node():
        for arr in (split_dim, left, right, start, stop):
            arr.append(-1)
        split_val.append(0.0)
        return len(split_dim) - 1

    root = new_node()
    stack = [(root, 0, n)]
    while stack:
        node, lo, hi = stack.pop()
        if hi - lo <= leaf_size:
            start[node], stop[node] = lo, hi
            continue
        block = points[perm[lo:hi]]
        spread = block.max(axis=0) - block.min(axis=0)
        dim = int(np.argmax(spread))
        if spread[dim] == 0:
            # all points identical: cannot split
            start[node], stop[node] = lo, hi
            continue
        mid = (hi - lo) // 2
        order = np.argpartition(block[:, dim], mid)
        perm[lo:hi] = perm[lo:hi][order]
        value = points[perm[lo + mid], dim]
        # left holds coords <= value, right holds coords >= value
        split_dim[node], split_val[node] = dim, float(value)
        lnode, rnode = new_node(), new_node()
        left[node], right[node] = lnode, rnode
        stack.append((lnode, lo, lo + mid))
        stack.append((rnode, lo + mid, hi))
    return (
        perm,
        np.asarray(split_dim, dtype=np.int64),
        np.asarray(split_val, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64),
        np.asarray(stop, dtype=np.int64),
    )


@numba.njit(cache=True, nogil=True)
def _query_kernel(points, perm, split_dim, split_val, left, right, start, stop, queries, out_d2, out_idx):
    max_depth = 2 * len(split_dim) + 2
    stack_node = np.empty(max_depth, dtype=np.int64)
    stack_bound = np.empty(max_depth, dtype=np.float64)
    for qi in range(queries.shape[0]):
        qx = queries[qi, 0]
        qy = queries[qi, 1]
        qz = queries[qi, 2]
        best_d2 = np.inf
        best_i = -1
        top = 0
        stack_node[0] = 0
        stack_bound[0] = 0.0
        top = 1
        while top > 0:
            top -= 1
            node = stack_node[top]
            bound = stack_bound[top]
            if bound > best_d2:
                continue
            dim = split_dim[node]
            if dim < 0:
                for k in range(start[node], stop[node]):
                    j = perm[k]
                    dx = qx - points[j, 0]
                    dy = qy - points[j, 1]
                    dz = qz - points[j, 2]
                    d2 = dx * dx + dy * dy + dz * dz
                    if d2 < best_d2 or (d2 == best_d2 and j < best_i):
                        best_d2 = d2
                        best_i = j
                continue
            if dim == 0:
                diff = qx - split_val[node]
            elif dim == 1:
                diff = qy - split_val[node]
            else:
                diff = qz - split_val[node]
            plane = diff * diff
            far_bound = plane if plane > bound else bound
            if diff <= 0.0:
                near = left[node]
                far = right[node]
            else:
                near = right[node]
                far = left[node]
            # far pushed first so near is explored first
            stack_node[top] = far
            stack_bound[top] = far_bound
            top += 1
            stack_node[top] = near
            stack_bound[top] = bound
            top += 1
        out_d2[qi] = best_d2
        out_idx[qi] = best_i


class NnIndex:
    """Immutable kd-tree over a point cloud; safe for concurrent queries."""

    def __init__(self, cloud, leaf_size=LEAF_SIZE):
        try:
            pts = as_points(cloud)
        except EmptyCloud:
            raise EmptyCloud("cannot index an empty cloud") from None
        self.points = np.ascontiguousarray(pts)
        self.points.flags.writeable = False
        self.count = len(pts)
        self.bbox = (pts.min(axis=0), pts.max(axis=0))
        self._tree = _build(self.points, leaf_size)

    def query_d2(self, queries):
        """Squared distance and index of the nearest indexed point per query row."""
        q = np.ascontiguousarray(np.asarray(queries, dtype=np.float64).reshape(-1, 3))
        d2 = np.empty(len(q), dtype=np.float64)
        idx = np.empty(len(q), dtype=np.int64)
        _query_kernel(self.points, *self._tree, q, d2, idx)
        return d2, idx

    def query(self, queries):
        """Euclidean distance and index of the nearest indexed point per query row."""
        d2, idx = self.query_d2(queries)
        return np.sqrt(d2), idx

    def __len__(self):
        return self.count


def build_index(cloud, leaf_size=LEAF_SIZE):
    return NnIndex(cloud, leaf_size=leaf_size)
