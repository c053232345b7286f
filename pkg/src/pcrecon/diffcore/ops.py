"""Differentiable matrix operations recorded on a ``Tape``."""

import numpy as np

from ..errors import EmptyCloud, ShapeMismatch
from ..geometry.types import as_points
from ..metrics.scores import AGGREGATIONS, CHAMFER_MODES, chamfer_terms, nn_both_ways

ZERO_DISTANCE = 1e-12


def _tape_of(*tensors):
    return tensors[0].tape


def linear(x, W, b):
    """``x @ W + b`` with ``b`` broadcast over rows."""
    n, d = x.shape
    if W.shape[0] != d or b.shape != (1, W.shape[1]):
        raise ShapeMismatch(f"linear: x {x.shape}, W {W.shape}, b {b.shape}")
    xv, Wv = x.value, W.value

    def backward(g):
        return g @ Wv.T, xv.T @ g, g.sum(axis=0, keepdims=True)

    return _tape_of(x).record("linear", (x, W, b), xv @ Wv + b.value, backward)


def leaky_relu(x, alpha=0.01):
    """``max(x, alpha*x)``; the slope at exactly 0 is 1."""
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    pos = x.value >= 0
    x.tape.note_branch(pos)
    slope = np.where(pos, 1.0, alpha)
    return x.tape.record("leaky_relu", (x,), x.value * slope, lambda g: (g * slope,))


def tanh_op(x):
    y = np.tanh(x.value)
    return x.tape.record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def concat_cols(a, b):
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatch(f"concat_cols: row counts {a.shape[0]} and {b.shape[0]} differ")
    p = a.shape[1]
    return a.tape.record("concat_cols", (a, b), np.hstack([a.value, b.value]),
                         lambda g: (g[:, :p], g[:, p:]))


def split_cols(x, p):
    """Inverse of ``concat_cols``: first ``p`` columns and the rest."""
    if not 0 < p < x.shape[1]:
        raise ShapeMismatch(f"split_cols: cannot split {x.shape[1]} columns at {p}")
    q = x.shape[1] - p
    left = x.tape.record("split_left", (x,), x.value[:, :p].copy(),
                         lambda g: (np.hstack([g, np.zeros((g.shape[0], q))]),))
    right = x.tape.record("split_right", (x,), x.value[:, p:].copy(),
                          lambda g: (np.hstack([np.zeros((g.shape[0], p)), g]),))
    return left, right


def concat_rows(parts):
    parts = list(parts)
    cols = {t.shape[1] for t in parts}
    if len(cols) != 1:
        raise ShapeMismatch(f"concat_rows: column counts differ {sorted(cols)}")
    bounds = np.cumsum([0] + [t.shape[0] for t in parts])

    def backward(g):
        return tuple(g[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))

    return parts[0].tape.record("concat_rows", tuple(parts), np.vstack([t.value for t in parts]), backward)


def tile_rows(x, n):
    """Replicate a ``1 x d`` row ``n`` times."""
    if x.shape[0] != 1:
        raise ShapeMismatch(f"tile_rows expects a single row, got {x.shape}")
    return x.tape.record("tile_rows", (x,), np.repeat(x.value, n, axis=0),
                         lambda g: (g.sum(axis=0, keepdims=True),))


def mean_rows(x):
    n = x.shape[0]
    return x.tape.record("mean_rows", (x,), x.value.mean(axis=0, keepdims=True),
                         lambda g: (np.repeat(g / n, n, axis=0),))


def reshape(x, rows, cols):
    shape = x.shape
    return x.tape.record("reshape", (x,), x.value.reshape(rows, cols).copy(),
                         lambda g: (g.reshape(shape),))


def add(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return a.tape.record("add", (a, b), a.value + b.value, lambda g: (g, g))


def scale(x, c):
    return x.tape.record("scale", (x,), x.value * c, lambda g: (g * c,))


def sum_all(x):
    shape = x.shape
    return x.tape.record("sum_all", (x,), np.array([[x.value.sum()]]),
                         lambda g: (np.full(shape, g[0, 0]),))


def weighted_sum(x, weights):
    """``sum(x * weights)`` for a constant weight matrix; handy for gradient checks."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != x.shape:
        raise ShapeMismatch(f"weighted_sum: weights {w.shape} vs x {x.shape}")
    return x.tape.record("weighted_sum", (x,), np.array([[(x.value * w).sum()]]),
                         lambda g: (g[0, 0] * w,))


def _patch_index(h, w, k=3, stride=2, pad=1):
    ho = (h + 2 * pad - k) // stride + 1
    wo = (w + 2 * pad - k) // stride + 1
    rows = (np.arange(ho) * stride)[:, None, None, None] + np.arange(k)[None, None, :, None]
    cols = (np.arange(wo) * stride)[None, :, None, None] + np.arange(k)[None, None, None, :]
    flat = rows * (w + 2 * pad) + cols  # (ho, wo, k, k) positions in the padded grid
    return flat.reshape(ho * wo, k * k), ho, wo


def im2col(x, h, w, k=3, stride=2, pad=1):
    """Gather ``k x k`` patches of an ``(h*w) x c`` feature map into rows.

    Returns the ``(ho*wo) x (k*k*c)`` patch matrix and the output height/width.
    """
    c = x.shape[1]
    if x.shape[0] != h * w:
        raise ShapeMismatch(f"im2col: {x.shape[0]} rows is not {h}x{w}")
    idx, ho, wo = _patch_index(h, w, k, stride, pad)
    hp, wp = h + 2 * pad, w + 2 * pad
    padded = np.zeros((hp, wp, c))
    padded[pad:pad + h, pad:pad + w] = x.value.reshape(h, w, c)
    cols = padded.reshape(hp * wp, c)[idx].reshape(ho * wo, k * k * c)

    def backward(g):
        acc = np.zeros((hp * wp, c))
        np.add.at(acc, idx, g.reshape(ho * wo, k * k, c))
        return (acc.reshape(hp, wp, c)[pad:pad + h, pad:pad + w].reshape(h * w, c),)

    return x.tape.record("im2col", (x,), cols, backward), ho, wo


def conv2d(x, h, w, W, b, stride=2):
    """3x3 convolution, padding 1. ``W`` is ``(9*c_in) x c_out``."""
    cols, ho, wo = im2col(x, h, w, 3, stride, 1)
    return linear(cols, W, b), ho, wo


def chamfer_loss(pred, gt, mode="l2", aggregation="mean"):
    """Chamfer distance between the rows of ``pred`` and a fixed target cloud.

    The value matches ``metrics.chamfer`` exactly. Nearest-neighbour
    assignments are held fixed in the backward pass. For l2 distances below
    1e-12 the gradient contribution is taken as zero.
    """
    if mode not in CHAMFER_MODES or aggregation not in AGGREGATIONS:
        raise ValueError(f"chamfer_loss: bad mode/aggregation {mode!r}/{aggregation!r}")
    if pred.shape[1] != 3:
        raise ShapeMismatch(f"chamfer_loss: pred must be n x 3, got {pred.shape}")
    if pred.shape[0] == 0:
        raise EmptyCloud("prediction has no points")
    y = pred.value
    x = as_points(gt)
    d_pg2, i_pg, d_gp2, i_gp = nn_both_ways(y, x)
    t1, t2 = chamfer_terms(d_pg2, d_gp2, mode, aggregation)
    n, m = len(y), len(x)

    if aggregation == "mean":
        rows1, tgt1, w1 = np.arange(n), i_pg, np.full(n, 1.0 / n)
        rows2, src2, w2 = i_gp, np.arange(m), np.full(m, 1.0 / m)
    else:
        r = int(np.argmax(d_pg2))
        j = int(np.argmax(d_gp2))
        rows1, tgt1, w1 = np.array([r]), i_pg[[r]], np.ones(1)
        rows2, src2, w2 = i_gp[[j]], np.array([j]), np.ones(1)
        pred.tape.note_branch(np.array([r, j]))
    pred.tape.note_branch(i_pg)
    pred.tape.note_branch(i_gp)

    def unit_or_twice(diff):
        if mode == "squared_l2":
            return 2.0 * diff
        d = np.sqrt((diff * diff).sum(axis=1, keepdims=True))
        safe = np.where(d < ZERO_DISTANCE, 1.0, d)
        return np.where(d < ZERO_DISTANCE, 0.0, diff / safe)

    def backward(g):
        grad = np.zeros_like(y)
        np.add.at(grad, rows1, unit_or_twice(y[rows1] - x[tgt1]) * w1[:, None])
        np.add.at(grad, rows2, unit_or_twice(y[rows2] - x[src2]) * w2[:, None])
        return (grad * g[0, 0],)

    return pred.tape.record("chamfer_loss", (pred,), np.array([[t1 + t2]]), backward)
