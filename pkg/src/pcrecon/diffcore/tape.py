"""Reverse-mode differentiation over double-precision matrices.

A ``Tape`` records every operation in execution order, which is a valid
topological order; ``Tape.backward`` replays it in reverse. Ops that take a
discrete decision in the forward pass (activation branch, nearest-neighbour
assignment) log it with ``Tape.note_branch`` so that finite-difference
harnesses can detect when a perturbation crossed a kink.
"""

import numpy as np

from ..errors import NumericalError, ShapeMismatch


def as_matrix(value):
    arr = np.array(value, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"matrices are 2-D, got shape {arr.shape}")
    return arr


class Tensor:
    __slots__ = ("value", "grad", "tape", "requires_grad", "name")

    def __init__(self, tape, value, requires_grad, name=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self):
        if self.value.size != 1:
            raise ShapeMismatch(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"<Tensor{label} {self.shape[0]}x{self.shape[1]}>"


class _Node:
    __slots__ = ("op", "inputs", "out", "backward")

    def __init__(self, op, inputs, out, backward):
        self.op = op
        self.inputs = inputs
        self.out = out
        self.backward = backward


class Tape:
    def __init__(self):
        self.nodes = []
        self.leaves = []
        self.branches = []

    def leaf(self, value, requires_grad=True, name=None, copy=True):
        """Register an input. ``copy=False`` shares a 2-D float64 array the caller keeps unchanged."""
        if not copy and isinstance(value, np.ndarray) and value.ndim == 2 and value.dtype == np.float64:
            t = Tensor(self, value, requires_grad, name)
        else:
            t = Tensor(self, as_matrix(value), requires_grad, name)
        _check_finite(t.value, name or "leaf")
        self.leaves.append(t)
        return t

    def constant(self, value, name=None):
        return self.leaf(value, requires_grad=False, name=name)

    def record(self, op, inputs, value, backward):
        """Append an op. ``backward(grad_out)`` returns one gradient (or None) per input."""
        for t in inputs:
            if t.tape is not self:
                raise ValueError(f"{op}: input recorded on a different tape")
        _check_finite(value, op)
        out = Tensor(self, value, any(t.requires_grad for t in inputs))
        if out.requires_grad:
            self.nodes.append(_Node(op, tuple(inputs), out, backward))
        return out

    def note_branch(self, key):
        self.branches.append(np.asarray(key).copy())

    def branch_signature(self):
        return self.branches

    def backward(self, out):
        """Accumulate d(out)/d(leaf) into ``leaf.grad`` for every grad-requiring leaf."""
        if out.value.shape != (1, 1):
            raise ShapeMismatch(f"backward needs a scalar (1x1) output, got {out.shape}")
        for node in self.nodes:
            node.out.grad = None
        for t in self.leaves:
            t.grad = None
        out.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            g = node.out.grad
            if g is None:
                continue
            grads = node.backward(g)
            for inp, gi in zip(node.inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                if gi.shape != inp.value.shape:
                    raise ShapeMismatch(f"{node.op}: gradient shape {gi.shape} != input shape {inp.value.shape}")
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
        for t in self.leaves:
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.value)


def _check_finite(value, where):
    if not np.isfinite(value).all():
        raise NumericalError(f"{where}: produced NaN or Inf")
