from collections import OrderedDict

import numpy as np

from ..errors import ShapeMismatch


class ParamStore:
    """Named float64 parameter matrices plus Adam moments and step counter."""

    def __init__(self, params=None):
        self.params = OrderedDict()
        self.m = OrderedDict()
        self.v = OrderedDict()
        self.step = 0
        self._flat = None
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        arr = np.array(value, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ShapeMismatch(f"parameter {name!r} must be 2-D, got {arr.shape}")
        self.params[name] = arr
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        self._flat = None
        return arr

    def flat(self):
        """Contiguous (params, m, v) vectors; the per-name arrays become views into them."""
        if self._flat is None:
            bufs = []
            for table in (self.params, self.m, self.v):
                buf = np.concatenate([a.reshape(-1) for a in table.values()]) if table else np.zeros(0)
                pos = 0
                for name, a in table.items():
                    table[name] = buf[pos:pos + a.size].reshape(a.shape)
                    pos += a.size
                bufs.append(buf)
            self._flat = tuple(bufs)
        return self._flat

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def leaves(self, tape):
        """Register every parameter on ``tape``; returns ``{name: Tensor}``."""
        return OrderedDict((name, tape.leaf(p, name=name, copy=False)) for name, p in self.params.items())

    def copy(self):
        other = ParamStore()
        for name in self.params:
            other.params[name] = self.params[name].copy()
            other.m[name] = self.m[name].copy()
            other.v[name] = self.v[name].copy()
        other.step = self.step
        return other

    def state_arrays(self):
        """Flat dict of parameters and Adam state, for full-precision resume files."""
        out = {}
        for name in self.params:
            out[f"param/{name}"] = self.params[name]
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        out["step"] = np.array(self.step, dtype=np.int64)
        return out

    @classmethod
    def from_state_arrays(cls, arrays):
        store = cls()
        names = [k[len("param/"):] for k in arrays if k.startswith("param/")]
        for name in names:
            store.params[name] = np.array(arrays[f"param/{name}"], dtype=np.float64)
            store.m[name] = np.array(arrays[f"m/{name}"], dtype=np.float64)
            store.v[name] = np.array(arrays[f"v/{name}"], dtype=np.float64)
        store.step = int(arrays["step"])
        return store


def adam_step(store, grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place. Parameters without a gradient are left alone."""
    for name, g in grads.items():
        if name not in store.params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != store.params[name].shape:
            raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {store.params[name].shape}")
    store.step += 1
    t = store.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    if len(grads) == len(store.params):
        p, m, v = store.flat()
        g = np.concatenate([grads[name].reshape(-1) for name in store.params])
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
        return store
    for name in store.params:
        g = grads.get(name)
        if g is None:
            continue
        m, v = store.m[name], store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        store.params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return store
