"""Image encoder and folding decoders.

Parameter names: ``enc.*`` for the encoder, ``dec2d3d.<p>.<layer>.{W,b}``
for the per-primitive UV-to-3D perceptrons and ``dec3d3d.<layer>.{W,b}`` for
the shared 3D-to-3D refiner (``dec3d3d.<p>.<layer>.*`` when not shared).
"""

import numpy as np

from .. import rng as rngmod
from ..diffcore import ops
from ..diffcore.adam import ParamStore
from ..diffcore.tape import Tape
from ..errors import ShapeMismatch
from ..geometry.types import PointCloud
from ..sampling import UvBatch, sample_uv_grid
from .config import ModelConfig


def _mlp_shapes(prefix, widths):
    return [(f"{prefix}.{i}", widths[i], widths[i + 1]) for i in range(len(widths) - 1)]


def parameter_shapes(cfg):
    """``[(name, fan_in, fan_out)]`` for every weight matrix, in registration order."""
    shapes = []
    if cfg.encoder == "tiny_conv":
        c_in = cfg.image_channels
        for i, c_out in enumerate(cfg.encoder_channels):
            shapes.append((f"enc.conv{i}", 9 * c_in, c_out))
            c_in = c_out
        shapes.append(("enc.fc", c_in, cfg.latent_dim))
    elif cfg.encoder == "mlp":
        flat = cfg.image_side * cfg.image_side * cfg.image_channels
        shapes += [("enc.fc0", flat, cfg.mlp_hidden), ("enc.fc1", cfg.mlp_hidden, cfg.latent_dim)]
    d = cfg.latent_dim
    for p in range(cfg.n_primitives):
        shapes += _mlp_shapes(f"dec2d3d.{p}", [d + 2, *cfg.hidden, 3])
    refiners = [""] if cfg.shared_refiner else [f".{p}" for p in range(cfg.n_primitives)]
    for suffix in refiners:
        shapes += _mlp_shapes(f"dec3d3d{suffix}", [d + 3, *cfg.hidden, 3])
    return shapes


class ReconModel:
    """Encoder plus folding decoders, with all weights in one ``ParamStore``."""

    def __init__(self, config, store):
        self.config = config
        self.store = store

    @classmethod
    def init(cls, config, seed=None):
        """Fan-in scaled uniform weights, bound ``init_scale * sqrt(6 / fan_in)``; zero biases."""
        seed = config.seed if seed is None else seed
        gen = rngmod.make_rng(seed, rngmod.INIT_WEIGHTS)
        store = ParamStore()
        for name, fan_in, fan_out in parameter_shapes(config):
            bound = config.init_scale * np.sqrt(6.0 / fan_in)
            store.add(f"{name}.W", gen.uniform(-bound, bound, size=(fan_in, fan_out)))
            store.add(f"{name}.b", np.zeros((1, fan_out)))
        return cls(config, store)

    def num_parameters(self):
        return self.store.num_parameters()

    def copy(self):
        return ReconModel(self.config, self.store.copy())


def _perceptron(cfg, leaves, prefix, x, n_layers):
    for i in range(n_layers):
        x = ops.linear(x, leaves[f"{prefix}.{i}.W"], leaves[f"{prefix}.{i}.b"])
        if i < n_layers - 1:
            x = ops.leaky_relu(x, cfg.leaky_alpha)
        elif cfg.output_activation == "tanh":
            x = ops.tanh_op(x)
    return x


def check_image(cfg, image):
    img = np.asarray(image, dtype=np.float64)
    if cfg.encoder == "identity":
        img = img.reshape(-1) if img.ndim <= 2 and img.size == cfg.latent_dim else img
        if img.shape != (cfg.latent_dim,):
            raise ShapeMismatch(f"identity encoder expects a {cfg.latent_dim}-vector, got shape {np.shape(image)}")
        return img
    if img.ndim == 2:
        img = img[:, :, None]
    want = (cfg.image_side, cfg.image_side, cfg.image_channels)
    if img.shape != want:
        raise ShapeMismatch(f"image must be {want}, got {img.shape}")
    return img


def encode_on_tape(cfg, tape, leaves, image):
    img = check_image(cfg, image)
    if cfg.encoder == "identity":
        return tape.constant(img.reshape(1, -1), name="latent")
    if cfg.encoder == "mlp":
        x = tape.constant(img.reshape(1, -1), name="image")
        x = ops.leaky_relu(ops.linear(x, leaves["enc.fc0.W"], leaves["enc.fc0.b"]), cfg.leaky_alpha)
        return ops.linear(x, leaves["enc.fc1.W"], leaves["enc.fc1.b"])
    h = w = cfg.image_side
    x = tape.constant(img.reshape(h * w, cfg.image_channels), name="image")
    for i in range(len(cfg.encoder_channels)):
        x, h, w = ops.conv2d(x, h, w, leaves[f"enc.conv{i}.W"], leaves[f"enc.conv{i}.b"])
        x = ops.leaky_relu(x, cfg.leaky_alpha)
    return ops.linear(ops.mean_rows(x), leaves["enc.fc.W"], leaves["enc.fc.b"])


def decode_on_tape(cfg, leaves, latent, uv):
    """Fold UV blocks to 3D per primitive, then refine with the latent; returns ``n_points x 3``."""
    uv_pts = uv.points if isinstance(uv, UvBatch) else np.asarray(uv, dtype=np.float64)
    if uv_pts.shape != (cfg.n_points, 2):
        raise ShapeMismatch(f"decoder needs {cfg.n_points} UV points, got shape {uv_pts.shape}")
    if latent.shape != (1, cfg.latent_dim):
        raise ShapeMismatch(f"latent must be 1 x {cfg.latent_dim}, got {latent.shape}")
    tape = latent.tape
    k = cfg.points_per_primitive
    tiled = ops.tile_rows(latent, k)
    folded = []
    for p in range(cfg.n_primitives):
        block = tape.constant(uv_pts[p * k:(p + 1) * k], name=f"uv{p}")
        folded.append(_perceptron(cfg, leaves, f"dec2d3d.{p}", ops.concat_cols(block, tiled), 3))
    if cfg.shared_refiner:
        coarse = ops.concat_rows(folded)
        return _perceptron(cfg, leaves, "dec3d3d", ops.concat_cols(coarse, ops.tile_rows(latent, cfg.n_points)), 3)
    refined = [_perceptron(cfg, leaves, f"dec3d3d.{p}", ops.concat_cols(pts, tiled), 3)
               for p, pts in enumerate(folded)]
    return ops.concat_rows(refined)


def _frozen_leaves(model, tape):
    return {name: tape.constant(value, name=name) for name, value in model.store.params.items()}


def encode(model, image):
    """Latent code of one image as a ``1 x D`` array."""
    tape = Tape()
    return encode_on_tape(model.config, tape, _frozen_leaves(model, tape), image).value.copy()


def decode(model, latent, uv):
    tape = Tape()
    lat = tape.constant(np.asarray(latent, dtype=np.float64).reshape(1, -1), name="latent")
    return PointCloud(decode_on_tape(model.config, _frozen_leaves(model, tape), lat, uv).value)


def grid_uv(cfg):
    """Regular cell-centre lattice repeated once per primitive."""
    block = sample_uv_grid(cfg.points_per_primitive).points
    return UvBatch(np.tile(block, (cfg.n_primitives, 1)), "regular_grid")


def infer(model, image, uv=None):
    """Encode then decode on the regular UV grid (or a caller-supplied batch)."""
    cfg = model.config
    tape = Tape()
    leaves = _frozen_leaves(model, tape)
    latent = encode_on_tape(cfg, tape, leaves, image)
    return PointCloud(decode_on_tape(cfg, leaves, latent, grid_uv(cfg) if uv is None else uv).value)


def sample_loss(cfg, tape, leaves, image, gt, uv):
    latent = encode_on_tape(cfg, tape, leaves, image)
    pred = decode_on_tape(cfg, leaves, latent, uv)
    return ops.chamfer_loss(pred, gt, cfg.chamfer_mode, cfg.aggregation)


__all__ = ["ModelConfig", "ReconModel", "decode", "encode", "grid_uv", "infer", "parameter_shapes"]
