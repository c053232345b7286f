import json

import numpy as np
import pytest

from pcrecon.cli import model_grad_check
from pcrecon.diffcore import read_checkpoint
from pcrecon.errors import DivergedLoss, ShapeMismatch, UsageError
from pcrecon.geometry import PointCloud
from pcrecon.model import (ModelConfig, ReconModel, TrainSample, decode, encode, grid_uv, infer, load_model,
                           parameter_shapes, read_log, train)
from pcrecon.sampling import sample_uv_random

SMALL = dict(latent_dim=16, n_points=32, n_primitives=2, hidden=(16, 8))


def small_dataset(cfg, gen, n=2):
    out = []
    for i in range(n):
        img = gen.random((cfg.image_side, cfg.image_side, cfg.image_channels))
        out.append(TrainSample(img, PointCloud(gen.uniform(-0.5, 0.5, size=(cfg.n_points, 3))), f"s{i}"))
    return out


def small_cfg(**kw):
    base = dict(SMALL, image_side=16, encoder_channels=(4, 4, 4, 4), seed=3)
    base.update(kw)
    return ModelConfig(**base)


def test_config_validation():
    with pytest.raises(UsageError):
        ModelConfig(n_points=2048, n_primitives=7)
    with pytest.raises(UsageError):
        ModelConfig(encoder="resnet")
    with pytest.raises(UsageError):
        ModelConfig(leaky_alpha=1.5)
    cfg = ModelConfig()
    assert ModelConfig.from_dict(json.loads(cfg.to_json())) == cfg


def test_default_decoder_widths():
    shapes = {name: (fan_in, fan_out) for name, fan_in, fan_out in parameter_shapes(ModelConfig())}
    assert shapes["dec2d3d.0.0"] == (514, 512)
    assert shapes["dec3d3d.0"] == (515, 512)
    assert shapes["dec3d3d.2"] == (256, 3)
    assert sum(k.startswith("dec2d3d.") and k.endswith(".0") for k in shapes) == 8


def test_default_encode_decode(gen):
    model = ReconModel.init(ModelConfig())
    img = gen.random((32, 32, 3))
    z = encode(model, img)
    assert z.shape == (1, 512) and np.isfinite(z).all()
    np.testing.assert_array_equal(z, encode(model, img.copy()))
    cloud = infer(model, img)
    assert len(cloud) == 2048
    assert np.all(np.abs(cloud.points) < 1)
    np.testing.assert_array_equal(cloud.points, infer(model, img).points)
    uv = sample_uv_random(2048, 1)
    np.testing.assert_array_equal(decode(model, z, uv).points, decode(model, z, uv).points)


def test_identity_encoder(gen):
    model = ReconModel.init(ModelConfig(encoder="identity", **SMALL))
    feat = gen.normal(size=16)
    np.testing.assert_array_equal(encode(model, feat), feat[None, :])
    with pytest.raises(ShapeMismatch):
        encode(model, gen.normal(size=15))


def test_grid_uv_is_per_primitive():
    cfg = ModelConfig(**SMALL)
    uv = grid_uv(cfg).points
    assert uv.shape == (32, 2)
    np.testing.assert_array_equal(uv[:16], uv[16:])


def test_init_is_seeded():
    a, b = ReconModel.init(small_cfg()), ReconModel.init(small_cfg())
    c = ReconModel.init(small_cfg(seed=4))
    assert all(np.array_equal(a.store[k], b.store[k]) for k in a.store)
    assert not all(np.array_equal(a.store[k], c.store[k]) for k in a.store)


def test_miniature_model_gradients():
    rep = model_grad_check(seed=0, max_entries=40)
    assert rep.passed, rep.summary()
    assert rep.checked > 500


def test_zero_steps_leaves_model_unchanged(gen, tmp_path):
    cfg = small_cfg()
    model = ReconModel.init(cfg)
    before = {k: v.copy() for k, v in model.store.params.items()}
    res = train(model, small_dataset(cfg, gen), 0, run_dir=tmp_path)
    assert res.log == []
    assert all(np.array_equal(res.model.store[k], before[k]) for k in before)
    ckpt = read_checkpoint(tmp_path / "checkpoints" / "step_00000000.pcr")
    assert all(np.array_equal(ckpt[k], before[k].astype(np.float32)) for k in before)


def test_training_deterministic(gen):
    cfg = small_cfg()
    data = small_dataset(cfg, gen)
    a = train(ReconModel.init(cfg), data, 15)
    b = train(ReconModel.init(cfg), data, 15)
    assert a.losses == b.losses
    assert all(np.array_equal(a.model.store[k], b.model.store[k]) for k in a.model.store)


def test_resume_continues_identically(gen, tmp_path):
    cfg = small_cfg(batch_size=2)
    data = small_dataset(cfg, gen, n=3)
    full = train(ReconModel.init(cfg), data, 12)
    train(ReconModel.init(cfg), data, 12, run_dir=tmp_path, checkpoint_every=4, stop_after=6)
    assert [r.step for r in read_log(tmp_path)] == list(range(1, 7))
    resumed = train(ReconModel.init(cfg), data, 12, run_dir=tmp_path, checkpoint_every=4, resume=True)
    assert resumed.losses == full.losses
    assert [r.loss for r in read_log(tmp_path)] == full.losses
    loaded = load_model(tmp_path)
    assert loaded.store.step == 12
    assert all(np.array_equal(loaded.store[k], full.model.store[k]) for k in loaded.store)


def test_gt_size_must_match(gen):
    cfg = small_cfg()
    bad = TrainSample(gen.random((16, 16, 3)), PointCloud(gen.normal(size=(31, 3))))
    with pytest.raises(ShapeMismatch):
        train(ReconModel.init(cfg), [bad], 1)


def test_divergence_detected(gen):
    cfg = small_cfg(lr=1e300, output_activation="none")
    with pytest.raises(DivergedLoss), np.errstate(over="ignore", invalid="ignore"):
        train(ReconModel.init(cfg), small_dataset(cfg, gen), 50)
