"""Deterministic synthetic dataset built from simple closed meshes, with
orthographic silhouette images and random view poses, plus the overfit cube fixture."""

from pathlib import Path

import numpy as np

from . import rng as rngmod
from .fileutil import atomic_write
from .geometry import CameraPose, PointCloud, TriangleMesh, write_mesh, write_pointcloud, write_pose
from .model.config import ModelConfig
from .pipeline import ManifestEntry, _write_png, write_manifest
from .runconfig import RunConfig

SHAPES = ("cube", "sphere", "torus")

# Overfit fixture: the 8 cube vertices, each repeated so every vertex gets
# as many ground-truth copies as a primitive has points.
OVERFIT_COPIES = 4
OVERFIT_LATENT_SCALE = 0.1


def cube_mesh(half=0.5):
    v = np.array([[x, y, z] for x in (-half, half) for y in (-half, half) for z in (-half, half)])
    f = [[0, 1, 3], [0, 3, 2], [4, 6, 7], [4, 7, 5], [0, 4, 5], [0, 5, 1],
         [2, 3, 7], [2, 7, 6], [0, 2, 6], [0, 6, 4], [1, 5, 7], [1, 7, 3]]
    return TriangleMesh(v, f)


def icosphere(subdivisions=2, radius=0.5):
    t = (1 + 5 ** 0.5) / 2
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
             [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
             [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
             [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache, new_faces = {}, []

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    return TriangleMesh(np.array(verts) * radius, faces)


def torus_mesh(major=0.5, minor=0.2, n_major=24, n_minor=12):
    u = np.arange(n_major) * 2 * np.pi / n_major
    v = np.arange(n_minor) * 2 * np.pi / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    verts = np.stack([(major + minor * np.cos(vv)) * np.cos(uu),
                      (major + minor * np.cos(vv)) * np.sin(uu),
                      minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(verts, faces)


def make_shape(name):
    return {"cube": cube_mesh, "sphere": icosphere, "torus": torus_mesh}[name]()


def random_rotation(gen):
    q, r = np.linalg.qr(gen.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def render_silhouette(mesh, pose, side=64, extent=1.0):
    """Orthographic binary silhouette of the posed mesh on the xy plane, y up."""
    verts = mesh.vertices @ pose.rotation.T + pose.translation
    centres = (np.arange(side) + 0.5) / side * 2 * extent - extent
    px, py = np.meshgrid(centres, centres[::-1])
    mask = np.zeros((side, side), dtype=bool)
    for a, b, c in verts[mesh.faces][:, :, :2]:
        d = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(d) < 1e-15:
            continue
        w1 = ((b[0] - px) * (c[1] - py) - (b[1] - py) * (c[0] - px)) / d
        w2 = ((c[0] - px) * (a[1] - py) - (c[1] - py) * (a[0] - px)) / d
        w3 = 1.0 - w1 - w2
        mask |= (w1 >= 0) & (w2 >= 0) & (w3 >= 0)
    return mask


def overfit_config(seed=0):
    """Identity-encoder model used for the overfit fixture."""
    return ModelConfig(latent_dim=32, n_points=8 * OVERFIT_COPIES, n_primitives=8, hidden=(64, 32),
                       encoder="identity", lr=1e-3, lr_decay=0.999, shared_refiner=False, seed=seed)


def overfit_targets():
    """``(cube vertices (8, 3), tiled ground truth)``."""
    verts = cube_mesh().vertices
    return verts, np.tile(verts, (OVERFIT_COPIES, 1))


def overfit_sample(cfg):
    """Single training sample: a fixed random feature vector paired with the tiled cube vertices."""
    from .model.train import TrainSample

    latent = OVERFIT_LATENT_SCALE * rngmod.make_rng(cfg.seed, rngmod.FIXTURES, 1).normal(size=cfg.latent_dim)
    return TrainSample(latent, PointCloud(overfit_targets()[1]), "cube")


def write_overfit_fixture(out_dir, seed):
    """Manifest + run config that train the overfit fixture through the normal CLI pipeline."""
    out_dir = Path(out_dir)
    cfg = overfit_config(seed)
    sample = overfit_sample(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "cube_features.npy", sample.image)
    write_pointcloud(out_dir / "cube_vertices.xyz", sample.gt_cloud)
    entry = ManifestEntry("cube", out_dir / "cube_features.npy", out_dir / "cube_vertices.xyz", None, "train")
    write_manifest(out_dir / "manifest.tsv", [entry])
    # unit_ball puts the vertices at norm 1; the scale factor brings them back to +-0.5
    run = RunConfig(model=cfg, noise_sigma=0.0, scale=float(np.sqrt(0.75)), steps=5000, checkpoint_every=1000,
                    seed=seed)
    atomic_write(out_dir / "config.json", run.to_json())
    return out_dir / "manifest.tsv"


def gen_fixtures(out_dir, seed, views=1, image_side=64):
    """Write meshes, poses, silhouettes and ``manifest.tsv`` under ``out_dir``.

    One sample per shape and view, id ``<shape>_<view>``; all in the train split.
    """
    out_dir = Path(out_dir)
    gen = rngmod.make_rng(seed, rngmod.FIXTURES)
    entries = []
    for shape in SHAPES:
        mesh = make_shape(shape)
        mesh_path = out_dir / "meshes" / f"{shape}.obj"
        write_mesh(mesh_path, mesh)
        for view in range(views):
            sid = f"{shape}_{view}"
            pose = CameraPose(random_rotation(gen), np.zeros(3))
            pose_path = out_dir / "poses" / f"{sid}.txt"
            write_pose(pose_path, pose)
            img = render_silhouette(mesh, pose, image_side).astype(np.float64)
            img_path = out_dir / "images" / f"{sid}.png"
            _write_png(img_path, np.repeat(img[:, :, None], 3, axis=2))
            entries.append(ManifestEntry(sid, img_path, mesh_path, pose_path, "train"))
    manifest = out_dir / "manifest.tsv"
    write_manifest(manifest, entries)
    write_overfit_fixture(out_dir / "overfit", seed)
    return manifest
