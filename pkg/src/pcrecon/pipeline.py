"""Dataset manifests, preprocessing and directory-level evaluation.

Manifest: UTF-8 text, one sample per line, tab-separated::

    id  image  shape  pose  split

``shape`` is an OBJ mesh or an XYZ/PLY cloud, ``pose`` a 12-value pose file
or ``-``, ``split`` one of train/val/test. Relative paths resolve against the
manifest's directory. Blank lines and lines starting with ``#`` are skipped.

A processed dataset directory contains ``dataset.tsv`` (``id image cloud
split``), ``clouds/<id>.ply``, ``images/<id>.png`` resized to the model's
input side, and ``provenance.json``.
"""

import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from . import rng as rngmod
from .errors import DataError, MissingPair, ParseError, UsageError
from .fileutil import atomic_write
from .geometry import (add_noise, apply_pose, downsample, load_mesh, load_pointcloud, load_pose, normalize,
                       scale_cloud, write_pointcloud)
from .geometry.types import PointCloud
from .metrics.scores import MetricsReport, evaluate, report_from_values
from .sampling import sample_surface_lloyd, sample_surface_uniform

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    image: Path
    shape: Path
    pose: Path = None
    split: str = "train"


def load_manifest(path):
    path = Path(path)
    base = path.parent
    entries, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(cols)}")
            sid, image, shape, pose, split = (c.strip() for c in cols)
            if sid in seen:
                raise ParseError(f"{path}:{lineno}: duplicate sample id {sid!r}")
            if split not in SPLITS:
                raise ParseError(f"{path}:{lineno}: split must be one of {SPLITS}, got {split!r}")
            seen.add(sid)
            entry = ManifestEntry(sid, base / image, base / shape, None if pose == "-" else base / pose, split)
            for p in (entry.image, entry.shape, entry.pose):
                if p is not None and not p.exists():
                    raise DataError(f"{path}:{lineno}: {p} does not exist")
            entries.append(entry)
    if not entries:
        raise DataError(f"{path}: manifest lists no samples")
    return entries


def write_manifest(path, entries):
    base = Path(path).parent
    lines = ["#id\timage\tshape\tpose\tsplit"]
    for e in entries:
        rel = [str(Path(p).relative_to(base)) if p is not None else "-" for p in (e.image, e.shape, e.pose)]
        lines.append("\t".join([e.id, *rel, e.split]))
    atomic_write(path, "\n".join(lines) + "\n")


def load_image(path, side, channels):
    """Read an image, resize to ``side x side`` and scale to [0, 1]; ``.npy`` feature vectors pass through."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    with Image.open(path) as im:
        im = im.convert("RGB" if channels == 3 else "L")
        if im.size != (side, side):
            im = im.resize((side, side), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr if arr.ndim == 3 else arr[:, :, None]


def _ground_truth(entry, cfg, sample_seed):
    if entry.shape.suffix.lower() == ".obj":
        mesh = load_mesh(entry.shape)
        n = cfg.surface_points or cfg.model.n_points
        if cfg.sampling == "vertices":
            return PointCloud(mesh.vertices)
        if cfg.sampling == "uniform":
            return sample_surface_uniform(mesh, n, sample_seed, entry.id).points
        return sample_surface_lloyd(mesh, n, cfg.lloyd_iters, cfg.lloyd_oversample, sample_seed, entry.id).points
    if cfg.sampling != "vertices":
        raise UsageError(f"{entry.id}: surface sampling needs a mesh, got {entry.shape.name}")
    return load_pointcloud(entry.shape)


def preprocess_cloud(cloud, cfg, sample_seed, pose=None):
    """pose -> downsample -> noise -> normalize -> scale.

    Noise is given in normalized units and converted with the scale the
    clean cloud would normalize with. Normalizing last keeps the unit-ball
    or unit-cube bound exact on the emitted cloud.
    """
    if pose is not None and cfg.projection:
        cloud = apply_pose(cloud, pose)
    cloud = downsample(cloud, cfg.model.n_points, sample_seed)
    if cfg.noise_sigma > 0:
        _, provisional, _ = normalize(cloud, cfg.normalization, cfg.center)
        cloud = add_noise(cloud, cfg.noise_sigma * provisional, sample_seed)
    cloud, scale, offset = normalize(cloud, cfg.normalization, cfg.center)
    return scale_cloud(cloud, cfg.scale), scale, offset


def preprocess_dataset(manifest_path, cfg, out_dir):
    """Build a processed dataset directory; every failing sample is reported before raising."""
    out_dir = Path(out_dir)
    entries = load_manifest(manifest_path)
    rows, provenance, failures = [], [], []
    for i, entry in enumerate(entries):
        sample_seed = rngmod.derive_seed(cfg.seed, i)
        try:
            pose = load_pose(entry.pose) if entry.pose is not None else None
            cloud, scale, offset = preprocess_cloud(_ground_truth(entry, cfg, sample_seed), cfg, sample_seed, pose)
            img = load_image(entry.image, cfg.model.image_side, cfg.model.image_channels)
        except (DataError, UsageError, OSError, ValueError) as exc:
            failures.append(f"{entry.id}: {exc}")
            continue
        cloud_rel = Path("clouds") / f"{entry.id}.ply"
        write_pointcloud(out_dir / cloud_rel, cloud)
        if entry.image.suffix == ".npy":
            img_rel = Path("images") / f"{entry.id}.npy"
            (out_dir / "images").mkdir(parents=True, exist_ok=True)
            np.save(out_dir / img_rel, img)
        else:
            img_rel = Path("images") / f"{entry.id}.png"
            _write_png(out_dir / img_rel, img)
        rows.append("\t".join([entry.id, str(img_rel), str(cloud_rel), entry.split]))
        provenance.append({
            "id": entry.id, "seed": sample_seed, "normalization": cfg.normalization, "center": cfg.center,
            "normalization_scale": scale, "offset": [float(v) for v in offset], "scale_factor": cfg.scale,
            "noise_sigma": cfg.noise_sigma, "sampling": cfg.sampling, "posed": entry.pose is not None and cfg.projection,
        })
    if failures:
        for msg in failures:
            log.error("preprocess failed: %s", msg)
        raise DataError(f"{len(failures)} of {len(entries)} samples failed: " + "; ".join(failures))
    atomic_write(out_dir / "dataset.tsv", "#id\timage\tcloud\tsplit\n" + "\n".join(rows) + "\n")
    atomic_write(out_dir / "provenance.json", json.dumps({"config": cfg.to_dict(), "samples": provenance},
                                                         indent=2, sort_keys=True) + "\n")
    return out_dir


def _write_png(path, img):
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    atomic_write(path, buf.getvalue())


@dataclass(frozen=True)
class DatasetRow:
    id: str
    image: Path
    cloud: Path
    split: str


def load_dataset_index(dataset_dir, split=None):
    dataset_dir = Path(dataset_dir)
    index = dataset_dir / "dataset.tsv"
    if not index.exists():
        raise DataError(f"{dataset_dir} has no dataset.tsv; run preprocess first")
    rows = []
    for line in index.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        sid, image, cloud, sp = line.split("\t")
        if split is None or sp == split:
            rows.append(DatasetRow(sid, dataset_dir / image, dataset_dir / cloud, sp))
    return rows


def load_train_samples(dataset_dir, model_cfg, split="train"):
    from .model.train import TrainSample

    rows = load_dataset_index(dataset_dir, split)
    if not rows:
        raise DataError(f"{dataset_dir}: no samples in split {split!r}")
    return [TrainSample(load_image(r.image, model_cfg.image_side, model_cfg.image_channels),
                        load_pointcloud(r.cloud), r.id) for r in rows]


def _cloud_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    found = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in (".ply", ".xyz"):
            if p.stem in found:
                raise DataError(f"{directory}: two clouds share the id {p.stem!r}")
            found[p.stem] = p
    return found


@dataclass
class EvalResult:
    per_sample: dict  # id -> MetricsReport
    aggregate: MetricsReport

    def table(self):
        """Per-sample lines ``id<TAB>record`` followed by ``MEAN<TAB>record``."""
        lines = ["#id\t" + "\t".join(("cd", "precision", "recall", "fscore", "tau", "score_track_a", "score_track_b"))]
        lines += [f"{sid}\t{rep.to_record()}" for sid, rep in self.per_sample.items()]
        lines.append(f"MEAN\t{self.aggregate.to_record()}")
        return "\n".join(lines) + "\n"


def evaluate_dirs(pred_dir, gt_dir, tau):
    """Per-sample metrics for clouds matched by file stem, plus the aggregate.

    The aggregate averages CD, precision, recall and F-score over samples and
    computes the track scores from those means.
    """
    preds, gts = _cloud_files(pred_dir), _cloud_files(gt_dir)
    missing = sorted(set(preds) ^ set(gts))
    if missing:
        raise MissingPair(f"ids present in only one directory: {', '.join(missing)}")
    if not preds:
        raise DataError(f"no clouds found in {pred_dir}")
    per = {sid: evaluate(load_pointcloud(preds[sid]), load_pointcloud(gts[sid]), tau) for sid in sorted(preds)}
    reps = list(per.values())

    def mean(attr):
        return float(np.mean([getattr(r, attr) for r in reps]))

    agg = report_from_values(mean("cd"), mean("precision"), mean("recall"), mean("fscore"), tau)
    return EvalResult(per, agg)
