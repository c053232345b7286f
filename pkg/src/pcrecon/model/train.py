"""End-to-end training with Chamfer loss and Adam, plus checkpoint/resume.

A run directory holds ``config.json``, ``train.log`` (``step loss
wallclock_ms`` per line) and ``checkpoints/``. Each checkpoint is written
twice: ``step_XXXXXXXX.pcr`` in the float32 PCR1 format and
``step_XXXXXXXX.state.npz`` with float64 parameters, Adam moments and the
step counter, which is what resuming reads.
"""

import io
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import rng as rngmod
from ..diffcore import ops
from ..diffcore.adam import ParamStore, adam_step
from ..diffcore.checkpoint import read_checkpoint, write_checkpoint
from ..diffcore.tape import Tape
from ..errors import CheckpointError, DivergedLoss, NumericalError, ShapeMismatch
from ..fileutil import atomic_write
from ..geometry.types import PointCloud
from ..sampling import sample_uv_random
from .config import ModelConfig
from .network import ReconModel, check_image, sample_loss

log = logging.getLogger(__name__)

_STATE_RE = re.compile(r"step_(\d{8})\.state\.npz$")


@dataclass
class TrainSample:
    image: np.ndarray
    gt_cloud: PointCloud
    id: str = ""


@dataclass
class LogRecord:
    step: int
    loss: float
    wallclock_ms: float = 0.0

    def line(self):
        return f"{self.step} {self.loss!r} {self.wallclock_ms:.3f}"

    @classmethod
    def parse(cls, line):
        step, loss, ms = line.split()
        return cls(int(step), float(loss), float(ms))


@dataclass
class TrainResult:
    model: ReconModel
    log: list = field(default_factory=list)

    @property
    def losses(self):
        return [r.loss for r in self.log]


def check_sample(cfg, sample):
    check_image(cfg, sample.image)
    if len(sample.gt_cloud) != cfg.n_points:
        raise ShapeMismatch(f"sample {sample.id!r}: ground truth has {len(sample.gt_cloud)} points, "
                            f"config expects {cfg.n_points}")


def batch_indices(cfg, n_samples, step):
    """Dataset indices used at ``step`` (1-based); a seeded permutation per epoch."""
    out = []
    for i in range(cfg.batch_size):
        k = (step - 1) * cfg.batch_size + i
        epoch, pos = divmod(k, n_samples)
        perm = rngmod.make_rng(cfg.seed, rngmod.TRAIN_ORDER, epoch).permutation(n_samples)
        out.append(int(perm[pos]))
    return out


def training_loss(model, dataset, step, tape):
    """Recorded loss for one step: per-sample Chamfer losses summed over the batch."""
    cfg = model.config
    leaves = model.store.leaves(tape)
    total = None
    for i, idx in enumerate(batch_indices(cfg, len(dataset), step)):
        sample = dataset[idx]
        uv = sample_uv_random(cfg.n_points, cfg.seed, stream=(rngmod.TRAIN_UV, step, i))
        loss = sample_loss(cfg, tape, leaves, sample.image, sample.gt_cloud, uv)
        total = loss if total is None else ops.add(total, loss)
    return total, leaves


def train_step(model, dataset, step):
    cfg = model.config
    tape = Tape()
    try:
        total, leaves = training_loss(model, dataset, step, tape)
        tape.backward(total)
    except NumericalError:
        raise DivergedLoss(step, float("nan")) from None
    value = total.item()
    if not np.isfinite(value):
        raise DivergedLoss(step, value)
    adam_step(model.store, {k: t.grad for k, t in leaves.items()}, cfg.lr_at(step), cfg.beta1, cfg.beta2, cfg.eps)
    if not all(np.isfinite(p).all() for p in model.store.params.values()):
        raise DivergedLoss(step, value)
    return value


def save_checkpoint(model, run_dir):
    ckpt = Path(run_dir) / "checkpoints"
    stem = f"step_{model.store.step:08d}"
    write_checkpoint(ckpt / f"{stem}.pcr", model.store.params)
    buf = io.BytesIO()
    np.savez(buf, **model.store.state_arrays())
    atomic_write(ckpt / f"{stem}.state.npz", buf.getvalue())
    return ckpt / f"{stem}.pcr"


def latest_state(run_dir):
    ckpt = Path(run_dir) / "checkpoints"
    found = sorted((int(m.group(1)), p) for p in ckpt.glob("step_*.state.npz") if (m := _STATE_RE.search(p.name)))
    return found[-1][1] if found else None


def load_model(path):
    """Load a model from a run directory (latest state) or a ``.pcr``/``.state.npz`` file.

    The config is read from ``config.json`` in the run directory.
    """
    path = Path(path)
    run_dir = path if path.is_dir() else path.parent.parent
    cfg_path = run_dir / "config.json"
    if not cfg_path.exists():
        raise CheckpointError(f"no config.json in {run_dir}")
    cfg = ModelConfig.from_dict(json.loads(cfg_path.read_text())["model"])
    if path.is_dir():
        path = latest_state(path)
        if path is None:
            raise CheckpointError(f"no checkpoints in {run_dir}")
    if path.name.endswith(".state.npz"):
        with np.load(path) as data:
            store = ParamStore.from_state_arrays(dict(data))
    else:
        store = ParamStore(read_checkpoint(path))
    model = ReconModel(cfg, store)
    expected = ReconModel.init(cfg).store
    for name in expected:
        if name not in store or store[name].shape != expected[name].shape:
            raise CheckpointError(f"checkpoint parameter {name!r} missing or mis-shaped")
    return model


def write_run_config(run_dir, model_cfg, extra=None):
    doc = {"model": model_cfg.to_dict()}
    if extra:
        doc.update(extra)
    atomic_write(Path(run_dir) / "config.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_log(run_dir):
    path = Path(run_dir) / "train.log"
    if not path.exists():
        return []
    return [LogRecord.parse(ln) for ln in path.read_text().splitlines() if ln.strip()]


def train(model, dataset, steps, run_dir=None, checkpoint_every=0, resume=False, stop_after=None, on_step=None):
    """Train in place until ``model.store.step == steps``.

    With ``run_dir`` the log and checkpoints are written there; ``resume``
    continues from the newest ``.state.npz`` in it. ``stop_after`` ends the
    call early after that many new steps, without a final checkpoint (used to
    simulate an interrupted run). Per-step UV batches and sample order are
    derived from ``(seed, step)``, so a resumed run sees the same draws.
    """
    if not dataset:
        raise ValueError("training dataset is empty")
    cfg = model.config
    for sample in dataset:
        check_sample(cfg, sample)
    records = []
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        if resume:
            state = latest_state(run_dir)
            if state is not None:
                model = load_model(state)
                records = [r for r in read_log(run_dir) if r.step <= model.store.step]
                log.info("resuming from %s at step %d", state.name, model.store.step)
        write_run_config(run_dir, cfg)
        if model.store.step == 0 and latest_state(run_dir) is None:
            save_checkpoint(model, run_dir)
    log_fh = None
    if run_dir is not None:
        atomic_write(run_dir / "train.log", "".join(r.line() + "\n" for r in records))
        log_fh = open(run_dir / "train.log", "a", encoding="utf-8")
    try:
        done = 0
        while model.store.step < steps:
            if stop_after is not None and done >= stop_after:
                return TrainResult(model, records)
            step = model.store.step + 1
            t0 = time.perf_counter()
            loss = train_step(model, dataset, step)
            rec = LogRecord(step, loss, (time.perf_counter() - t0) * 1e3)
            records.append(rec)
            done += 1
            if log_fh is not None:
                log_fh.write(rec.line() + "\n")
                log_fh.flush()
            if on_step is not None:
                on_step(rec)
            if run_dir is not None and checkpoint_every and step % checkpoint_every == 0:
                save_checkpoint(model, run_dir)
    finally:
        if log_fh is not None:
            log_fh.close()
    if run_dir is not None and latest_state(run_dir) != run_dir / "checkpoints" / f"step_{model.store.step:08d}.state.npz":
        save_checkpoint(model, run_dir)
    return TrainResult(model, records)
