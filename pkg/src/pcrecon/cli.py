"""``pcrecon`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import NumericalError, PcreconError, UsageError
from .fileutil import atomic_write
from .geometry import load_mesh, write_pointcloud
from .model.config import ModelConfig
from .runconfig import GT_SOURCES, RunConfig

log = logging.getLogger("pcrecon")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ABLATION_AXES = ("normalization", "scale", "sampling", "projection")
ABLATION_HEADER = "method\tcd_x100\tfscore\tscore"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _int_list(text):
    return [int(t) for t in text.split(",") if t]


_MODEL_FLAG_TYPES = {"hidden": _int_list, "encoder_channels": _int_list, "shared_refiner": _bool}
_RUN_FLAG_TYPES = {"projection": _bool}


def _add_config_flags(p, seed_required):
    p.add_argument("--config", type=Path, help="JSON RunConfig; flags override its values")
    p.add_argument("--seed", type=int, required=seed_required)
    for f in fields(RunConfig):
        if f.name in ("model", "seed"):
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"run__{f.name}",
                       type=_RUN_FLAG_TYPES.get(f.name, type(f.default)), default=None)
    for f in fields(ModelConfig):
        if f.name == "seed":
            continue
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"model__{f.name}",
                       type=_MODEL_FLAG_TYPES.get(f.name, type(f.default)), default=None)


def resolve_config(args):
    """Config file (if any), then flags, then the run seed copied into the model config."""
    base = RunConfig.from_json(args.config.read_text()).to_dict() if getattr(args, "config", None) else RunConfig().to_dict()
    for key, value in vars(args).items():
        if value is None:
            continue
        if key.startswith("run__"):
            base[key[5:]] = value
        elif key.startswith("model__"):
            base["model"][key[7:]] = value
    if getattr(args, "seed", None) is not None:
        base["seed"] = args.seed
    base["model"]["seed"] = base["seed"]
    cfg = RunConfig.from_dict(base)
    sys.stderr.write("# resolved config (usable with --config):\n" + cfg.to_json())
    return cfg


def cmd_gen_fixtures(args):
    from .fixtures import gen_fixtures

    manifest = gen_fixtures(args.out_dir, args.seed, views=args.views, image_side=args.image_side)
    print(manifest)


def cmd_preprocess(args):
    from .pipeline import preprocess_dataset

    cfg = resolve_config(args)
    print(preprocess_dataset(args.manifest, cfg, args.out_dir))


def cmd_train(args):
    from .model.network import ReconModel
    from .model.train import train
    from .pipeline import load_train_samples

    cfg = resolve_config(args)
    dataset = load_train_samples(args.dataset, cfg.model, args.split)
    model = ReconModel.init(cfg.model)
    run_dir = Path(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write(run_dir / "run_config.json", cfg.to_json())
    log.info("model has %d parameters", model.num_parameters())
    result = train(model, dataset, cfg.steps, run_dir=run_dir, checkpoint_every=cfg.checkpoint_every,
                   resume=args.resume)
    last = result.log[-1].loss if result.log else float("nan")
    print(f"steps={result.model.store.step} final_loss={last!r} run_dir={run_dir}")


def run_inference(run_dir, dataset_dir, out_dir, split=None):
    from .model.network import infer
    from .model.train import load_model
    from .pipeline import load_dataset_index, load_image

    model = load_model(run_dir)
    cfg = model.config
    rows = load_dataset_index(dataset_dir, split)
    for row in rows:
        image = load_image(row.image, cfg.image_side, cfg.image_channels)
        write_pointcloud(Path(out_dir) / f"{row.id}.ply", infer(model, image))
    return len(rows)


def cmd_infer(args):
    n = run_inference(args.run_dir, args.dataset, args.out_dir, args.split)
    print(f"wrote {n} clouds to {args.out_dir}")


def cmd_eval(args):
    from .pipeline import evaluate_dirs

    result = evaluate_dirs(args.pred_dir, args.gt_dir, args.tau)
    if args.out:
        atomic_write(args.out, result.table())
    agg = result.aggregate
    score = agg.score_track_a if args.track == "A" else agg.score_track_b
    for sid, rep in result.per_sample.items():
        print(f"{sid}\tCDx100={rep.cd * 100:.4f}\tF={rep.fscore:.2f}")
    print(f"samples={len(result.per_sample)} tau={agg.tau!r} track={args.track}")
    print(f"CDx100={agg.cd * 100:.4f} F-score={agg.fscore:.2f} score={score:.2f}")
    for w in agg.warnings:
        print(f"warning: {w}")
    print(agg.to_kv(), end="")


def _ablation_config(cfg, axis, value):
    d = cfg.to_dict()
    if axis == "normalization":
        d["normalization"] = value
    elif axis == "scale":
        d["scale"] = float(value)
    elif axis == "sampling":
        d["sampling"] = value
    else:
        d["projection"] = _bool(value)
    return RunConfig.from_dict(d)


def run_ablation(manifest, cfg, axis, values, out_dir, tau=None):
    """One preprocess/train/infer/eval run per value; returns table rows ``(method, cd_x100, F, score)``."""
    from .model.network import ReconModel
    from .model.train import train
    from .pipeline import evaluate_dirs, load_train_samples, preprocess_dataset

    if axis not in ABLATION_AXES:
        raise UsageError(f"axis must be one of {ABLATION_AXES}")
    if not values:
        raise UsageError("ablation needs at least one value")
    out_dir = Path(out_dir)
    rows = []
    for value in values:
        run_cfg = _ablation_config(cfg, axis, value)
        tag = f"{axis}={value}"
        base = out_dir / f"{axis}_{value}"
        try:
            data = preprocess_dataset(manifest, run_cfg, base / "data")
            samples = load_train_samples(data, run_cfg.model, split=None)
            result = train(ReconModel.init(run_cfg.model), samples, run_cfg.steps, run_dir=base / "run",
                           checkpoint_every=run_cfg.checkpoint_every)
            run_inference(base / "run", data, base / "pred")
            ev = evaluate_dirs(base / "pred", data / "clouds", tau or run_cfg.tau)
        except PcreconError as exc:
            log.error("ablation run %s failed: %s", tag, exc)
            rows.append((f"{tag} (FAILED)", float("nan"), float("nan"), float("nan")))
            continue
        rows.append((tag, ev.aggregate.cd * 100, ev.aggregate.fscore, ev.aggregate.score_track_a))
        log.info("%s: final loss %r", tag, result.log[-1].loss if result.log else float("nan"))
    return rows


def format_ablation(rows):
    lines = [ABLATION_HEADER] + [f"{m}\t{cd:.4f}\t{f:.2f}\t{s:.2f}" for m, cd, f, s in rows]
    return "\n".join(lines) + "\n"


def parse_ablation(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ABLATION_HEADER:
        raise ValueError("ablation table must start with the header " + repr(ABLATION_HEADER))
    out = []
    for ln in lines[1:]:
        m, cd, f, s = ln.split("\t")
        out.append((m, float(cd), float(f), float(s)))
    return out


def cmd_ablate(args):
    cfg = resolve_config(args)
    values = [v for v in args.values.split(",") if v]
    rows = run_ablation(args.manifest, cfg, args.axis, values, args.out_dir)
    table = format_ablation(rows)
    atomic_write(Path(args.out_dir) / f"ablation_{args.axis}.tsv", table)
    print(table, end="")
    if any(np.isnan(r[1]) for r in rows):
        raise PcreconError("some ablation runs failed; table is partial")


def cmd_sample_mesh(args):
    from .sampling import sample_surface_lloyd, sample_surface_uniform

    mesh = load_mesh(args.input)
    if args.method == "uniform":
        sample = sample_surface_uniform(mesh, args.n, args.seed, Path(args.input).stem)
    else:
        sample = sample_surface_lloyd(mesh, args.n, args.iters, args.oversample, args.seed, Path(args.input).stem)
    write_pointcloud(args.output, sample.points)
    print(f"wrote {len(sample.points)} points to {args.output}")


def model_grad_check(seed=0, h=1e-6, tol=1e-4, max_entries=None):
    """Finite-difference check of the full training loss on a miniature model."""
    from . import rng as rngmod
    from .diffcore.gradcheck import grad_check
    from .geometry.types import PointCloud
    from .model.network import ReconModel, sample_loss
    from .sampling import sample_uv_random

    cfg = ModelConfig(latent_dim=8, hidden=(16, 8), n_points=32, n_primitives=4, encoder="tiny_conv",
                      image_side=16, image_channels=1, encoder_channels=(4, 4, 4, 4), seed=seed)
    model = ReconModel.init(cfg)
    gen = rngmod.make_rng(seed, 1234)
    image = gen.random((16, 16, 1))
    gt = PointCloud(gen.uniform(-0.5, 0.5, size=(cfg.n_points, 3)))
    uv = sample_uv_random(cfg.n_points, seed)

    def loss(tape, leaves):
        return sample_loss(cfg, tape, leaves, image, gt, uv)

    return grad_check(loss, model.store.params, h=h, tol=tol, max_entries=max_entries, seed=seed)


def cmd_grad_check(args):
    report = model_grad_check(args.seed, args.h, args.tol, args.max_entries)
    print(report.summary())
    if not report.passed:
        raise NumericalError("gradient check failed")


def cmd_plot(args):
    from .model.train import read_log

    out = Path(args.out_dir)
    written = []
    if args.run_dir:
        records = read_log(args.run_dir)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "loss"])
        w.writerows([(r.step, repr(r.loss)) for r in records])
        atomic_write(out / "loss.csv", buf.getvalue())
        atomic_write(out / "loss.dat", "# step loss\n" + "".join(f"{r.step} {r.loss!r}\n" for r in records))
        written += ["loss.csv", "loss.dat"]
    if args.ablation:
        rows = parse_ablation(Path(args.ablation).read_text())
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "cd_x100", "fscore", "score"])
        w.writerows(rows)
        atomic_write(out / "ablation.csv", buf.getvalue())
        dat = "# index cd_x100 fscore score method\n" + "".join(
            f"{i} {cd!r} {f!r} {s!r} \"{m}\"\n" for i, (m, cd, f, s) in enumerate(rows))
        atomic_write(out / "ablation.dat", dat)
        written += ["ablation.csv", "ablation.dat"]
    if not written:
        raise UsageError("plot needs --run-dir and/or --ablation")
    print("\n".join(str(out / w) for w in written))


def build_parser():
    parser = _Parser(prog="pcrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-fixtures", help="write the synthetic cube/sphere/torus dataset")
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--views", type=int, default=1)
    p.add_argument("--image-side", type=int, default=64)
    p.set_defaults(func=cmd_gen_fixtures)

    p = sub.add_parser("preprocess", help="turn a manifest into normalized 2048-point training clouds")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train end to end on a processed dataset")
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--run-dir", required=True, type=Path)
    p.add_argument("--split", default="train")
    p.add_argument("--resume", action="store_true")
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict clouds on the regular UV grid")
    p.add_argument("--run-dir", required=True, type=Path)
    p.add_argument("--dataset", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--split", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="Chamfer distance, F-score and track scores")
    p.add_argument("--pred-dir", required=True, type=Path)
    p.add_argument("--gt-dir", required=True, type=Path)
    p.add_argument("--tau", required=True, type=float)
    p.add_argument("--track", choices=("A", "B"), default="A")
    p.add_argument("--out", type=Path, help="write per-sample records here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="replay one ablation axis at desk scale")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--axis", required=True, choices=ABLATION_AXES)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out-dir", required=True, type=Path)
    _add_config_flags(p, seed_required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sample-mesh", help="area-uniform or Lloyd surface sampling of an OBJ mesh")
    p.add_argument("--method", choices=("uniform", "lloyd"), default="uniform")
    p.add_argument("--n", type=int, default=2048)
    p.add_argument("--iters", type=int, default=8)
    p.add_argument("--oversample", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.set_defaults(func=cmd_sample_mesh)

    p = sub.add_parser("grad-check", help="finite-difference check of the miniature model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-6)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-entries", type=int, default=None)
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("plot", help="emit CSV and gnuplot data for loss curves and ablation tables")
    p.add_argument("--run-dir", type=Path)
    p.add_argument("--ablation", type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PcreconError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
