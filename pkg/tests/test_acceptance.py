"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` (or ``python tests/test_acceptance.py``).
"""

import os
import signal
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pcrecon import rng as rngmod
from pcrecon.cli import model_grad_check
from pcrecon.diffcore import (Tape, add, chamfer_loss, concat_cols, concat_rows, conv2d, grad_check, im2col,
                              leaky_relu, linear, mean_rows, reshape, scale, split_cols, sum_all, tanh_op,
                              tile_rows, weighted_sum)
from pcrecon.fixtures import cube_mesh, gen_fixtures, overfit_config, overfit_sample, overfit_targets
from pcrecon.geometry import PointCloud, downsample, normalize
from pcrecon.metrics import NnIndex, chamfer, fscore, track_score
from pcrecon.metrics import bruteforce
from pcrecon.metrics.scores import chamfer_terms
from pcrecon.model import ReconModel, infer, read_log, train
from pcrecon.pipeline import preprocess_cloud, preprocess_dataset
from pcrecon.runconfig import RunConfig
from pcrecon.sampling import nn_spacing_cv, point_mesh_distance, sample_surface_lloyd, sample_surface_uniform

# reference (CD x 100, F-score, score) rows: normalization comparison, then trick combinations
NORMALIZATION_ROWS = [(4.2, 84.97, 91.43), (1.49, 96.59, 97.92)]
COMBINATION_ROWS = [(4.2, 84.97, 91.43), (1.49, 96.59, 97.92), (1.45, 96.85, 98.06), (1.41, 96.98, 98.13)]

RESULTS = {}


def report(number, name, ok, detail):
    line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS[number] = line
    print("\n" + line, flush=True)
    assert ok, line


def rng(number):
    return rngmod.make_rng(number, 4242)


# 1 -----------------------------------------------------------------------------

def test_criterion_1_score_formula():
    worst = 0.0
    for cd100, f, score in NORMALIZATION_ROWS + COMBINATION_ROWS:
        worst = max(worst, abs(track_score(cd100 / 100, f, "A") - score))
    report(1, "track-A score formula vs reference rows", worst <= 0.05,
           f"{len(NORMALIZATION_ROWS) + len(COMBINATION_ROWS)} rows, max |error| {worst:.4f} (tol 0.05)")


# 2 -----------------------------------------------------------------------------

def _random_pair(gen):
    n, m = (int(v) for v in gen.integers(1, 2049, size=2))
    s, t = gen.uniform(-1, 1, size=(n, 3)), gen.normal(size=(m, 3)) * 0.5
    if gen.random() < 0.5:  # exact duplicates inside and across clouds
        k = max(1, n // 4)
        s[gen.integers(0, n, size=k)] = s[gen.integers(0, n, size=k)]
        t[: min(k, m)] = s[gen.integers(0, n, size=min(k, m))]
    if gen.random() < 0.25:  # quantised coordinates: many equidistant ties
        s, t = np.round(s * 4) / 4, np.round(t * 4) / 4
    return s, t


def test_criterion_2_metric_oracle():
    gen = rng(2)
    pairs, mismatches, t0 = 120, [], time.perf_counter()
    for k in range(pairs):
        s, t = _random_pair(gen)
        d_st, i_st = NnIndex(t).query_d2(s)
        d_ts, i_ts = NnIndex(s).query_d2(t)
        b_st, bi_st = bruteforce.nearest_d2(s, t)
        b_ts, bi_ts = bruteforce.nearest_d2(t, s)
        same = (np.array_equal(d_st, b_st) and np.array_equal(d_ts, b_ts)
                and np.array_equal(i_st, bi_st) and np.array_equal(i_ts, bi_ts))
        for mode in ("l2", "squared_l2"):
            for agg in ("mean", "max"):
                tree_cd = sum(chamfer_terms(d_st, d_ts, mode, agg))
                same &= tree_cd == bruteforce.chamfer(s, t, mode, agg) == chamfer(s, t, mode, agg)
        tau = float(gen.uniform(0.01, 0.3))
        same &= fscore(s, t, tau) == bruteforce.fscore(s, t, tau)
        if not same:
            mismatches.append(k)
    report(2, "kd-tree vs brute-force oracle", not mismatches,
           f"{pairs} pairs up to 2048 points, {len(mismatches)} mismatches, {time.perf_counter() - t0:.1f}s")


# 3 -----------------------------------------------------------------------------

def _rotation(gen):
    q, r = np.linalg.qr(gen.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def test_criterion_3_chamfer_properties():
    gen = rng(3)
    instances, failures = 1000, {"symmetry": 0, "identity": 0, "scale": 0, "rigid": 0, "max>=mean": 0}
    worst_scale = worst_rigid = 0.0
    for _ in range(instances):
        n, m = (int(v) for v in gen.integers(1, 200, size=2))
        s, t = gen.normal(size=(n, 3)), gen.normal(size=(m, 3)) + gen.normal(size=3)
        base = chamfer(s, t)
        failures["symmetry"] += chamfer(t, s) != base
        failures["identity"] += chamfer(s, s) != 0.0
        a = float(np.exp(gen.uniform(np.log(1e-3), np.log(1e3))))
        rel = abs(chamfer(a * s, a * t) - a * base) / (a * base)
        worst_scale = max(worst_scale, rel)
        failures["scale"] += rel > 1e-12
        R, shift = _rotation(gen), gen.normal(size=3) * 3
        moved = chamfer(s @ R.T + shift, t @ R.T + shift)
        worst_rigid = max(worst_rigid, abs(moved - base))
        failures["rigid"] += abs(moved - base) > 1e-9
        for mode in ("l2", "squared_l2"):
            failures["max>=mean"] += chamfer(s, t, mode, "max") < chamfer(s, t, mode, "mean")
    bad = {k: v for k, v in failures.items() if v}
    report(3, "Chamfer properties", not bad,
           f"{instances} instances each, failures {bad or 'none'}, worst scale rel {worst_scale:.1e}, "
           f"worst rigid abs {worst_rigid:.1e}")


# 4 -----------------------------------------------------------------------------

def _op_cases(gen):
    def away(shape):
        x = gen.uniform(0.05, 1.0, size=shape)
        return x * np.where(gen.random(shape) < 0.5, -1.0, 1.0)

    w23, w76 = gen.normal(size=(4, 3)), gen.normal(size=(7, 6))

    def structural(t, p):
        joined = concat_cols(p["a"], p["b"])
        stacked = concat_rows([joined, tile_rows(p["c"], 3), mean_rows(joined)])
        left, right = split_cols(stacked, 2)
        swapped = reshape(concat_cols(right, left), 7, 6)
        bias = concat_rows([tile_rows(p["c"], 6), mean_rows(tile_rows(p["c"], 2))])
        return weighted_sum(tanh_op(add(scale(swapped, 0.7), bias)), w76)

    smooth = {
        "linear": (lambda t, p: sum_all(linear(p["x"], p["W"], p["b"])),
                   {"x": gen.normal(size=(4, 5)), "W": gen.normal(size=(5, 3)), "b": gen.normal(size=(1, 3))}),
        "tanh": (lambda t, p: weighted_sum(tanh_op(p["x"]), w23), {"x": gen.normal(size=(4, 3))}),
        "concat/split/rows/tile/mean/reshape/add/scale": (
            structural, {"a": gen.normal(size=(3, 2)), "b": gen.normal(size=(3, 4)), "c": gen.normal(size=(1, 6))}),
        "im2col/conv2d": (lambda t, p: sum_all(tanh_op(conv2d(p["x"], 6, 6, p["W"], p["b"])[0])),
                          {"x": gen.normal(size=(36, 2)), "W": gen.normal(size=(18, 3)) * 0.3,
                           "b": gen.normal(size=(1, 3))}),
        "im2col stride 1": (lambda t, p: weighted_sum(tanh_op(im2col(p["x"], 4, 4, 3, 1, 1)[0]),
                                                      np.ones((16, 18))), {"x": gen.normal(size=(16, 2))}),
    }
    piecewise = {"leaky_relu": (lambda t, p: weighted_sum(leaky_relu(p["x"], 0.1), w23), {"x": away((4, 3))})}
    gt = gen.normal(size=(40, 3))
    for mode in ("l2", "squared_l2"):
        for agg in ("mean", "max"):
            piecewise[f"chamfer_loss {mode}/{agg}"] = (
                lambda t, p, mode=mode, agg=agg: chamfer_loss(p["y"], gt, mode, agg), {"y": gen.normal(size=(32, 3))})
    return smooth, piecewise


def test_criterion_4_gradients():
    gen = rng(4)
    smooth, piecewise = _op_cases(gen)
    t0 = time.perf_counter()
    errs = {}
    for name, (f, params) in smooth.items():
        errs[name] = (grad_check(f, params, h=1e-6, tol=1e-6), 1e-6)
    for name, (f, params) in piecewise.items():
        errs[name] = (grad_check(f, params, h=1e-6, tol=1e-4), 1e-4)
    model = model_grad_check(seed=0, h=1e-6, tol=1e-4)
    failed = [n for n, (r, _) in errs.items() if not r.passed] + ([] if model.passed else ["model"])
    worst_op = max(r.max_rel_err for r, _ in errs.values())
    report(4, "finite-difference gradients", not failed,
           f"{len(errs)} op checks (worst {worst_op:.1e}); miniature model {model.max_rel_err:.1e} over "
           f"{model.checked} entries ({model.skipped} assignment flips skipped); "
           f"failed {failed or 'none'}; {time.perf_counter() - t0:.1f}s")


# 5 -----------------------------------------------------------------------------

def test_criterion_5_overfit_fixture():
    t0 = time.perf_counter()
    cfg = overfit_config(seed=0)
    sample = overfit_sample(cfg)
    first = train(ReconModel.init(cfg), [sample], 5000)
    second = train(ReconModel.init(cfg), [sample], 5000)
    losses = np.array(first.losses)
    reached = np.flatnonzero(losses < 1e-3)
    deterministic = first.losses == second.losses
    cd = chamfer(infer(first.model, sample.image), overfit_targets()[0])
    ok = reached.size > 0 and deterministic and cd < 2e-3
    report(5, "overfit cube fixture", ok,
           f"loss < 1e-3 first at step {reached[0] + 1 if reached.size else 'never'} "
           f"(min {losses.min():.2e}), rerun identical {deterministic}, grid inference CD {cd:.2e} (tol 2e-3), "
           f"{time.perf_counter() - t0:.0f}s")


# 6 -----------------------------------------------------------------------------

def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


def test_criterion_6_preprocessing(tmp_path):
    gen = rng(6)
    problems = []
    worst_ball = worst_square = 0.0
    for i in range(50):
        raw = PointCloud(gen.normal(size=(int(gen.integers(2049, 6000)), 3)) * gen.uniform(0.1, 100)
                         + gen.normal(size=3) * 10)
        for method in ("unit_ball", "square"):
            for center in ("none", "centroid"):
                cfg = RunConfig(normalization=method, center=center, noise_sigma=0.01, seed=i)
                out, _, _ = preprocess_cloud(raw, cfg, sample_seed=i)
                if len(out) != 2048:
                    problems.append(f"{len(out)} points")
                if method == "unit_ball":
                    worst_ball = max(worst_ball, abs(np.linalg.norm(out.points, axis=1).max() - 1))
                else:
                    worst_square = max(worst_square, abs(np.abs(out.points).max() - 1))
        if len(downsample(raw, 2048, seed=i)) != 2048:
            problems.append("downsample size")
    if worst_ball > 1e-9 or worst_square > 1e-9:
        problems.append("norm bound")
    manifest = gen_fixtures(tmp_path / "fx", seed=1)
    cfg = RunConfig(sampling="uniform", seed=7)
    preprocess_dataset(manifest, cfg, tmp_path / "a")
    preprocess_dataset(manifest, cfg, tmp_path / "b")
    same = _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")
    if not same:
        problems.append("datasets differ")
    report(6, "preprocessing invariants", not problems,
           f"max |L2-1| {worst_ball:.1e}, max |Linf-1| {worst_square:.1e}, 2048 points every time, "
           f"byte-identical datasets {same}; problems {problems or 'none'}")


# 7 -----------------------------------------------------------------------------

def test_criterion_7_lloyd():
    cube = cube_mesh()
    uniform = sample_surface_uniform(cube, 512, seed=0).points
    lloyd = sample_surface_lloyd(cube, 512, iters=8, seed=0).points
    cv_u, cv_l = nn_spacing_cv(uniform.points), nn_spacing_cv(lloyd.points)
    dist = point_mesh_distance(cube, lloyd).max()
    report(7, "Lloyd sampling evenness", cv_l <= 0.7 * cv_u and dist <= 1e-6,
           f"CV uniform {cv_u:.3f}, CV Lloyd(8) {cv_l:.3f} (ratio {cv_l / cv_u:.2f}, tol 0.70), "
           f"max surface distance {dist:.1e}")


# 8 -----------------------------------------------------------------------------

TINY = ["--latent-dim", "16", "--hidden", "16,8", "--encoder-channels", "4,4,4,4", "--image-side", "16",
        "--n-points", "64", "--n-primitives", "4"]


def _pcrecon(*args):
    return [sys.executable, "-m", "pcrecon.cli", *args]


def _losses(run_dir):
    return [(r.step, r.loss) for r in read_log(run_dir)]


def test_criterion_8_determinism_and_resume(tmp_path):
    env = dict(os.environ, PYTHONHASHSEED="0")
    manifest = gen_fixtures(tmp_path / "fx", seed=2)
    data = tmp_path / "data"
    subprocess.run(_pcrecon("preprocess", "--manifest", str(manifest), "--out-dir", str(data), "--seed", "3",
                            *TINY), check=True, env=env, capture_output=True)
    steps = 400
    common = ["--dataset", str(data), "--seed", "3", "--steps", str(steps), "--checkpoint-every", "25", *TINY]
    for name in ("a", "b"):
        subprocess.run(_pcrecon("train", "--run-dir", str(tmp_path / name), *common), check=True, env=env,
                       capture_output=True)
    identical = _losses(tmp_path / "a") == _losses(tmp_path / "b") and len(_losses(tmp_path / "a")) == steps

    victim = tmp_path / "killed"
    proc = subprocess.Popen(_pcrecon("train", "--run-dir", str(victim), *common), env=env,
                            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    target = victim / "checkpoints" / "step_00000100.state.npz"
    while not target.exists() and proc.poll() is None:
        time.sleep(0.01)
    killed_mid_run = proc.poll() is None
    proc.send_signal(signal.SIGKILL)
    proc.wait()
    logged_at_kill = len(read_log(victim))
    subprocess.run(_pcrecon("train", "--run-dir", str(victim), "--resume", *common), check=True, env=env,
                   capture_output=True)
    resumed = _losses(victim) == _losses(tmp_path / "a")
    ok = identical and killed_mid_run and resumed
    report(8, "determinism and resume", ok,
           f"two runs bitwise-identical losses {identical}; SIGKILL mid-run {killed_mid_run} "
           f"(after {logged_at_kill} of {steps} steps), resumed losses identical {resumed}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s", "-p", "no:cacheprovider"]))
