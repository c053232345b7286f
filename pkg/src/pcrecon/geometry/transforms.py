"""Per-point preprocessing transforms. All preserve point count and order."""

import logging

import numpy as np

from .. import rng as rngmod
from ..errors import DegenerateCloud, InvalidPose
from .types import CameraPose, PointCloud, as_points

log = logging.getLogger(__name__)

NORMALIZE_METHODS = ("unit_ball", "square")
CENTER_MODES = ("none", "centroid")


def normalize(cloud, method="unit_ball", center="none"):
    """Scale a cloud so its farthest point sits on the unit sphere or unit cube.

    ``unit_ball`` divides by the largest L2 norm, ``square`` by the largest
    L-infinity norm. With ``center="centroid"`` the centroid is subtracted
    first. Returns ``(cloud, scale, offset)`` with ``out = (in - offset) / scale``.
    """
    if method not in NORMALIZE_METHODS:
        raise ValueError(f"unknown normalization {method!r}; expected one of {NORMALIZE_METHODS}")
    if center not in CENTER_MODES:
        raise ValueError(f"unknown centering {center!r}; expected one of {CENTER_MODES}")
    pts = as_points(cloud)
    offset = pts.mean(axis=0) if center == "centroid" else np.zeros(3)
    shifted = pts - offset
    if method == "unit_ball":
        scale = float(np.sqrt((shifted * shifted).sum(axis=1)).max())
    else:
        scale = float(np.abs(shifted).max())
    if not scale > 0:
        raise DegenerateCloud("every point coincides with the normalization center")
    return PointCloud(shifted / scale), scale, offset


def denormalize(cloud, scale, offset):
    return PointCloud(as_points(cloud) * scale + np.asarray(offset, dtype=np.float64))


def apply_pose(cloud, pose):
    """Map each point ``p`` to ``R @ p + t``."""
    if not isinstance(pose, CameraPose):
        try:
            pose = CameraPose(*pose)
        except TypeError:
            raise InvalidPose(f"expected a CameraPose, got {type(pose).__name__}") from None
    return PointCloud(as_points(cloud) @ pose.rotation.T + pose.translation)


def downsample(cloud, n, seed):
    """Uniformly pick ``n`` points without replacement.

    Clouds smaller than ``n`` are padded by sampling with replacement, with a
    logged warning, so the output always has exactly ``n`` points.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pts = as_points(cloud)
    gen = rngmod.make_rng(seed, rngmod.DOWNSAMPLE)
    if len(pts) >= n:
        idx = np.sort(gen.choice(len(pts), size=n, replace=False))
    else:
        log.warning("cloud has %d points, fewer than %d; sampling with replacement", len(pts), n)
        idx = gen.integers(0, len(pts), size=n)
    return PointCloud(pts[idx])


def add_noise(cloud, sigma, seed):
    """Perturb every coordinate with independent N(0, sigma^2) noise."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    pts = as_points(cloud)
    if sigma == 0:
        return PointCloud(pts)
    gen = rngmod.make_rng(seed, rngmod.NOISE)
    return PointCloud(pts + gen.normal(0.0, sigma, size=pts.shape))


def scale_cloud(cloud, factor):
    if not factor > 0:
        raise ValueError(f"scale factor must be > 0, got {factor}")
    return PointCloud(as_points(cloud) * factor)
