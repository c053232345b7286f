"""UV-square sampling for the decoders and surface sampling of triangle meshes."""

import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .errors import EmptyMesh, NotPerfectSquare
from .geometry.types import PointCloud, TriangleMesh
from .metrics.kdtree import NnIndex

UV_LAYOUTS = ("random", "regular_grid")
SURFACE_METHODS = ("area_uniform", "lloyd")


@dataclass(frozen=True, eq=False)
class UvBatch:
    points: np.ndarray  # (n, 2), entries in [0, 1]
    layout: str

    @property
    def n(self):
        return len(self.points)


def sample_uv_random(n, seed, stream=()):
    """``n`` i.i.d. uniform points in the unit square."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    gen = rngmod.make_rng(seed, rngmod.UV_RANDOM, *stream)
    return UvBatch(gen.random((n, 2)), "random")


def grid_side(n):
    g = math.isqrt(n) if n >= 1 else 0
    if n < 1 or g * g != n:
        raise NotPerfectSquare(f"regular grid needs a perfect square count, got {n}")
    return g


def sample_uv_grid(n):
    """Cell centres ``((i + 0.5) / g, (j + 0.5) / g)`` of a g-by-g lattice, row-major."""
    g = grid_side(n)
    c = (np.arange(g) + 0.5) / g
    ii, jj = np.meshgrid(c, c, indexing="ij")
    return UvBatch(np.stack([ii.ravel(), jj.ravel()], axis=1), "regular_grid")


@dataclass(frozen=True, eq=False)
class SurfaceSample:
    points: PointCloud
    mesh_id: str
    method: str


def _check_mesh(mesh):
    if not isinstance(mesh, TriangleMesh):
        raise TypeError(f"expected TriangleMesh, got {type(mesh).__name__}")
    if len(mesh.faces) == 0:
        raise EmptyMesh("mesh has no faces")


def _area_uniform_points(mesh, n, gen):
    tri = mesh.triangles
    cum = np.cumsum(mesh.face_areas)
    face = np.searchsorted(cum, gen.random(n) * cum[-1], side="right")
    face = np.minimum(face, len(cum) - 1)
    uv = gen.random((n, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    a = tri[face, 0]
    pts = a + uv[:, :1] * (tri[face, 1] - a) + uv[:, 1:] * (tri[face, 2] - a)
    return pts, face


def sample_surface_uniform(mesh, n, seed, mesh_id=""):
    """Area-weighted face choice with uniform barycentric placement."""
    _check_mesh(mesh)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    pts, _ = _area_uniform_points(mesh, n, rngmod.make_rng(seed, rngmod.SURFACE))
    return SurfaceSample(PointCloud(pts), mesh_id, "area_uniform")


def closest_point_on_triangle(p, a, b, c):
    """Closest point on triangle ``abc`` to ``p``; all arguments broadcast over leading axes.

    Voronoi-region walk: the three vertex regions, the three edge regions,
    else the face interior.
    """
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c

    def dot(u, v):
        return np.einsum("...k,...k->...", u, v)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        t_ab = d1 / (d1 - d3)
        t_ac = d2 / (d2 - d6)
        t_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
    v, w = vb * denom, vc * denom

    conds = [
        (d1 <= 0) & (d2 <= 0),
        (d3 >= 0) & (d4 <= d3),
        (d6 >= 0) & (d5 <= d6),
        (vc <= 0) & (d1 >= 0) & (d3 <= 0),
        (vb <= 0) & (d2 >= 0) & (d6 <= 0),
        (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0),
    ]
    choices = [
        a, b, c,
        a + t_ab[..., None] * ab,
        a + t_ac[..., None] * ac,
        b + t_bc[..., None] * (c - b),
    ]
    out = a + v[..., None] * ab + w[..., None] * ac
    # apply in reverse so earlier regions take precedence
    for cond, choice in zip(reversed(conds), reversed(choices)):
        out = np.where(cond[..., None], np.broadcast_to(choice, out.shape), out)
    return out


def project_to_mesh(mesh, points, chunk_elems=2_000_000):
    """Closest surface point, its distance and face index for every query point."""
    _check_mesh(mesh)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.triangles
    a, b, c = tri[None, :, 0], tri[None, :, 1], tri[None, :, 2]
    step = max(1, chunk_elems // max(1, len(tri)))
    proj = np.empty_like(pts)
    dist = np.empty(len(pts))
    face = np.empty(len(pts), dtype=np.int64)
    for lo in range(0, len(pts), step):
        p = pts[lo:lo + step, None, :]
        cand = closest_point_on_triangle(p, a, b, c)
        diff = cand - p
        d2 = np.einsum("...k,...k->...", diff, diff)
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(k))
        proj[lo:lo + step] = cand[rows, k]
        dist[lo:lo + step] = np.sqrt(d2[rows, k])
        face[lo:lo + step] = k
    return proj, dist, face


def point_mesh_distance(mesh, points):
    return project_to_mesh(mesh, points)[1]


def _kmeanspp_pick(dense, k, gen):
    n = len(dense)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = gen.integers(n)
    diff = dense - dense[chosen[0]]
    best = np.einsum("ij,ij->i", diff, diff)
    for j in range(1, k):
        total = best.sum()
        if total <= 0:
            # every dense point already coincides with a centre
            chosen[j] = gen.integers(n)
        else:
            chosen[j] = min(int(np.searchsorted(np.cumsum(best), gen.random() * total, side="right")), n - 1)
        diff = dense - dense[chosen[j]]
        np.minimum(best, np.einsum("ij,ij->i", diff, diff), out=best)
    return chosen


def sample_surface_lloyd(mesh, n, iters=8, oversample=16, seed=0, mesh_id=""):
    """Approximate surface Lloyd relaxation by restricted k-means.

    Draws ``oversample * n`` area-uniform points, seeds ``n`` centres from
    them k-means++ style, then runs ``iters`` rounds of: assign dense points
    to the nearest centre, move each centre to its cluster mean, project it
    back onto the mesh. Centres with empty clusters stay put.
    """
    _check_mesh(mesh)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    if oversample < 4:
        raise ValueError(f"oversample must be >= 4, got {oversample}")
    dense, _ = _area_uniform_points(mesh, int(oversample * n), rngmod.make_rng(seed, rngmod.SURFACE))
    centres = dense[_kmeanspp_pick(dense, n, rngmod.make_rng(seed, rngmod.LLOYD_INIT))]
    for _ in range(iters):
        _, label = NnIndex(centres).query_d2(dense)
        counts = np.bincount(label, minlength=n)
        sums = np.stack([np.bincount(label, weights=dense[:, k], minlength=n) for k in range(3)], axis=1)
        filled = counts > 0
        means = centres.copy()
        means[filled] = sums[filled] / counts[filled, None]
        centres, _, _ = project_to_mesh(mesh, means)
    return SurfaceSample(PointCloud(centres), mesh_id, "lloyd")


def nn_spacing_cv(points):
    """Coefficient of variation of each point's distance to its nearest other point."""
    pts = np.asarray(points, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    np.fill_diagonal(d2, np.inf)
    nn = np.sqrt(d2.min(axis=1))
    return float(nn.std() / nn.mean())
