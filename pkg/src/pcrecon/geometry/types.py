from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateFace, EmptyCloud, InvalidPose, ParseError


def _frozen(array, dtype=np.float64):
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered, immutable set of 3D points stored as an ``(n, 3)`` float64 array."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim == 1 and pts.size == 3:
            pts = _frozen(pts.reshape(1, 3))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
        if len(pts) == 0:
            raise EmptyCloud("point cloud has no points")
        if not np.isfinite(pts).all():
            raise ValueError("point cloud contains NaN or Inf")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    def __iter__(self):
        return iter(self.points)


def as_points(cloud):
    """Return the ``(n, 3)`` array behind a PointCloud or array-like."""
    if isinstance(cloud, PointCloud):
        return cloud.points
    return PointCloud(cloud).points


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = _frozen(self.vertices)
        faces = _frozen(self.faces, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise ValueError(f"vertices must be (n, 3), got {verts.shape}")
        if not np.isfinite(verts).all():
            raise ValueError("mesh vertices contain NaN or Inf")
        if faces.size == 0:
            faces = _frozen(np.zeros((0, 3)), dtype=np.int64)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must be (m, 3), got {faces.shape}")
        if len(faces) and (faces.min() < 0 or faces.max() >= len(verts)):
            bad = int(np.nonzero((faces < 0).any(1) | (faces >= len(verts)).any(1))[0][0])
            raise ParseError(f"face {bad} references a vertex outside 0..{len(verts) - 1}")
        for i, f in enumerate(faces):
            if len(set(f.tolist())) != 3:
                raise DegenerateFace(i, f"face {i} repeats a vertex index")
        areas = triangle_areas(verts, faces)
        if len(areas) and (areas <= 0).any():
            raise DegenerateFace(int(np.argmin(areas)))
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def triangles(self):
        """``(m, 3, 3)`` corner coordinates per face."""
        return self.vertices[self.faces]

    @property
    def face_areas(self):
        return triangle_areas(self.vertices, self.faces)


def triangle_areas(vertices, faces):
    tri = np.asarray(vertices)[np.asarray(faces)]
    return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


@dataclass(frozen=True, eq=False)
class CameraPose:
    """Rigid transform ``p -> R @ p + t``.

    ``R`` must be a proper rotation: every entry of ``R.T @ R - I`` within
    1e-6 and ``det(R) > 0``.
    """

    rotation: np.ndarray
    translation: np.ndarray = None

    def __post_init__(self):
        rot = _frozen(self.rotation)
        trans = _frozen(np.zeros(3) if self.translation is None else self.translation)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise InvalidPose(f"rotation must be 3x3 and translation 3-vector, got {rot.shape}, {trans.shape}")
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise InvalidPose("pose contains NaN or Inf")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > 1e-6:
            raise InvalidPose(f"rotation is not orthonormal (max |R^T R - I| = {err:.3g})")
        if np.linalg.det(rot) <= 0:
            raise InvalidPose("rotation has negative determinant (reflection)")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def inverse(self):
        rt = self.rotation.T
        return CameraPose(rt, -rt @ self.translation)

    def matrix(self):
        """Row-major ``3x4`` ``[R|t]``."""
        return np.hstack([self.rotation, self.translation[:, None]])
