from .io import (format_pointcloud, load_mesh, load_pointcloud, load_pose, write_mesh,
                 write_pointcloud, write_pose)
from .transforms import add_noise, apply_pose, denormalize, downsample, normalize, scale_cloud
from .types import CameraPose, PointCloud, TriangleMesh, as_points, triangle_areas

__all__ = [
    "CameraPose", "PointCloud", "TriangleMesh", "add_noise", "apply_pose", "as_points",
    "denormalize", "downsample", "format_pointcloud", "load_mesh", "load_pointcloud",
    "load_pose", "normalize", "scale_cloud", "triangle_areas", "write_mesh",
    "write_pointcloud", "write_pose",
]
