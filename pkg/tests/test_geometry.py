import numpy as np
import pytest

from pcrecon.errors import DegenerateCloud, DegenerateFace, EmptyCloud, InvalidPose, ParseError
from pcrecon.geometry import (CameraPose, PointCloud, TriangleMesh, add_noise, apply_pose, denormalize,
                              downsample, load_mesh, load_pointcloud, load_pose, normalize, scale_cloud,
                              write_mesh, write_pointcloud, write_pose)


def rot_z(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])


# --- types -----------------------------------------------------------------

def test_pointcloud_validates_shape_and_finiteness():
    with pytest.raises(EmptyCloud):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]))
    pc = PointCloud([[1, 2, 3]])
    assert len(pc) == 1 and pc.points.dtype == np.float64
    with pytest.raises(ValueError):
        pc.points[0, 0] = 5.0


def test_mesh_rejects_degenerate_faces():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], float)
    with pytest.raises(DegenerateFace):
        TriangleMesh(v, [[0, 1, 1]])
    with pytest.raises(DegenerateFace) as info:
        TriangleMesh(v, [[0, 1, 2], [0, 1, 3]])  # collinear
    assert info.value.face_index == 1
    with pytest.raises(ParseError):
        TriangleMesh(v, [[0, 1, 7]])


def test_pose_requires_rotation():
    with pytest.raises(InvalidPose):
        CameraPose(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(InvalidPose):
        CameraPose(np.eye(3) * 1.01)
    CameraPose(rot_z(30), [1, 2, 3])


# --- io --------------------------------------------------------------------

def test_xyz_two_lines(tmp_path):
    p = tmp_path / "a.xyz"
    p.write_text("0 0 0\n1 2 3\n")
    pc = load_pointcloud(p)
    np.testing.assert_array_equal(pc.points, [[0, 0, 0], [1, 2, 3]])


@pytest.mark.parametrize("suffix", ["xyz", "ply"])
def test_pointcloud_roundtrip(tmp_path, gen, suffix):
    pts = gen.uniform(-1, 1, size=(257, 3))
    p = tmp_path / f"c.{suffix}"
    write_pointcloud(p, pts)
    back = load_pointcloud(p)
    assert np.abs(back.points - pts).max() < 1e-6


def test_ply_missing_end_header(tmp_path):
    p = tmp_path / "bad.ply"
    p.write_text("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n"
                 "property float z\n0 0 0\n")
    with pytest.raises(ParseError):
        load_pointcloud(p)


def test_ply_binary_rejected(tmp_path):
    p = tmp_path / "bin.ply"
    p.write_text("ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n")
    with pytest.raises(ParseError):
        load_pointcloud(p)


def test_xyz_garbage(tmp_path):
    p = tmp_path / "bad.xyz"
    p.write_text("0 0 zero\n")
    with pytest.raises(ParseError):
        load_pointcloud(p)


CUBE_OBJ = """# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
"""


def test_obj_cube(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    assert m.vertices.shape == (8, 3) and m.faces.shape == (12, 3)
    assert m.face_areas.sum() == pytest.approx(6.0)


def test_obj_quad_fan_and_slashes(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 3/1 4/1\n")
    m = load_mesh(p)
    np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])


def test_obj_out_of_range(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text(CUBE_OBJ + "f 1 2 9\n")
    with pytest.raises(ParseError):
        load_mesh(p)


def test_mesh_roundtrip(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(CUBE_OBJ)
    m = load_mesh(p)
    write_mesh(tmp_path / "out.obj", m)
    m2 = load_mesh(tmp_path / "out.obj")
    np.testing.assert_array_equal(m.faces, m2.faces)
    np.testing.assert_array_equal(m.vertices, m2.vertices)


def test_pose_roundtrip(tmp_path):
    pose = CameraPose(rot_z(37.0), [0.1, -2.0, 3.5])
    write_pose(tmp_path / "p.txt", pose)
    back = load_pose(tmp_path / "p.txt")
    np.testing.assert_array_equal(back.rotation, pose.rotation)
    np.testing.assert_array_equal(back.translation, pose.translation)


# --- transforms --------------------------------------------------------------

@pytest.mark.parametrize("method", ["unit_ball", "square"])
def test_normalize_two_points(method):
    out, scale, offset = normalize(PointCloud([[2, 0, 0], [0, 1, 0]]), method)
    np.testing.assert_allclose(out.points, [[1, 0, 0], [0, 0.5, 0]])
    assert scale == 2.0
    np.testing.assert_array_equal(offset, 0)


def test_normalize_degenerate():
    with pytest.raises(DegenerateCloud):
        normalize(PointCloud([[1, 1, 1]]), center="centroid")


def test_normalize_bounds_and_inverse(gen):
    pc = PointCloud(gen.normal(3.0, 2.0, size=(500, 3)))
    ball, s, off = normalize(pc, "unit_ball", "centroid")
    assert abs(np.linalg.norm(ball.points, axis=1).max() - 1) < 1e-12
    np.testing.assert_allclose(ball.points.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(denormalize(ball, s, off).points, pc.points, atol=1e-12)
    sq, _, _ = normalize(pc, "square")
    assert abs(np.abs(sq.points).max() - 1) < 1e-12


def test_apply_pose():
    pc = PointCloud([[1.0, 0, 0]])
    assert apply_pose(pc, CameraPose.identity()).points.tolist() == [[1.0, 0, 0]]
    np.testing.assert_allclose(apply_pose(pc, CameraPose(rot_z(90))).points, [[0, 1, 0]], atol=1e-9)


def test_apply_pose_inverse(gen):
    pc = PointCloud(gen.normal(size=(100, 3)))
    q, _ = np.linalg.qr(gen.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    pose = CameraPose(q, gen.normal(size=3))
    back = apply_pose(apply_pose(pc, pose), pose.inverse())
    np.testing.assert_allclose(back.points, pc.points, atol=1e-9)


def test_downsample(gen):
    pc = PointCloud(gen.normal(size=(4096, 3)))
    out = downsample(pc, 2048, seed=3)
    assert len(out) == 2048
    members = {tuple(p) for p in pc.points}
    assert all(tuple(p) in members for p in out.points)
    assert len({tuple(p) for p in out.points}) == 2048
    np.testing.assert_array_equal(out.points, downsample(pc, 2048, seed=3).points)
    np.testing.assert_array_equal(downsample(pc, 4096, seed=9).points, pc.points)


def test_downsample_small_cloud_repeats(caplog):
    pc = PointCloud(np.eye(3))
    out = downsample(pc, 10, seed=0)
    assert len(out) == 10
    assert "fewer than" in caplog.text


def test_add_noise(gen):
    pc = PointCloud(gen.normal(size=(100_000, 3)))
    np.testing.assert_array_equal(add_noise(pc, 0.0, seed=1).points, pc.points)
    noisy = add_noise(pc, 0.01, seed=1)
    sd = (noisy.points - pc.points).std()
    assert 0.0095 <= sd <= 0.0105
    np.testing.assert_array_equal(noisy.points, add_noise(pc, 0.01, seed=1).points)


def test_scale_cloud():
    pc = PointCloud([[0.1, 0, 0]])
    assert scale_cloud(pc, 1.0).points.tolist() == pc.points.tolist()
    np.testing.assert_allclose(scale_cloud(pc, 50).points, [[5, 0, 0]])
    np.testing.assert_allclose(scale_cloud(scale_cloud(pc, 0.02), 50).points, pc.points, atol=1e-12)
    with pytest.raises(ValueError):
        scale_cloud(pc, 0.0)
