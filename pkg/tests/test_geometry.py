"""Point-cloud / mesh I-O, normalization, and mesh-topology helpers."""

import struct

import numpy as np
import pytest

from mlsfield.errors import (DegenerateExtentError, EmptyInputError,
                             ParseError)
from mlsfield.geometry import (TARGET_EXTENT, NormalizationTransform,
                               PointCloud, TriangleMesh,
                               euler_characteristic, is_closed_manifold,
                               load_mesh, load_point_cloud, normalize,
                               save_mesh, save_point_cloud)


class TestPointCloud:
    def test_diagonal_is_bbox_norm(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 2.0]])
        cloud = PointCloud(pts)
        assert cloud.diagonal == pytest.approx(3.0)
        np.testing.assert_array_equal(cloud.bbox_min, [0, 0, 0])
        np.testing.assert_array_equal(cloud.bbox_max, [1, 2, 2])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.empty((0, 3)))

    def test_non_unit_normals_rejected(self):
        pts = np.zeros((2, 3))
        pts[1, 0] = 1.0
        with pytest.raises(ValueError):
            PointCloud(pts, normals=np.full((2, 3), 0.9))

    def test_2d_supported(self):
        cloud = PointCloud(np.array([[0.0, 0.0], [3.0, 4.0]]))
        assert cloud.dim == 2
        assert cloud.diagonal == pytest.approx(5.0)


class TestNormalize:
    def test_longest_side_hits_target_extent(self):
        rng = np.random.default_rng(0)
        cloud = PointCloud(rng.uniform(-3, 9, size=(50, 3)))
        normalized, transform = normalize(cloud)
        sides = normalized.bbox_max - normalized.bbox_min
        assert sides.max() == pytest.approx(TARGET_EXTENT)
        # centering: bbox midpoint at the origin
        np.testing.assert_allclose(
            (normalized.bbox_max + normalized.bbox_min) / 2, 0, atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(20, 3)) * 7 + 3
        normalized, transform = normalize(PointCloud(pts))
        np.testing.assert_allclose(transform.invert(normalized.points), pts,
                                   atol=1e-12)
        np.testing.assert_allclose(transform.apply(pts), normalized.points,
                                   atol=1e-12)

    def test_degenerate_extent(self):
        with pytest.raises(DegenerateExtentError):
            normalize(PointCloud(np.zeros((5, 3))))

    def test_transform_dict_round_trip(self):
        _, transform = normalize(PointCloud(np.array([[0., 0, 0], [2, 1, 1]])))
        again = NormalizationTransform.from_dict(transform.to_dict())
        np.testing.assert_array_equal(again.center, transform.center)
        assert again.scale == transform.scale


class TestPointCloudFiles:
    def test_xyz_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        pts = rng.normal(size=(17, 3))
        cloud = PointCloud(pts)
        path = tmp_path / "c.xyz"
        save_point_cloud(cloud, path)
        again = load_point_cloud(path)
        np.testing.assert_allclose(again.points, pts, atol=0)

    def test_xyz_with_comments_and_commas(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# header\n0,0,0\n1, 2, 3\n")
        cloud = load_point_cloud(path)
        np.testing.assert_array_equal(cloud.points,
                                      [[0, 0, 0], [1, 2, 3]])

    def test_xyz_bad_line_reports_line_number(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("0 0 0\n1 2 oops\n")
        with pytest.raises(ParseError) as err:
            load_point_cloud(path)
        assert err.value.line == 2

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("# nothing\n")
        with pytest.raises(EmptyInputError):
            load_point_cloud(path)

    def test_ply_ascii_normals(self, tmp_path):
        path = tmp_path / "c.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "property float nx\nproperty float ny\nproperty float nz\n"
            "end_header\n0 0 0 1 0 0\n1 1 1 0 0 1\n")
        cloud = load_point_cloud(path)
        assert cloud.normals is not None
        np.testing.assert_allclose(cloud.normals,
                                   [[1, 0, 0], [0, 0, 1]])

    def test_ply_binary_round_trip(self, tmp_path):
        path = tmp_path / "c.ply"
        header = (b"ply\nformat binary_little_endian 1.0\n"
                  b"element vertex 2\nproperty double x\n"
                  b"property double y\nproperty double z\nend_header\n")
        body = struct.pack("<6d", 0.25, -1, 2, 3, 4, 5.5)
        path.write_bytes(header + body)
        cloud = load_point_cloud(path)
        np.testing.assert_array_equal(cloud.points,
                                      [[0.25, -1, 2], [3, 4, 5.5]])

    def test_obj_points(self, tmp_path):
        path = tmp_path / "c.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nf 1 2 1\n")
        cloud = load_point_cloud(path)
        assert len(cloud) == 2


class TestMeshIO:
    def _tetra(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        faces = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
        return TriangleMesh(verts, faces)

    def test_obj_round_trip(self, tmp_path):
        mesh = self._tetra()
        path = tmp_path / "m.obj"
        save_mesh(mesh, path)
        again = load_mesh(path)
        np.testing.assert_allclose(again.vertices, mesh.vertices)
        np.testing.assert_array_equal(again.faces, mesh.faces)

    def test_ply_round_trip(self, tmp_path):
        mesh = self._tetra()
        path = tmp_path / "m.ply"
        save_mesh(mesh, path)
        again = load_mesh(path)
        np.testing.assert_allclose(again.vertices, mesh.vertices)
        np.testing.assert_array_equal(again.faces, mesh.faces)

    def test_obj_quad_fan_and_negative_indices(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                        "f 1/1/1 2/2/2 3/3/3 4/4/4\nf -4 -3 -2\n")
        mesh = load_mesh(path)
        assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3], [0, 1, 2]]

    def test_mesh_with_transform_written_in_world_units(self, tmp_path):
        mesh = self._tetra()
        cloud = PointCloud(mesh.vertices * 4.0 + 10.0)
        _, transform = normalize(cloud)
        path = tmp_path / "m.obj"
        save_mesh(TriangleMesh(transform.apply(mesh.vertices * 4.0 + 10.0),
                               mesh.faces),
                  path, transform=transform)
        again = load_mesh(path)
        np.testing.assert_allclose(again.vertices, mesh.vertices * 4.0 + 10.0,
                                   atol=1e-9)

    def test_empty_mesh_written_with_warning(self, tmp_path):
        empty = TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=np.int64))
        path = tmp_path / "m.obj"
        with pytest.warns(UserWarning):
            save_mesh(empty, path)
        assert load_mesh(path).is_empty

    def test_out_of_range_face_index(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(ParseError):
            load_mesh(path)


class TestMeshTopology:
    def test_tetrahedron_is_closed_with_euler_2(self):
        verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        faces = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
        mesh = TriangleMesh(verts, faces)
        assert is_closed_manifold(mesh)
        assert euler_characteristic(mesh) == 2

    def test_open_triangle_not_closed(self):
        mesh = TriangleMesh(np.eye(3), np.array([[0, 1, 2]]))
        assert not is_closed_manifold(mesh)

    def test_face_normals_unit_and_outward(self):
        # Single CCW triangle in the z=0 plane: normal must be +z.
        mesh = TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]),
                            np.array([[0, 1, 2]]))
        np.testing.assert_allclose(mesh.face_normals(), [[0, 0, 1]])
        assert mesh.face_areas()[0] == pytest.approx(0.5)
