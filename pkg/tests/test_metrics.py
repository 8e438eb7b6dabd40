"""Surface metrics against brute-force double loops and hand values."""

import json

import numpy as np
import pytest

from mlsfield.errors import (
    ConfigurationError,
    DegenerateMeshError,
    EmptyInputError,
)
from mlsfield.geometry import PointCloud, TriangleMesh
from mlsfield.metrics import (
    CHAMFER_CONVENTIONS,
    FSCORE_PRESETS,
    SAMPLE_PRESETS,
    MetricsConfig,
    SampledSurface,
    chamfer,
    evaluate_meshes,
    evaluate_surfaces,
    f_score,
    hausdorff,
    normal_consistency,
    sample_surface,
)


def brute_nearest(a, b):
    """All-pairs distances; the library must agree bit-for-bit."""
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    return d.min(axis=1), d.argmin(axis=1)


def random_surfaces(seed, n=60, m=45, dim=3, with_normals=False):
    rng = np.random.default_rng(seed)
    def mk(count):
        pts = rng.normal(size=(count, dim))
        normals = None
        if with_normals:
            normals = rng.normal(size=(count, dim))
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return SampledSurface(points=pts, normals=normals)
    return mk(n), mk(m)


def tetrahedron():
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                         [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    faces = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriangleMesh(vertices, faces)


class TestChamfer:
    @pytest.mark.parametrize("convention", CHAMFER_CONVENTIONS)
    @pytest.mark.parametrize("dim", [2, 3])
    def test_matches_brute_force_exactly(self, convention, dim):
        x, y = random_surfaces(seed=dim, dim=dim)
        d_xy, _ = brute_nearest(x.points, y.points)
        d_yx, _ = brute_nearest(y.points, x.points)
        if convention == "mean_l2":
            want = (0.5 * d_xy.mean() + 0.5 * d_yx.mean(),
                    d_xy.mean(), d_yx.mean())
        elif convention == "sum_l2":
            want = (d_xy.sum() + d_yx.sum(), d_xy.sum(), d_yx.sum())
        else:
            want = (0.5 * (d_xy ** 2).mean() + 0.5 * (d_yx ** 2).mean(),
                    (d_xy ** 2).mean(), (d_yx ** 2).mean())
        assert chamfer(x, y, convention) == want

    def test_hand_example(self):
        x = SampledSurface(np.array([[0.0, 0.0]]))
        y = SampledSurface(np.array([[3.0, 4.0]]))
        assert chamfer(x, y, "mean_l2") == (5.0, 5.0, 5.0)
        assert chamfer(x, y, "sum_l2") == (10.0, 5.0, 5.0)
        assert chamfer(x, y, "mean_sq") == (25.0, 25.0, 25.0)

    def test_self_distance_is_zero(self):
        x, _ = random_surfaces(seed=5)
        for convention in CHAMFER_CONVENTIONS:
            assert chamfer(x, x, convention)[0] == 0.0

    def test_symmetric_total_swapped_sides(self):
        x, y = random_surfaces(seed=7)
        cd_xy, a, b = chamfer(x, y)
        cd_yx, c, d = chamfer(y, x)
        assert cd_xy == cd_yx
        assert (a, b) == (d, c)

    def test_unknown_convention_rejected(self):
        x, y = random_surfaces(seed=1)
        with pytest.raises(ConfigurationError, match="convention"):
            chamfer(x, y, "l1")


class TestHausdorff:
    def test_matches_brute_force_exactly(self):
        x, y = random_surfaces(seed=3)
        d_xy, _ = brute_nearest(x.points, y.points)
        d_yx, _ = brute_nearest(y.points, x.points)
        assert hausdorff(x, y) == (max(d_xy.max(), d_yx.max()),
                                   d_xy.max(), d_yx.max())

    def test_dominates_mean_chamfer(self):
        x, y = random_surfaces(seed=9)
        assert hausdorff(x, y)[0] >= chamfer(x, y, "mean_l2")[0]

    def test_hand_example(self):
        x = SampledSurface(np.array([[0.0, 0.0], [10.0, 0.0]]))
        y = SampledSurface(np.array([[0.0, 1.0]]))
        assert hausdorff(x, y) == (np.sqrt(101.0), np.sqrt(101.0), 1.0)


class TestNormalConsistency:
    def test_matches_brute_force_exactly(self):
        x, y = random_surfaces(seed=11, with_normals=True)
        _, idx_xy = brute_nearest(x.points, y.points)
        _, idx_yx = brute_nearest(y.points, x.points)
        want = 0.5 * np.abs(
            np.einsum("ij,ij->i", x.normals, y.normals[idx_xy])).mean() \
            + 0.5 * np.abs(
            np.einsum("ij,ij->i", y.normals, x.normals[idx_yx])).mean()
        assert normal_consistency(x, y) == want

    def test_sign_flips_do_not_matter(self):
        x, _ = random_surfaces(seed=13, with_normals=True)
        flipped = SampledSurface(points=x.points, normals=-x.normals)
        np.testing.assert_allclose(normal_consistency(x, flipped), 1.0,
                                   atol=1e-12)

    def test_orthogonal_normals_score_zero(self):
        x = SampledSurface(np.array([[0.0, 0.0, 0.0]]),
                           normals=np.array([[1.0, 0.0, 0.0]]))
        y = SampledSurface(np.array([[0.0, 0.0, 0.0]]),
                           normals=np.array([[0.0, 1.0, 0.0]]))
        assert normal_consistency(x, y) == 0.0

    def test_requires_normals(self):
        x, y = random_surfaces(seed=15, with_normals=False)
        with pytest.raises(ConfigurationError, match="normals"):
            normal_consistency(x, y)


class TestFScore:
    def test_matches_brute_force_exactly(self):
        x, y = random_surfaces(seed=17)
        tau = 0.8
        d_yx, _ = brute_nearest(y.points, x.points)
        d_xy, _ = brute_nearest(x.points, y.points)
        precision = (d_yx <= tau).mean()
        recall = (d_xy <= tau).mean()
        want_fs = 2 * precision * recall / (precision + recall)
        assert f_score(x, y, tau) == (want_fs, precision, recall)

    def test_precision_and_recall_play_their_roles(self):
        """A prediction hugging part of the reference: perfect precision,
        partial recall."""
        ref = SampledSurface(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0],
                                       [3.0, 0.0]]))
        pred = SampledSurface(np.array([[0.0, 0.0], [1.0, 0.0]]))
        fs, precision, recall = f_score(ref, pred, tau=0.1)
        assert precision == 1.0
        assert recall == 0.5
        np.testing.assert_allclose(fs, 2 / 3)

    def test_disjoint_sets_score_zero(self):
        x = SampledSurface(np.array([[0.0, 0.0]]))
        y = SampledSurface(np.array([[9.0, 9.0]]))
        assert f_score(x, y, tau=0.01) == (0.0, 0.0, 0.0)

    def test_threshold_must_be_positive(self):
        x, y = random_surfaces(seed=19)
        with pytest.raises(ConfigurationError):
            f_score(x, y, tau=0.0)


class TestSampleSurface:
    def _two_triangles(self):
        vertices = np.array([
            [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0],   # area 1
            [0.0, 0.0, 1.0], [3.0, 0.0, 1.0], [0.0, 2.0, 1.0],   # area 3
        ])
        faces = np.array([[0, 1, 2], [3, 4, 5]])
        return TriangleMesh(vertices, faces)

    def test_area_weighted_selection(self):
        surf = sample_surface(self._two_triangles(), 20_000, seed=0)
        upper = surf.points[:, 2] == 1.0
        np.testing.assert_allclose(upper.mean(), 0.75, atol=0.02)

    def test_samples_stay_inside_their_triangle(self):
        surf = sample_surface(self._two_triangles(), 5_000, seed=1)
        lower = surf.points[surf.points[:, 2] == 0.0]
        x, y = lower[:, 0], lower[:, 1]
        assert (x >= 0).all() and (y >= 0).all()
        assert (x + y / 2.0 <= 1.0 + 1e-12).all()

    def test_normals_come_from_the_face(self):
        surf = sample_surface(self._two_triangles(), 100, seed=2)
        np.testing.assert_array_equal(surf.normals,
                                      np.tile([0.0, 0.0, 1.0], (100, 1)))
        assert surf.source == "mesh"

    def test_deterministic_by_seed(self):
        mesh = tetrahedron()
        a = sample_surface(mesh, 50, seed=3)
        b = sample_surface(mesh, 50, seed=3)
        c = sample_surface(mesh, 50, seed=4)
        np.testing.assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_degenerate_meshes_rejected(self):
        with pytest.raises(DegenerateMeshError, match="empty"):
            sample_surface(TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3))), 10)
        flat = TriangleMesh(np.zeros((3, 3)), np.array([[0, 1, 2]]))
        with pytest.raises(DegenerateMeshError, match="area"):
            sample_surface(flat, 10)


class TestEvaluate:
    def test_mesh_against_itself_is_perfect(self):
        mesh = tetrahedron()
        config = MetricsConfig(sample_count=500, fscore_thresholds=(0.01,))
        report = evaluate_meshes(mesh, mesh, config)
        assert report.cd == 0.0
        assert report.hd == 0.0
        assert report.nc == 1.0
        assert report.fscores[0.01] == (1.0, 1.0, 1.0)

    def test_surface_report_carries_provenance(self):
        x, y = random_surfaces(seed=21, with_normals=True)
        config = MetricsConfig(sample_count=60, fscore_thresholds=(0.5, 1.0),
                               chamfer_convention="mean_sq", seed=4)
        report = evaluate_surfaces(x, y, config)
        assert report.chamfer_convention == "mean_sq"
        assert report.sample_count == 60
        assert report.seed == 4
        assert set(report.fscores) == {0.5, 1.0}
        assert report.cd == chamfer(x, y, "mean_sq")[0]

    def test_nc_omitted_without_normals(self):
        x, y = random_surfaces(seed=23)
        report = evaluate_surfaces(x, y)
        assert report.nc is None
        assert all(row["metric"] != "nc" for row in report.rows())

    def test_json_and_csv_outputs(self, tmp_path):
        x, y = random_surfaces(seed=25, with_normals=True)
        report = evaluate_surfaces(x, y, MetricsConfig(
            sample_count=60, fscore_thresholds=(0.5,)))
        report.save_json(tmp_path / "m.json")
        loaded = json.loads((tmp_path / "m.json").read_text())
        assert loaded["cd"] == report.cd
        assert loaded["fscores"]["0.5"]["fs"] == report.fscores[0.5][0]
        report.save_csv(tmp_path / "m.csv")
        rows = (tmp_path / "m.csv").read_text().strip().splitlines()
        assert rows[0] == "metric,value,convention,sample_count,tau,seed"
        # cd rows + hd rows + nc + (fs, precision, recall) for one tau
        assert len(rows) - 1 == 3 + 3 + 1 + 3

    def test_config_presets(self):
        config = MetricsConfig.for_preset("abc", seed=7)
        assert config.sample_count == SAMPLE_PRESETS["abc"] == 10_000
        assert config.fscore_thresholds == FSCORE_PRESETS["abc"]
        assert config.seed == 7
        with pytest.raises(ConfigurationError, match="preset"):
            MetricsConfig.for_preset("imagenet")

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            MetricsConfig(sample_count=0)
        with pytest.raises(ConfigurationError):
            MetricsConfig(fscore_thresholds=(0.0,))
        with pytest.raises(ConfigurationError):
            MetricsConfig(chamfer_convention="l1")

    def test_sampled_surface_validation(self):
        with pytest.raises(EmptyInputError):
            SampledSurface(np.zeros((0, 3)))
        with pytest.raises(ValueError, match="unit"):
            SampledSurface(np.zeros((1, 3)), normals=np.array([[2.0, 0, 0]]))
        with pytest.raises(ValueError, match="source"):
            SampledSurface(np.zeros((1, 3)), source="scan")

    def test_from_cloud_keeps_normals(self):
        cloud = PointCloud(np.zeros((2, 3)),
                           normals=np.tile([0.0, 0.0, 1.0], (2, 1)))
        surf = SampledSurface.from_cloud(cloud)
        assert surf.source == "cloud"
        np.testing.assert_array_equal(surf.normals, cloud.normals)
