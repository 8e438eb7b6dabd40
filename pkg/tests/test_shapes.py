"""Built-in shapes: boundary samplers against their exact SDFs."""

import numpy as np
import pytest
from scipy.spatial import cKDTree

from mlsfield.errors import ConfigurationError
from mlsfield.shapes import (
    SHAPES_2D,
    SHAPES_3D,
    analytic_sdf,
    make_test_cloud,
    sample_boundary,
    sdf_box,
    sdf_circle,
    sdf_polygon,
    shape_dim,
)

ALL_SHAPES = SHAPES_2D + SHAPES_3D

_L_SEGMENTS = [
    ([-1.0, -1.0], [1.0, -1.0]),
    ([1.0, -1.0], [1.0, 0.0]),
    ([1.0, 0.0], [0.0, 0.0]),
    ([0.0, 0.0], [0.0, 1.0]),
    ([0.0, 1.0], [-1.0, 1.0]),
    ([-1.0, 1.0], [-1.0, -1.0]),
]


def dense_l_boundary(per_unit=4000):
    """Deterministic dense polyline sampling of the L outline."""
    chunks = []
    for a, b in _L_SEGMENTS:
        a, b = np.asarray(a), np.asarray(b)
        n = int(np.linalg.norm(b - a) * per_unit)
        t = np.linspace(0.0, 1.0, n, endpoint=False)[:, None]
        chunks.append(a + t * (b - a))
    return np.vstack(chunks)


def inside_l(points):
    """Membership by construction: the unit square minus its open
    upper-right quadrant."""
    x, y = points[:, 0], points[:, 1]
    in_square = (np.abs(x) < 1.0) & (np.abs(y) < 1.0)
    return in_square & ~((x > 0.0) & (y > 0.0))


class TestBoundarySampling:
    @pytest.mark.parametrize("name", ALL_SHAPES)
    def test_samples_lie_on_the_zero_set(self, name):
        pts = sample_boundary(name, 500, seed=3)
        assert pts.shape == (500, shape_dim(name))
        np.testing.assert_allclose(analytic_sdf(name)(pts), 0.0, atol=1e-12)

    def test_deterministic_by_seed(self):
        np.testing.assert_array_equal(sample_boundary("L", 64, seed=5),
                                      sample_boundary("L", 64, seed=5))
        assert not np.array_equal(sample_boundary("L", 64, seed=5),
                                  sample_boundary("L", 64, seed=6))

    def test_square_sides_equally_loaded(self):
        pts = sample_boundary("square", 4000, seed=1)
        for axis in (0, 1):
            for side in (-1.0, 1.0):
                hits = np.isclose(pts[:, axis], side, atol=1e-12).sum()
                assert hits > 800

    def test_cube_faces_equally_loaded(self):
        pts = sample_boundary("cube", 6000, seed=2)
        assert np.max(np.abs(pts), axis=1).min() == 1.0
        for axis in range(3):
            for side in (-1.0, 1.0):
                assert (pts[:, axis] == side).sum() > 800

    def test_count_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            sample_boundary("circle", 0)

    def test_unknown_shape_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown shape"):
            sample_boundary("torus", 10)
        with pytest.raises(ConfigurationError):
            shape_dim("torus")
        with pytest.raises(ConfigurationError):
            analytic_sdf("torus")

    def test_shape_dims(self):
        assert [shape_dim(s) for s in SHAPES_2D] == [2, 2, 2]
        assert [shape_dim(s) for s in SHAPES_3D] == [3, 3]


class TestSdfValues:
    def test_circle_hand_values(self):
        got = sdf_circle(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, -0.5]]))
        np.testing.assert_allclose(got, [-1.0, 1.0, -0.5])

    def test_box_hand_values_2d(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [1.5, 1.5], [0.5, 0.0]])
        want = [-1.0, 1.0, np.sqrt(0.5), -0.5]
        np.testing.assert_allclose(sdf_box(pts), want)

    def test_box_hand_values_3d(self):
        pts = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 0.0], [2.0, 2.0, 2.0]])
        want = [-1.0, 1.0, np.sqrt(3.0)]
        np.testing.assert_allclose(sdf_box(pts), want)

    def test_square_polygon_matches_box(self):
        """The square as a polygon and as a box are the same field."""
        rng = np.random.default_rng(8)
        pts = rng.uniform(-2.0, 2.0, size=(500, 2))
        square = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
        np.testing.assert_allclose(sdf_polygon(pts, square), sdf_box(pts),
                                   rtol=1e-12, atol=1e-12)

    def test_l_sign_matches_membership_rule(self):
        rng = np.random.default_rng(9)
        pts = rng.uniform(-1.5, 1.5, size=(2000, 2))
        near_line = np.abs(
            pts[:, :, None] - np.array([-1.0, 0.0, 1.0])).min(axis=(1, 2))
        keep = near_line > 1e-6
        sdf = analytic_sdf("L")(pts[keep])
        np.testing.assert_array_equal(sdf < 0.0, inside_l(pts[keep]))

    def test_l_magnitude_matches_dense_boundary(self):
        rng = np.random.default_rng(10)
        pts = rng.uniform(-1.5, 1.5, size=(300, 2))
        tree = cKDTree(dense_l_boundary())
        brute, _ = tree.query(pts)
        np.testing.assert_allclose(np.abs(analytic_sdf("L")(pts)), brute,
                                   atol=5e-4)

    def test_dispatch_table(self):
        assert analytic_sdf("circle") is sdf_circle
        assert analytic_sdf("sphere") is sdf_circle
        assert analytic_sdf("square") is sdf_box
        assert analytic_sdf("cube") is sdf_box


class TestMakeTestCloud:
    def test_zero_noise_returns_clean_points(self):
        cloud, clean = make_test_cloud("square", 100, seed=4)
        np.testing.assert_array_equal(cloud.points, clean)
        np.testing.assert_allclose(sdf_box(clean), 0.0, atol=1e-12)

    def test_noise_scale_tracks_the_diagonal(self):
        cloud, clean = make_test_cloud("circle", 4000, noise_fraction=0.05,
                                       seed=4)
        offsets = cloud.points - clean
        want = 0.05 * 2.0 * np.sqrt(2.0)
        np.testing.assert_allclose(offsets.std(), want, rtol=0.05)

    def test_noise_stream_is_decorrelated_from_sampling(self):
        """Offsets must not replay the sampler's draws (radial artifacts)."""
        cloud, clean = make_test_cloud("circle", 2000, noise_fraction=0.05,
                                       seed=0)
        offsets = cloud.points - clean
        cosines = np.abs(np.einsum("ij,ij->i", offsets, clean))
        cosines /= np.linalg.norm(offsets, axis=1)
        assert cosines.mean() < 0.9

    def test_deterministic_and_seed_sensitive(self):
        a, _ = make_test_cloud("sphere", 50, noise_fraction=0.01, seed=7)
        b, _ = make_test_cloud("sphere", 50, noise_fraction=0.01, seed=7)
        c, _ = make_test_cloud("sphere", 50, noise_fraction=0.01, seed=8)
        np.testing.assert_array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)
