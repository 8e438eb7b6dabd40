"""Scikit-learn style front door for the reconstruction pipeline.

``SdfReconstructor`` bundles normalization, training, and level-set
extraction behind the familiar ``fit`` / ``predict`` API.  All distances
going in and out of the public methods are in the caller's world units;
the internal normalized frame never leaks.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import field as mlp
from .errors import ConfigurationError
from .geometry import PointCloud, TriangleMesh, normalize
from .imls import ImlsConfig
from .isosurface import GridSpec, marching_cubes, marching_squares, sample_grid
from .sampler import SamplerConfig
from .training import TrainConfig, ablation_mode, train


class SdfReconstructor(BaseEstimator):
    """Fit a signed-distance field to a raw point cloud.

    Parameters mirror the training defaults; the common knobs are the
    noise preset (which sets the neighborhood radius and size), the epoch
    budget, and the seed.  After ``fit``, ``predict`` evaluates the learned
    signed distance at arbitrary points and ``extract_mesh`` /
    ``extract_contours`` pull out the zero level set.

    Examples
    --------
    >>> recon = SdfReconstructor(epochs=50, seed=0)
    >>> mesh = recon.fit(points).extract_mesh(resolution=128)
    """

    def __init__(self, *, epochs=200, batch_size=100, learning_rate=5e-5,
                 noise_preset=None, radius_fraction=0.01,
                 target_neighbor_count=50, sigma_coherence=0.3,
                 queries_per_point=25, std_nn_rank=50, knn_neighbors=None,
                 ablation="full", grid_resolution=256, grid_margin=0.1,
                 seed=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.noise_preset = noise_preset
        self.radius_fraction = radius_fraction
        self.target_neighbor_count = target_neighbor_count
        self.sigma_coherence = sigma_coherence
        self.queries_per_point = queries_per_point
        self.std_nn_rank = std_nn_rank
        self.knn_neighbors = knn_neighbors
        self.ablation = ablation
        self.grid_resolution = grid_resolution
        self.grid_margin = grid_margin
        self.seed = seed

    # -- core API -------------------------------------------------------------

    def build_train_config(self) -> TrainConfig:
        """The fully resolved training configuration these params imply."""
        config = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            imls=ImlsConfig(
                radius_fraction=self.radius_fraction,
                target_neighbor_count=self.target_neighbor_count,
                sigma_coherence=self.sigma_coherence,
            ),
            sampler=SamplerConfig(
                queries_per_point=self.queries_per_point,
                std_nn_rank=self.std_nn_rank,
                seed=self.seed,
                noise_preset=self.noise_preset,
            ),
            seed=self.seed,
            knn_neighbors=self.knn_neighbors,
        )
        if self.ablation != "full":
            config = ablation_mode(config, self.ablation, k=self.knn_neighbors)
        return config

    def fit(self, X, y=None, *, log_path=None, checkpoint_dir=None,
            epoch_callback=None):
        """Train the field on points ``X`` ((n, d) array or PointCloud)."""
        cloud = X if isinstance(X, PointCloud) else PointCloud(np.asarray(X))
        self.n_features_in_ = cloud.dim
        self.input_diagonal_ = cloud.diagonal
        normalized, transform = normalize(cloud)
        self.transform_ = transform
        self.normalized_cloud_ = normalized
        config = self.build_train_config()
        self.params_, self.report_ = train(
            normalized, config, log_path=log_path,
            checkpoint_dir=checkpoint_dir, epoch_callback=epoch_callback)
        self.train_config_ = config.resolved_for(normalized)
        return self

    def predict(self, X) -> np.ndarray:
        """Signed distance (world units) at each query point, (n,)."""
        check_is_fitted(self, "params_")
        pts = np.asarray(X, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.n_features_in_:
            raise ValueError(
                f"expected (n, {self.n_features_in_}) query points"
            )
        values = mlp.forward(self.params_, self.transform_.apply(pts))
        return values / self.transform_.scale

    def transform(self, X) -> np.ndarray:
        """Signed distances as a feature column, (n, 1)."""
        return self.predict(X)[:, None]

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)

    def score(self, X, y=None) -> float:
        """Negative mean |signed distance| over ``X`` (higher is better)."""
        return -float(np.mean(np.abs(self.predict(X))))

    # -- level-set extraction ---------------------------------------------------

    def _grid_spec(self, resolution, iso_value) -> GridSpec:
        res = self.grid_resolution if resolution is None else resolution
        # World-space iso offsets map to the normalized frame by the scale.
        return GridSpec.for_cloud(self.normalized_cloud_, resolution=res,
                                  margin=self.grid_margin,
                                  iso_value=iso_value * self.transform_.scale)

    def extract_mesh(self, resolution=None, iso_value: float = 0.0) -> TriangleMesh:
        """Extract the level set as a triangle mesh in world coordinates."""
        check_is_fitted(self, "params_")
        if self.n_features_in_ != 3:
            raise ConfigurationError(
                "extract_mesh needs a 3-D fit; use extract_contours for 2-D"
            )
        grid = sample_grid(self.params_, self._grid_spec(resolution, iso_value))
        mesh = marching_cubes(grid)
        return TriangleMesh(self.transform_.invert(mesh.vertices), mesh.faces)

    def extract_contours(self, resolution=None, iso_value: float = 0.0) -> list:
        """Extract the level set as polylines in world coordinates (2-D)."""
        check_is_fitted(self, "params_")
        if self.n_features_in_ != 2:
            raise ConfigurationError(
                "extract_contours needs a 2-D fit; use extract_mesh for 3-D"
            )
        grid = sample_grid(self.params_, self._grid_spec(resolution, iso_value))
        return [self.transform_.invert(p) for p in marching_squares(grid)]
