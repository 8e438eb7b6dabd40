"""Watertight surface reconstruction from unoriented point clouds.

An MLP signed-distance field is trained against moving-least-squares
plane-distance targets whose normals come from the field's own gradients;
the zero level set is then extracted with marching cubes (3-D) or marching
squares (2-D).  See :class:`mlsfield.estimator.SdfReconstructor` for the
high-level API and ``mlsfield.cli`` for the command line.
"""

from .geometry import (
    NormalizationTransform,
    PointCloud,
    TriangleMesh,
    load_mesh,
    load_point_cloud,
    normalize,
    save_mesh,
    save_point_cloud,
)

__version__ = "0.1.0"

__all__ = [
    "PointCloud",
    "TriangleMesh",
    "NormalizationTransform",
    "SdfReconstructor",
    "load_mesh",
    "load_point_cloud",
    "normalize",
    "save_mesh",
    "save_point_cloud",
    "__version__",
]


def __getattr__(name):
    # Imported lazily: the estimator pulls in scikit-learn, which the
    # lighter numerical paths never need.
    if name == "SdfReconstructor":
        from .estimator import SdfReconstructor
        return SdfReconstructor
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
