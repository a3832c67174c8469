"""Aircraft part segmentation on triangle meshes with conformal surface voting
and rule-based mesh settings."""

__version__ = "0.1.0"

from .geometry import LabeledMesh, MeshGraph, PartLabel, SurfaceGrid  # noqa: E402

__all__ = ["LabeledMesh", "MeshGraph", "PartLabel", "SurfaceGrid", "__version__"]
