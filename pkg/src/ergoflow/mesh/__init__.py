"""Free-space meshes, test maps and information distributions."""

from .density import DistributionSpec, InfoDistribution, build_distribution
from .geometry import TriMesh, locate_point, locate_point_exhaustive
from .io import load_distribution, load_mesh, save_distribution, save_mesh
from .maps import MapSpec, generate_map

__all__ = [
    "DistributionSpec",
    "InfoDistribution",
    "MapSpec",
    "TriMesh",
    "build_distribution",
    "generate_map",
    "load_distribution",
    "load_mesh",
    "locate_point",
    "locate_point_exhaustive",
    "save_distribution",
    "save_mesh",
]
