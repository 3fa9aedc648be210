from twinforge.assets.articulation import ArticulationProposal, ArticulationSpec, PhysicsProperties, ValidationError
from twinforge.assets.massprops import MassProperties, NotWatertightError, mass_properties
from twinforge.assets.mesh import MeshFormatError, TriangleMesh, box_mesh, cylinder_mesh, icosphere, load_mesh, save_mesh
from twinforge.assets.partition import partition_mesh
from twinforge.assets.urdf import (
    AssetError,
    InteractiveAsset,
    build_urdf,
    load_asset_bundle,
    read_articulation,
    write_asset_bundle,
)

__all__ = [
    "ArticulationProposal",
    "ArticulationSpec",
    "AssetError",
    "InteractiveAsset",
    "MassProperties",
    "MeshFormatError",
    "NotWatertightError",
    "PhysicsProperties",
    "TriangleMesh",
    "ValidationError",
    "box_mesh",
    "build_urdf",
    "cylinder_mesh",
    "icosphere",
    "load_asset_bundle",
    "load_mesh",
    "mass_properties",
    "partition_mesh",
    "read_articulation",
    "save_mesh",
    "write_asset_bundle",
]
