from twinforge.registration.camera_align import AlignmentError, AlignmentTrace, CamAlignParams, align_camera
from twinforge.registration.icp import IcpError, IcpParams, IcpResult, icp_align, rigid_fit
from twinforge.registration.poses import read_pose_json, write_pose_json
from twinforge.registration.world import align_world, posed_robot_mesh, sample_robot_pointcloud

__all__ = [
    "AlignmentError",
    "AlignmentTrace",
    "CamAlignParams",
    "IcpError",
    "IcpParams",
    "IcpResult",
    "align_camera",
    "align_world",
    "icp_align",
    "posed_robot_mesh",
    "read_pose_json",
    "rigid_fit",
    "sample_robot_pointcloud",
    "write_pose_json",
]
