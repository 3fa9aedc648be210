from twinforge.kinematics.ik import IkOptions, IkResult, JointTrajectory, PlanningError, ik_solve, plan_linear
from twinforge.kinematics.model import Geometry, Inertial, Joint, Link, RobotModel, forward_kinematics, link_pose
from twinforge.kinematics.urdf import UrdfError, parse_urdf, robot_to_urdf

__all__ = [
    "Geometry",
    "IkOptions",
    "IkResult",
    "Inertial",
    "Joint",
    "JointTrajectory",
    "Link",
    "PlanningError",
    "RobotModel",
    "UrdfError",
    "forward_kinematics",
    "ik_solve",
    "link_pose",
    "parse_urdf",
    "plan_linear",
    "robot_to_urdf",
]
