"""orbitlite: vectorized multi-rate robot simulation and task toolkit."""

from .spatial import Transform, pose_error
from .description import (
    DescriptionError,
    Joint,
    JointLimits,
    Link,
    RobotDescription,
    load_description,
    parse_robot_description,
)
from .kinematics import forward_kinematics, geometric_jacobian, link_pose, point_world
from .dynamics import (
    ArticulationParams,
    BreakawayJointState,
    forward_dynamics,
    gravity_torque,
    inverse_dynamics,
    mass_matrix,
    step,
    update_breakaway,
)
from .actuation import ActuatorGroup, ActuatorGroupConfig, dc_saturate
from .seeding import stream

__version__ = "0.1.0"
