"""Batched forward kinematics and geometric Jacobians.

Configurations are flat arrays ``q`` of shape (num_envs, num_dofs); poses come
back as a :class:`Transform` with batch shape (num_envs, num_links). All
outputs are world-frame. Functions are pure: no caching, no mutation.
"""

from __future__ import annotations

import numpy as np

from .description import RobotDescription
from .spatial import Transform, quat_from_axis_angle, quat_mul, quat_rotate


class KinematicsError(ValueError):
    pass


def _check_cfg(model: RobotDescription, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != model.num_dofs:
        raise KinematicsError(
            f"configuration shape {q.shape} does not match ({'N'}, {model.num_dofs})"
        )
    return q


def fk_full(model: RobotDescription, q: np.ndarray, base_pose: Transform | None = None):
    """Link poses plus per-joint world axes and origins (for Jacobians).

    Returns (poses, joint_axis_world [N, nj, 3], joint_origin_world [N, nj, 3]).
    """
    q = _check_cfg(model, q)
    n = q.shape[0]
    nb = model.num_links
    nj = len(model.joints)
    pos = np.zeros((n, nb, 3))
    quat = np.zeros((n, nb, 4))
    if base_pose is None:
        quat[:, 0, 0] = 1.0
    else:
        pos[:, 0] = base_pose.pos
        quat[:, 0] = base_pose.quat
    jaxis = np.zeros((n, nj, 3))
    jorigin = np.zeros((n, nj, 3))
    for b in range(1, nb):
        p = model.parent_link[b]
        j = model.link_joint[b]
        joint = model.joints[j]
        # joint frame = parent pose ∘ origin
        jq = quat_mul(quat[:, p], joint.origin.quat[None, :])
        jp = pos[:, p] + quat_rotate(quat[:, p], joint.origin.pos[None, :])
        jorigin[:, j] = jp
        if joint.type == "fixed":
            pos[:, b] = jp
            quat[:, b] = jq
            continue
        d = model.joint_dof[j]
        axis_w = quat_rotate(jq, joint.axis[None, :])
        jaxis[:, j] = axis_w
        if joint.type == "revolute":
            motion = quat_from_axis_angle(np.broadcast_to(joint.axis, (n, 3)), q[:, d])
            pos[:, b] = jp
            quat[:, b] = quat_mul(jq, motion)
        else:  # prismatic
            pos[:, b] = jp + axis_w * q[:, d][:, None]
            quat[:, b] = jq
    return Transform(pos, quat), jaxis, jorigin


def forward_kinematics(
    model: RobotDescription, q: np.ndarray, base_pose: Transform | None = None
) -> Transform:
    """World-frame pose of every link, batch shape (num_envs, num_links)."""
    poses, _, _ = fk_full(model, q, base_pose)
    return poses


def link_pose(
    model: RobotDescription, q: np.ndarray, link: str, base_pose: Transform | None = None
) -> Transform:
    if link not in model.link_index:
        raise KinematicsError(f"unknown link {link!r}")
    poses = forward_kinematics(model, q, base_pose)
    i = model.link_index[link]
    return Transform(poses.pos[:, i], poses.quat[:, i])


def point_world(
    model: RobotDescription,
    q: np.ndarray,
    link: str,
    point=(0.0, 0.0, 0.0),
    base_pose: Transform | None = None,
) -> np.ndarray:
    """World position of a point given in the link frame, shape (N, 3)."""
    t = link_pose(model, q, link, base_pose)
    return t.apply(np.asarray(point, dtype=np.float64))


def _support_joints(model: RobotDescription, link_idx: int) -> list[int]:
    """Joint indices on the path base -> link, in base-out order."""
    chain = []
    b = link_idx
    while b > 0:
        chain.append(model.link_joint[b])
        b = model.parent_link[b]
    return chain[::-1]


def geometric_jacobian(
    model: RobotDescription,
    q: np.ndarray,
    link: str,
    point=(0.0, 0.0, 0.0),
    base_pose: Transform | None = None,
) -> np.ndarray:
    """World-frame geometric Jacobian of a link-fixed point.

    Shape (num_envs, 6, num_dofs); rows 0-2 map joint velocities to the
    point's linear velocity, rows 3-5 to the link's angular velocity.
    """
    if link not in model.link_index:
        raise KinematicsError(f"unknown link {link!r}")
    q = _check_cfg(model, q)
    poses, jaxis, jorigin = fk_full(model, q, base_pose)
    li = model.link_index[link]
    target = Transform(poses.pos[:, li], poses.quat[:, li]).apply(
        np.asarray(point, dtype=np.float64)
    )
    n = q.shape[0]
    J = np.zeros((n, 6, model.num_dofs))
    for j in _support_joints(model, li):
        joint = model.joints[j]
        if joint.type == "fixed":
            continue
        d = model.joint_dof[j]
        if joint.type == "revolute":
            w = jaxis[:, j]
            J[:, 0:3, d] = np.cross(w, target - jorigin[:, j])
            J[:, 3:6, d] = w
        else:  # prismatic
            J[:, 0:3, d] = jaxis[:, j]
    return J
