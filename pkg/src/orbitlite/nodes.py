"""Built-in agent nodes: state readers, motion-generator action nodes, grasp
control, and per-task reward/termination evaluators.

Readers marked ``pure`` are side-effect-free and may serve as observation
ports. Action nodes write actuator-group commands through the node context.
Construction goes through :data:`NODE_TYPES` so graphs can be described in
plain config documents.
"""

from __future__ import annotations

import numpy as np

from .graph import Node
from .motiongen import IkParams, OscParams, QuinticUpsampler, dls_ik_step, osc_torques
from .spatial import Transform, quat_from_axis_angle, quat_mul


# ---------------------------------------------------------------------------
# pure readers

class SensorReadNode(Node):
    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.sensor = params["sensor"]

    def update(self, ctx, inputs):
        value, _ = ctx.sensor(self.sensor).read()
        return {"out": value}


class TaskReadNode(Node):
    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.key = params["key"]

    def update(self, ctx, inputs):
        return {"out": ctx.task[self.key]}


class BodyStateNode(Node):
    """Ground-truth link pose (or position) reader."""

    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.link = params["link"]
        self.offset = np.asarray(params.get("offset", (0.0, 0.0, 0.0)))
        self.what = params.get("what", "pose")

    def update(self, ctx, inputs):
        t = ctx.robot(self.robot).link_pose(self.link)
        pos = t.apply(self.offset)
        if self.what == "pos":
            return {"out": pos}
        return {"out": np.concatenate([pos, t.quat], axis=1)}


class ObjectStateNode(Node):
    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.obj = params["object"]

    def update(self, ctx, inputs):
        o = ctx.world.objects[self.obj]
        return {"out": np.concatenate([o.pos, o.quat], axis=1)}


class AttachedFlagNode(Node):
    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.link = params["link"]

    def update(self, ctx, inputs):
        out = np.zeros((ctx.world.num_envs, 1))
        for att in ctx.world.attachments:
            if att.robot == self.robot and att.link == self.link:
                out[att.active, 0] = 1.0
        for c in ctx.world.couplings:
            if c.robot == self.robot and c.link == self.link:
                out[c.active, 0] = 1.0
        for g in ctx.world.grips:
            if g.robot == self.robot and g.link == self.link:
                out[g.active, 0] = 1.0
        return {"out": out}


class ClothPointsNode(Node):
    """Positions of selected particles; optionally averaged into one point."""

    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.batch = params["batch"]
        self.ids = np.asarray(params["particles"], dtype=np.int64)
        self.reduce = params.get("reduce", "none")

    def update(self, ctx, inputs):
        b = ctx.world.particles[self.batch]
        pts = np.stack([s.x[self.ids] for s in b.systems])   # (N, k, 3)
        if self.reduce == "mean":
            return {"out": pts.mean(axis=1)}
        return {"out": pts.reshape(ctx.world.num_envs, -1)}


class ArticulationJointNode(Node):
    """Joint coordinate plus breakaway flag of a passive articulation."""

    pure = True

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.art = params["articulation"]
        self.joint = params["joint"]

    def update(self, ctx, inputs):
        art = ctx.robot(self.art)
        d = art.model.joint_dof[art.model.joint_index[self.joint]]
        broken = np.zeros(ctx.world.num_envs)
        for bj in art.breakaway:
            if bj.dof == d:
                broken = bj.broken.astype(np.float64)
        return {"out": np.stack([art.q[:, d], broken], axis=1)}


# ---------------------------------------------------------------------------
# action nodes

def _arm_dofs(rob, group):
    return rob.groups[group].dof_indices


def _route_gripper(ctx, rob_name, group, flags, open_pos, closed_pos):
    rob = ctx.robot(rob_name)
    target = np.where(flags, closed_pos, open_pos)[:, None]
    ctx.set_group_command(rob_name, group, target)
    rob.gripper_closed = flags.copy()


class TaskSpaceIkNode(Node):
    """Pose-delta action -> damped-least-squares joint position targets.

    Action layout: (dx, dy, dz, wx, wy, wz[, gripper]); the delta is clamped,
    solved against the arm Jacobian, and the result handed to the position
    group as q_des = q + dq.
    """

    kind = "action"

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.arm_group = params.get("arm_group", "arm")
        self.gripper_group = params.get("gripper_group")
        self.ee_link = params["ee_link"]
        self.offset = np.asarray(params.get("offset", (0.0, 0.0, 0.0)))
        self.ik = IkParams(**params.get("ik", {}))
        self.pos_only = bool(params.get("pos_only", False))
        self.max_lin = float(params.get("max_lin", 0.1))
        self.max_ang = float(params.get("max_ang", 0.5))
        self.gripper_open = float(params.get("gripper_open", 0.04))
        self.gripper_closed = float(params.get("gripper_closed", 0.0))
        self.solve_count = 0

    def output_ports(self):
        return ("q_des",)

    def update(self, ctx, inputs):
        act = inputs["action"]
        rob = ctx.robot(self.robot)
        dofs = _arm_dofs(rob, self.arm_group)
        lin = np.clip(act[:, 0:3], -self.max_lin, self.max_lin)
        J = rob.jacobian(self.ee_link, self.offset)[:, :, dofs]
        if self.pos_only:
            dq, fault = dls_ik_step(J[:, :3], lin, self.ik)
        else:
            ang = np.clip(act[:, 3:6], -self.max_ang, self.max_ang)
            dq, fault = dls_ik_step(J, np.concatenate([lin, ang], axis=1), self.ik)
        self.solve_count += 1
        ctx.command_fault |= fault
        lo, hi, _, _ = rob.model.joint_limit_arrays()
        q_des = np.clip(rob.q[:, dofs] + dq, lo[dofs], hi[dofs])
        ctx.set_group_command(self.robot, self.arm_group, q_des)
        if self.gripper_group:
            _route_gripper(ctx, self.robot, self.gripper_group,
                           act[:, -1] >= 0.5, self.gripper_open, self.gripper_closed)
        return {"q_des": q_des}


class JointPositionNode(Node):
    """Absolute joint position targets, optionally with a gripper channel."""

    kind = "action"

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.arm_group = params.get("arm_group", "arm")
        self.gripper_group = params.get("gripper_group")
        self.gripper_open = float(params.get("gripper_open", 0.04))
        self.gripper_closed = float(params.get("gripper_closed", 0.0))

    def output_ports(self):
        return ("q_des",)

    def update(self, ctx, inputs):
        act = inputs["action"]
        rob = ctx.robot(self.robot)
        dofs = _arm_dofs(rob, self.arm_group)
        lo, hi, _, _ = rob.model.joint_limit_arrays()
        n_arm = len(dofs)
        q_des = np.clip(act[:, :n_arm], lo[dofs], hi[dofs])
        ctx.set_group_command(self.robot, self.arm_group, q_des)
        if self.gripper_group:
            _route_gripper(ctx, self.robot, self.gripper_group,
                           act[:, -1] >= 0.5, self.gripper_open, self.gripper_closed)
        return {"q_des": q_des}


class OscNode(Node):
    """Pose-delta action -> operational-space torques on a torque group."""

    kind = "action"

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.arm_group = params.get("arm_group", "arm")
        self.gripper_group = params.get("gripper_group")
        self.ee_link = params["ee_link"]
        self.offset = np.asarray(params.get("offset", (0.0, 0.0, 0.0)))
        osc_kw = dict(params.get("osc", {}))
        if "posture" in osc_kw and osc_kw["posture"] is not None:
            osc_kw["posture"] = np.asarray(osc_kw["posture"], dtype=np.float64)
        self.osc = OscParams(**osc_kw)
        self.max_lin = float(params.get("max_lin", 0.1))
        self.max_ang = float(params.get("max_ang", 0.5))
        self.gripper_open = float(params.get("gripper_open", 0.04))
        self.gripper_closed = float(params.get("gripper_closed", 0.0))

    def output_ports(self):
        return ("tau",)

    def update(self, ctx, inputs):
        act = inputs["action"]
        rob = ctx.robot(self.robot)
        dofs = _arm_dofs(rob, self.arm_group)
        cur = rob.link_pose(self.ee_link)
        cur = Transform(cur.apply(self.offset), cur.quat)
        lin = np.clip(act[:, 0:3], -self.max_lin, self.max_lin)
        ang = np.clip(act[:, 3:6], -self.max_ang, self.max_ang)
        angle = np.linalg.norm(ang, axis=1)
        axis = np.where(angle[:, None] > 1e-12, ang / np.maximum(angle, 1e-12)[:, None],
                        np.array([1.0, 0.0, 0.0]))
        dq_quat = quat_from_axis_angle(axis, angle)
        x_des = Transform(cur.pos + lin, quat_mul(dq_quat, cur.quat))
        # full-model OSC, then slice the arm rows
        tau = osc_torques(
            rob.model, rob.params, rob.q, rob.qd, self.ee_link, self.offset,
            x_des, self.osc, base_pose=rob.base_pose, gravity=rob.gravity,
        )
        ctx.set_group_command(self.robot, self.arm_group, tau[:, dofs])
        if self.gripper_group:
            _route_gripper(ctx, self.robot, self.gripper_group,
                           act[:, -1] >= 0.5, self.gripper_open, self.gripper_closed)
        return {"tau": tau[:, dofs]}


class QuinticUpsampleNode(Node):
    """Resample a low-rate joint target stream to this node's (higher) rate
    with quintic segments, keeping velocity and acceleration continuous."""

    kind = "action"

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.group = params["group"]
        self.feed_rate = float(params["feed_rate"])
        self._ups: QuinticUpsampler | None = None
        self._facc = 0.0

    def output_ports(self):
        return ("q_cmd",)

    def reset(self, ctx, env_ids):
        self._ups = None

    def update(self, ctx, inputs):
        target = inputs["target"]
        rob = ctx.robot(self.robot)
        dt = 1.0 / self.rate
        if self._ups is None:
            start = rob.q[:, rob.groups[self.group].dof_indices]
            self._ups = QuinticUpsampler(start, 1.0 / self.feed_rate)
            self._facc = 0.0
        self._facc += dt
        if self._facc + 1e-9 >= 1.0 / self.feed_rate:
            self._facc -= 1.0 / self.feed_rate
            self._ups.feed(target)
        q, _, _ = self._ups.sample(dt)
        ctx.set_group_command(self.robot, self.group, q)
        return {"q_cmd": q}


class GraspNode(Node):
    """Attach/detach driven by the commanded gripper state and proximity."""

    kind = "action"

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.link = params["link"]
        self.mode = params["mode"]               # object | handle | cloth
        self.object = params.get("object")
        self.coupling_index = params.get("coupling_index", 0)
        self.grip_index = params.get("grip_index", 0)
        self.auto = bool(params.get("auto", False))

    def output_ports(self):
        return ("attached",)

    def _active(self, ctx):
        world = ctx.world
        if self.mode == "object":
            for att in world.attachments:
                if (att.robot, att.link, att.obj) == (self.robot, self.link, self.object):
                    return att.active
        elif self.mode == "handle":
            return world.couplings[self.coupling_index].active
        else:
            return world.grips[self.grip_index].active
        return np.zeros(world.num_envs, dtype=bool)

    def update(self, ctx, inputs):
        world = ctx.world
        closed = ctx.robot(self.robot).gripper_closed
        if self.mode == "object":
            world.try_attach(closed, self.robot, self.link, self.object)
            world.detach(~closed, self.robot, self.link, self.object)
        elif self.mode == "handle":
            c = world.couplings[self.coupling_index]
            world.try_attach_handle(closed, c)
            world.detach_handle(~closed, c)
        elif self.mode == "cloth" and not self.auto:
            g = world.grips[self.grip_index]
            world.try_attach_cloth(closed, g)
            world.detach_cloth(~closed, g)
        return {"attached": self._active(ctx).astype(np.float64)[:, None]}

    def reset(self, ctx, env_ids):
        if self.mode == "cloth" and self.auto:
            g = ctx.world.grips[self.grip_index]
            mask = np.zeros(ctx.world.num_envs, dtype=bool)
            mask[np.atleast_1d(env_ids)] = True
            ctx.world.try_attach_cloth(mask, g, force=True)


# ---------------------------------------------------------------------------
# reward / termination nodes

class _RewardNode(Node):
    def output_ports(self):
        return ("reward",)


class ReachRewardNode(_RewardNode):
    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.ee_link = params["ee_link"]
        self.offset = np.asarray(params.get("offset", (0.0, 0.0, 0.0)))
        self.goal_key = params.get("goal_key", "goal")
        self.bonus_dist = float(params.get("bonus_dist", 0.02))

    def update(self, ctx, inputs):
        ee = ctx.robot(self.robot).link_pose(self.ee_link).apply(self.offset)
        d = np.linalg.norm(ee - ctx.task[self.goal_key], axis=1)
        ok = d < self.bonus_dist
        ctx.task["success"] = ok
        return {"reward": -(d ** 2) + ok.astype(np.float64)}


class LiftRewardNode(_RewardNode):
    """Staged lift shaping: reach + grasp + clamped height + goal tracking."""

    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.ee_link = params["ee_link"]
        self.offset = np.asarray(params.get("offset", (0.0, 0.0, 0.0)))
        self.object = params["object"]
        self.goal_key = params.get("goal_key", "goal")
        w = params.get("weights", {})
        self.w_reach = float(w.get("reach", 0.5))
        self.w_grasp = float(w.get("grasp", 0.5))
        self.w_height = float(w.get("height", 1.0))
        self.w_goal = float(w.get("goal", 1.0))
        self.h_star = float(params.get("h_star", 0.1))
        self.table_z = float(params.get("table_z", 0.0))
        self.rest_z = float(params.get("rest_z", 0.025))
        self.success_height = float(params.get("success_height", 0.1))

    def update(self, ctx, inputs):
        world = ctx.world
        ee = ctx.robot(self.robot).link_pose(self.ee_link).apply(self.offset)
        obj = world.objects[self.object]
        d_reach = np.linalg.norm(ee - obj.pos, axis=1)
        attached = obj.attached.astype(np.float64)
        height = np.clip(obj.pos[:, 2] - self.table_z - self.rest_z, 0.0, self.h_star)
        d_goal = np.linalg.norm(obj.pos - ctx.task[self.goal_key], axis=1)
        r = (
            self.w_reach * (1.0 - np.tanh(10.0 * d_reach))
            + self.w_grasp * attached
            + self.w_height * height / self.h_star
            + self.w_goal * attached * (1.0 - np.tanh(10.0 * d_goal))
        )
        lifted = obj.pos[:, 2] - self.table_z - self.rest_z >= self.success_height
        ctx.task["success"] = obj.attached & lifted
        return {"reward": r}


class DrawerRewardNode(_RewardNode):
    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.art = params["articulation"]
        self.joint = params["joint"]
        self.bonus = float(params.get("breakaway_bonus", 0.5))
        self.success_fraction = float(params.get("success_fraction", 0.85))

    def update(self, ctx, inputs):
        art = ctx.robot(self.art)
        d = art.model.joint_dof[art.model.joint_index[self.joint]]
        upper = art.model.joint_limit_arrays()[1][d]
        frac = art.q[:, d] / upper
        broken = np.zeros(ctx.world.num_envs, dtype=bool)
        for bj in art.breakaway:
            if bj.dof == d:
                broken = bj.broken
        ctx.task["success"] = (frac >= self.success_fraction) & broken
        return {"reward": frac + self.bonus * broken.astype(np.float64)}


class ClothFoldRewardNode(_RewardNode):
    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.batch = params["batch"]
        self.moving = np.asarray(params["moving_corners"], dtype=np.int64)
        self.target_key = params.get("target_key", "fold_targets")
        self.success_dist = float(params.get("success_dist", 0.06))

    def update(self, ctx, inputs):
        b = ctx.world.particles[self.batch]
        pts = np.stack([s.x[self.moving] for s in b.systems])       # (N, k, 3)
        tgt = ctx.task[self.target_key].reshape(ctx.world.num_envs, -1, 3)
        d = np.linalg.norm(pts - tgt, axis=2).mean(axis=1)
        ctx.task["success"] = d < self.success_dist
        return {"reward": -d}


class BeamHoldRewardNode(_RewardNode):
    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.batch = params["batch"]
        self.tip = np.asarray(params["tip_particles"], dtype=np.int64)
        self.target_key = params.get("target_key", "tip_target")

    def reset(self, ctx, env_ids):
        b = ctx.world.particles[self.batch]
        for i in np.atleast_1d(env_ids):
            ctx.task[self.target_key][i] = b.systems[int(i)].x[self.tip].mean(axis=0)

    def update(self, ctx, inputs):
        b = ctx.world.particles[self.batch]
        tips = np.stack([s.x[self.tip].mean(axis=0) for s in b.systems])
        d = np.linalg.norm(tips - ctx.task[self.target_key], axis=1)
        ctx.task["success"] = d < 0.05
        return {"reward": -d}


class StandRewardNode(_RewardNode):
    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.robot = params["robot"]
        self.trunk = params.get("trunk", "trunk")
        self.z_ref = float(params.get("z_ref", 0.36))

    def update(self, ctx, inputs):
        rob = ctx.robot(self.robot)
        t = rob.link_pose(self.trunk)
        up = t.matrix()[:, 2, 2]          # world-z component of the trunk z axis
        r = 1.0 - 2.0 * np.abs(t.pos[:, 2] - self.z_ref) - 0.5 * (1.0 - up)
        ctx.task["success"] = np.abs(t.pos[:, 2] - self.z_ref) < 0.05
        return {"reward": r}


class SuccessTerminationNode(Node):
    def __init__(self, name, rate, params, inputs=None):
        super().__init__(name, rate, inputs)
        self.key = params.get("key", "success")

    def output_ports(self):
        return ("done",)

    def update(self, ctx, inputs):
        return {"done": ctx.task[self.key].copy()}


NODE_TYPES = {
    "sensor_read": SensorReadNode,
    "task_read": TaskReadNode,
    "body_state": BodyStateNode,
    "object_state": ObjectStateNode,
    "attached_flag": AttachedFlagNode,
    "cloth_points": ClothPointsNode,
    "articulation_joint": ArticulationJointNode,
    "task_space_ik": TaskSpaceIkNode,
    "joint_position": JointPositionNode,
    "osc": OscNode,
    "quintic_upsample": QuinticUpsampleNode,
    "grasp": GraspNode,
    "reward_reach": ReachRewardNode,
    "reward_lift": LiftRewardNode,
    "reward_drawer": DrawerRewardNode,
    "reward_cloth_fold": ClothFoldRewardNode,
    "reward_beam_hold": BeamHoldRewardNode,
    "reward_stand": StandRewardNode,
    "termination_success": SuccessTerminationNode,
}


def make_node(name: str, type_: str, rate: float, params: dict | None = None,
              inputs: dict | None = None) -> Node:
    if type_ not in NODE_TYPES:
        raise KeyError(f"unknown node type {type_!r}; have {sorted(NODE_TYPES)}")
    return NODE_TYPES[type_](name, rate, params or {}, inputs)
