"""The world: robots, passive articulated objects, free rigid bodies, particle
systems, sensors, and visualization markers sharing one batched stage.

A world owns ``num_envs`` parallel copies of everything and advances them in
lockstep with :meth:`World.substep`: actuator groups produce torques, robot
articulations integrate, kinematic attachments are enforced, free bodies fly
or rest, particle systems run their XPBD sweep, and sensors tick last. Marker
mutations never touch physics state (and are excluded from the checksum).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, kinematics, softbody
from .actuation import ActuatorGroup
from .description import RobotDescription
from .sensing import Sensor, SensorSpec
from .spatial import Transform, quat_conj, quat_mul, quat_rotate, quat_to_matrix

GRASP_RADIUS = 0.05


class WorldError(ValueError):
    pass


@dataclass
class GroundContactConfig:
    feet: tuple[str, ...]
    stiffness: float = 5000.0
    damping: float = 100.0
    tangential_damping: float = 200.0


class ArticulationInstance:
    """One articulation (robot or passive object) over the env batch."""

    def __init__(self, name: str, model: RobotDescription, num_envs: int,
                 dt: float, gravity, base_pose: Transform | None = None,
                 init_q=None):
        self.name = name
        self.model = model
        self.num_envs = num_envs
        self.dt = dt
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.base_pose = base_pose or Transform.identity()
        n = model.num_dofs
        self.init_q = np.zeros(n) if init_q is None else np.asarray(init_q, dtype=np.float64)
        self.q = np.tile(self.init_q, (num_envs, 1))
        self.qd = np.zeros((num_envs, n))
        self.params = dynamics.ArticulationParams.from_model(model, num_envs)
        self.base_params = self.params.copy()
        self.fault = np.zeros(num_envs, dtype=bool)
        self.extra_torque = np.zeros((num_envs, n))
        self.gripper_closed = np.zeros(num_envs, dtype=bool)
        lo, hi, vel, eff = model.joint_limit_arrays()
        self._effort = eff
        self.groups: dict[str, ActuatorGroup] = {}
        for cfg in model.actuator_groups:
            dof_idx = np.array(
                [model.joint_dof[model.joint_index[j]] for j in cfg.joints]
            )
            self.groups[cfg.name] = ActuatorGroup(cfg, dof_idx, num_envs, dt, eff[dof_idx])
        self._needs_gcomp = any(g.config.gravity_comp for g in self.groups.values())
        self.breakaway: list[dynamics.BreakawayJointState] = []
        for j in model.joints:
            if j.breakaway:
                d = model.joint_dof[model.joint_index[j.name]]
                if d < 0:
                    raise WorldError(f"breakaway on fixed joint {j.name}")
                self.breakaway.append(
                    dynamics.BreakawayJointState(
                        dof=int(d),
                        hold_torque=float(j.breakaway["hold_torque"]),
                        break_threshold=float(j.breakaway["break_threshold"]),
                    ).init(num_envs)
                )
        self.ground: GroundContactConfig | None = None
        self._foot_ids = None
        self._foot_names: tuple[str, ...] = ()
        self.contact_flag = np.zeros((num_envs, 0), dtype=bool)
        self.contact_force = np.zeros((num_envs, 0))
        self.substep_count = 0
        # substep-local caches of world-frame foot states
        self._fext = np.zeros((num_envs, model.num_links, 6))

    # -- configuration ------------------------------------------------------

    def enable_ground_contact(self, cfg: GroundContactConfig) -> None:
        ids = []
        for f in cfg.feet:
            if f not in self.model.link_index:
                raise WorldError(f"unknown foot link {f!r}")
            ids.append(self.model.link_index[f])
        self.ground = cfg
        self._foot_ids = np.asarray(ids, dtype=np.int64)
        self._foot_names = tuple(cfg.feet)
        nf = len(ids)
        self.contact_flag = np.zeros((self.num_envs, nf), dtype=bool)
        self.contact_force = np.zeros((self.num_envs, nf))

    # -- kinematic queries (world frame, base pose composed) ---------------

    def link_pose(self, link: str) -> Transform:
        return kinematics.link_pose(self.model, self.q, link, self.base_pose)

    def link_poses(self) -> Transform:
        return kinematics.forward_kinematics(self.model, self.q, self.base_pose)

    def point_state(self, link: str, offset=(0.0, 0.0, 0.0)):
        """(pos, vel, rot) of a link point in world frame, each (N, ...)."""
        li = self.model.link_index[link]
        pos, vel, rot = dynamics.fk_points(
            self.model, self.q, self.qd,
            np.array([li]), np.asarray(offset, dtype=np.float64).reshape(1, 3),
        )
        Rb = quat_to_matrix(self.base_pose.quat)
        p = self.base_pose.pos + pos[:, 0] @ Rb.T
        v = vel[:, 0] @ Rb.T
        return p, v, Rb @ rot[:, 0]

    def jacobian(self, link: str, point=(0.0, 0.0, 0.0)) -> np.ndarray:
        return kinematics.geometric_jacobian(self.model, self.q, link, point, self.base_pose)

    # -- stepping -----------------------------------------------------------

    def substep(self) -> None:
        q, qd = self.q, self.qd
        gcomp = (
            dynamics.gravity_torque(self.model, self.params, q, self.gravity)
            if self._needs_gcomp else None
        )
        tau = self.extra_torque.copy()
        for g in self.groups.values():
            g.advance(q, qd, self.dt)
            tau[:, g.dof_indices] += g.compute_torques(q, qd, gcomp, self.dt)
        for bj in self.breakaway:
            tau[:, bj.dof] += bj.update(tau[:, bj.dof])
        f_ext = None
        if self.ground is not None:
            f_ext = self._contact_wrenches()
        q_new, qd_new, fault = dynamics.step(
            self.model, self.params, q, qd, tau, self.dt, self.gravity, f_ext
        )
        self.q, self.qd = q_new, qd_new
        self.fault |= fault
        self.extra_torque[:] = 0.0
        self.substep_count += 1

    def _contact_wrenches(self) -> np.ndarray:
        cfg = self.ground
        offs = np.zeros((len(self._foot_ids), 3))
        pos, vel, rot = dynamics.fk_points(self.model, self.q, self.qd, self._foot_ids, offs)
        Rb = quat_to_matrix(self.base_pose.quat)
        pos = self.base_pose.pos + np.einsum("ij,nkj->nki", Rb, pos)
        vel = np.einsum("ij,nkj->nki", Rb, vel)
        rot = np.einsum("ij,nkjl->nkil", Rb, rot)
        force, contact, fn = dynamics.ground_contact_forces(
            pos, vel, cfg.stiffness, cfg.damping, cfg.tangential_damping
        )
        self.contact_flag = contact
        self.contact_force = fn
        self._fext[:] = 0.0
        f_body = np.einsum("nkji,nkj->nki", rot, force)   # R^T f
        for k, b in enumerate(self._foot_ids):
            self._fext[:, b, 3:] = f_body[:, k]
        return self._fext

    # -- reset --------------------------------------------------------------

    def reset_rows(self, env_ids, q=None, qd=None) -> None:
        self.q[env_ids] = self.init_q if q is None else q
        self.qd[env_ids] = 0.0 if qd is None else qd
        pristine = getattr(self, "_pristine", None)
        if pristine is None:
            pristine = dynamics.ArticulationParams.from_model(self.model, 1)
            self._pristine = pristine
        for name in ("mass", "com", "inertia", "damping", "dry_friction"):
            getattr(self.params, name)[env_ids] = getattr(pristine, name)[0]
            getattr(self.base_params, name)[env_ids] = getattr(pristine, name)[0]
        self.params.mark_dirty()
        self.base_params.mark_dirty()
        self.fault[env_ids] = False
        self.extra_torque[env_ids] = 0.0
        self.gripper_closed[env_ids] = False
        for g in self.groups.values():
            g.reset(env_ids, self.q, self.qd)
            g.kp_scale[env_ids] = 1.0
        for bj in self.breakaway:
            bj.reset(env_ids)


@dataclass
class RigidObject:
    """Free rigid body with an optional resting plane (no general contact)."""

    name: str
    mass: float
    inertia_diag: np.ndarray
    init_pose: np.ndarray            # (7,) pos + quat
    num_envs: int = 1
    support_z: float | None = None   # rest height of the body origin
    pos: np.ndarray = None
    quat: np.ndarray = None
    vel: np.ndarray = None
    attached: np.ndarray = None

    def __post_init__(self):
        n = self.num_envs
        self.init_pose = np.asarray(self.init_pose, dtype=np.float64)
        self.inertia_diag = np.asarray(self.inertia_diag, dtype=np.float64)
        self.pos = np.tile(self.init_pose[:3], (n, 1))
        self.quat = np.tile(self.init_pose[3:], (n, 1))
        self.vel = np.zeros((n, 3))
        self.attached = np.zeros(n, dtype=bool)

    def substep(self, dt: float, gravity) -> None:
        free = ~self.attached
        if free.any():
            self.vel[free] += gravity * dt
            self.pos[free] += self.vel[free] * dt
            if self.support_z is not None:
                below = free & (self.pos[:, 2] < self.support_z)
                if below.any():
                    self.pos[below, 2] = self.support_z
                    self.vel[below] = 0.0

    def reset_rows(self, env_ids, pose=None) -> None:
        if pose is None:
            self.pos[env_ids] = self.init_pose[:3]
            self.quat[env_ids] = self.init_pose[3:]
        else:
            self.pos[env_ids] = pose[:, :3]
            self.quat[env_ids] = pose[:, 3:]
        self.vel[env_ids] = 0.0
        self.attached[env_ids] = False


@dataclass
class ParticleBatch:
    """Per-env particle systems sharing one topology, stepped together."""

    name: str
    builder: callable                 # () -> ParticleSystem
    num_envs: int
    iterations: int = 15
    systems: list = None

    def __post_init__(self):
        self.systems = [self.builder() for _ in range(self.num_envs)]

    def substep(self, dt: float) -> None:
        for s in self.systems:
            softbody.xpbd_step(s, dt, self.iterations)

    def reset_rows(self, env_ids) -> None:
        for i in np.atleast_1d(env_ids):
            self.systems[int(i)] = self.builder()

    def positions(self, env: int) -> np.ndarray:
        return self.systems[env].x


@dataclass
class Marker:
    kind: str
    pos: np.ndarray
    quat: np.ndarray
    scale: float = 0.05
    color: str = "#44aaff"


# ---------------------------------------------------------------------------
# attachments

@dataclass
class Attachment:
    """Kinematic weld of a free object to a gripper link (per env)."""

    robot: str
    link: str
    obj: str
    active: np.ndarray = None
    rel_pos: np.ndarray = None
    rel_quat: np.ndarray = None

    def init(self, n):
        self.active = np.zeros(n, dtype=bool)
        self.rel_pos = np.zeros((n, 3))
        self.rel_quat = np.tile([1.0, 0, 0, 0], (n, 1))
        return self


@dataclass
class HandleCoupling:
    """Spring coupling of a gripper to an articulated object's joint.

    While attached, the gripper position projected on the joint axis drives a
    stiff spring whose force feeds the joint (and its breakaway seal).
    """

    robot: str
    link: str
    art: str
    handle_link: str
    dof: int
    joint: str = ""
    stiffness: float = 2000.0
    active: np.ndarray = None
    offset: np.ndarray = None

    def init(self, n):
        self.active = np.zeros(n, dtype=bool)
        self.offset = np.zeros(n)
        return self


@dataclass
class ClothGrip:
    """Pin selected cloth particles to a gripper link while held."""

    robot: str
    link: str
    batch: str
    particle_ids: np.ndarray
    active: np.ndarray = None
    rel: np.ndarray = None        # (N, k, 3) offsets in the gripper frame
    saved_w: np.ndarray = None

    def init(self, n):
        k = len(self.particle_ids)
        self.active = np.zeros(n, dtype=bool)
        self.rel = np.zeros((n, k, 3))
        self.saved_w = np.zeros((n, k))
        return self


class World:
    def __init__(self, num_envs: int, dt: float, gravity=(0.0, 0.0, -9.81)):
        if num_envs < 1 or dt <= 0:
            raise WorldError("need num_envs >= 1 and dt > 0")
        self.num_envs = num_envs
        self.dt = dt
        self.gravity = np.asarray(gravity, dtype=np.float64)
        self.robots: dict[str, ArticulationInstance] = {}
        self.objects: dict[str, RigidObject] = {}
        self.particles: dict[str, ParticleBatch] = {}
        self.sensors: dict[str, Sensor] = {}
        self.markers: dict[str, Marker] = {}
        self.attachments: list[Attachment] = []
        self.couplings: list[HandleCoupling] = []
        self.grips: list[ClothGrip] = []
        self.t = 0.0
        self.substep_count = 0
        self.grasp_radius = GRASP_RADIUS

    # -- construction -------------------------------------------------------

    def add_articulation(self, name: str, model: RobotDescription,
                         base_pose: Transform | None = None, init_q=None
                         ) -> ArticulationInstance:
        if name in self.robots:
            raise WorldError(f"duplicate articulation {name!r}")
        inst = ArticulationInstance(
            name, model, self.num_envs, self.dt, self.gravity, base_pose, init_q
        )
        self.robots[name] = inst
        return inst

    def add_object(self, name: str, mass: float, inertia_diag, init_pose,
                   support_z: float | None = None) -> RigidObject:
        if name in self.objects:
            raise WorldError(f"duplicate object {name!r}")
        obj = RigidObject(name, mass, np.asarray(inertia_diag, dtype=np.float64),
                          init_pose, self.num_envs, support_z)
        self.objects[name] = obj
        return obj

    def add_particles(self, name: str, builder, iterations: int = 15) -> ParticleBatch:
        if name in self.particles:
            raise WorldError(f"duplicate particle system {name!r}")
        batch = ParticleBatch(name, builder, self.num_envs, iterations)
        self.particles[name] = batch
        return batch

    def set_marker(self, name: str, kind: str = "sphere", pos=(0, 0, 0),
                   quat=(1, 0, 0, 0), scale: float = 0.05, color: str = "#44aaff"):
        self.markers[name] = Marker(
            kind, np.asarray(pos, dtype=np.float64), np.asarray(quat, dtype=np.float64),
            scale, color,
        )

    def remove_marker(self, name: str) -> None:
        self.markers.pop(name, None)

    # -- sensors -------------------------------------------------------------

    def add_sensor(self, spec: SensorSpec, seed: int = 0) -> Sensor:
        if spec.name in self.sensors:
            raise WorldError(f"duplicate sensor {spec.name!r}")
        provider = self._sensor_provider(spec)
        s = Sensor(spec, provider, self.num_envs, seed, 1.0 / self.dt)
        self.sensors[spec.name] = s
        return s

    def _sensor_provider(self, spec: SensorSpec):
        kind, tgt = spec.kind, spec.target
        if kind == "joint_state":
            rob = self.robots[tgt["robot"]]
            joints = tgt.get("joints")
            if joints is None:
                sel = np.arange(rob.model.num_dofs)
            else:
                sel = np.array([
                    rob.model.joint_dof[rob.model.joint_index[j]] for j in joints
                ])
            return lambda: np.concatenate([rob.q[:, sel], rob.qd[:, sel]], axis=1)
        if kind == "body_pose":
            if "robot" in tgt:
                rob = self.robots[tgt["robot"]]
                link = tgt["link"]
                offset = np.asarray(tgt.get("offset", (0.0, 0.0, 0.0)), dtype=np.float64)

                def provider():
                    t = rob.link_pose(link)
                    return np.concatenate([t.apply(offset), t.quat], axis=1)

                return provider
            obj = self.objects[tgt["object"]]
            return lambda: np.concatenate([obj.pos, obj.quat], axis=1)
        if kind == "attachment_force":
            rob_name, link = tgt["robot"], tgt["link"]

            def provider():
                out = np.zeros((self.num_envs, 4))
                for att in self.attachments:
                    if att.robot == rob_name and att.link == link:
                        m = self.objects[att.obj].mass
                        out[att.active, 0] = 1.0
                        out[att.active, 1:] = -m * self.gravity
                return out

            return provider
        if kind == "foot_contact":
            rob = self.robots[tgt["robot"]]

            def provider():
                return np.concatenate(
                    [rob.contact_flag.astype(np.float64), rob.contact_force], axis=1
                )

            return provider
        if kind == "actuator_debug":
            rob = self.robots[tgt["robot"]]
            grp = rob.groups[tgt["group"]]
            return lambda: np.concatenate([grp.active, grp.sea_pos, grp.sea_vel], axis=1)
        raise WorldError(f"unknown sensor kind {kind!r}")

    # -- attachments ---------------------------------------------------------

    def _find_attachment(self, robot, link, obj) -> Attachment:
        for a in self.attachments:
            if (a.robot, a.link, a.obj) == (robot, link, obj):
                return a
        a = Attachment(robot, link, obj).init(self.num_envs)
        self.attachments.append(a)
        return a

    def try_attach(self, env_mask, robot: str, link: str, obj: str) -> np.ndarray:
        """Weld the object to the gripper where within grasp radius.

        Returns the mask of envs actually attached this call.
        """
        rob = self.robots[robot]
        o = self.objects[obj]
        att = self._find_attachment(robot, link, obj)
        grip = rob.link_pose(link)
        dist = np.linalg.norm(o.pos - grip.pos, axis=1)
        ok = np.asarray(env_mask, dtype=bool) & ~att.active & ~o.attached & (
            dist <= self.grasp_radius
        )
        if ok.any():
            inv_q = quat_conj(grip.quat[ok])
            att.rel_pos[ok] = quat_rotate(inv_q, o.pos[ok] - grip.pos[ok])
            att.rel_quat[ok] = quat_mul(inv_q, o.quat[ok])
            att.active[ok] = True
            o.attached[ok] = True
            ids = np.where(ok)[0]
            R = quat_to_matrix(att.rel_quat[ok])
            I_obj = R @ np.diag(o.inertia_diag) @ np.swapaxes(R, 1, 2)
            rob.params.set_payload(
                ids, rob.model.link_index[link], rob.base_params,
                np.full(len(ids), o.mass), att.rel_pos[ok], I_obj,
            )
        return ok

    def attach(self, env: int, robot: str, link: str, obj: str) -> None:
        """Strict single-env attach; raises with the distance on failure."""
        mask = np.zeros(self.num_envs, dtype=bool)
        mask[env] = True
        ok = self.try_attach(mask, robot, link, obj)
        if not ok[env]:
            d = float(np.linalg.norm(
                self.objects[obj].pos[env] - self.robots[robot].link_pose(link).pos[env]
            ))
            raise WorldError(
                f"attach rejected: object {obj!r} is {d:.4f} m from {robot}/{link}, "
                f"grasp radius {self.grasp_radius}"
            )

    def detach(self, env_mask, robot: str, link: str, obj: str | None = None) -> None:
        for att in self.attachments:
            if att.robot != robot or att.link != link:
                continue
            if obj is not None and att.obj != obj:
                continue
            ids = np.where(np.asarray(env_mask, dtype=bool) & att.active)[0]
            if len(ids) == 0:
                continue
            rob = self.robots[robot]
            o = self.objects[att.obj]
            # hand the object its current velocity before freeing it
            _, vel, _ = rob.point_state(att.link)
            o.vel[ids] = vel[ids]
            o.attached[ids] = False
            att.active[ids] = False
            rob.params.clear_payload(ids, rob.model.link_index[att.link], rob.base_params)

    def add_handle_coupling(self, robot: str, link: str, art: str,
                            handle_link: str, joint: str,
                            stiffness: float = 2000.0) -> HandleCoupling:
        a = self.robots[art]
        dof = a.model.joint_dof[a.model.joint_index[joint]]
        c = HandleCoupling(robot, link, art, handle_link, int(dof), joint, stiffness)
        self.couplings.append(c.init(self.num_envs))
        return c

    def try_attach_handle(self, env_mask, coupling: HandleCoupling) -> np.ndarray:
        rob = self.robots[coupling.robot]
        art = self.robots[coupling.art]
        grip = rob.link_pose(coupling.link)
        handle = art.link_pose(coupling.handle_link)
        dist = np.linalg.norm(handle.pos - grip.pos, axis=1)
        ok = np.asarray(env_mask, dtype=bool) & ~coupling.active & (dist <= self.grasp_radius)
        if ok.any():
            proj = self._handle_projection(coupling, grip)
            coupling.offset[ok] = proj[ok] - art.q[ok, coupling.dof]
            coupling.active[ok] = True
        return ok

    def detach_handle(self, env_mask, coupling: HandleCoupling) -> None:
        coupling.active[np.asarray(env_mask, dtype=bool)] = False

    def _handle_projection(self, c: HandleCoupling, grip: Transform) -> np.ndarray:
        """Gripper position expressed as a target joint coordinate."""
        art = self.robots[c.art]
        joint = art.model.joints[art.model.joint_index[c.joint]]
        # axis and handle zero-position in world frame
        q0 = np.zeros((self.num_envs, art.model.num_dofs))
        handle0 = kinematics.link_pose(art.model, q0, c.handle_link, art.base_pose)
        jq = quat_mul(
            kinematics.link_pose(art.model, q0, joint.parent, art.base_pose).quat,
            joint.origin.quat[None, :],
        )
        axis_w = quat_rotate(jq, joint.axis[None, :])
        return np.einsum("ni,ni->n", grip.pos - handle0.pos, axis_w)

    def add_cloth_grip(self, robot: str, link: str, batch: str, particle_ids) -> ClothGrip:
        g = ClothGrip(robot, link, batch, np.asarray(particle_ids, dtype=np.int64))
        self.grips.append(g.init(self.num_envs))
        return g

    def try_attach_cloth(self, env_mask, grip: ClothGrip, force: bool = False) -> np.ndarray:
        rob = self.robots[grip.robot]
        batch = self.particles[grip.batch]
        gp = rob.link_pose(grip.link)
        ok = np.zeros(self.num_envs, dtype=bool)
        for i in np.where(np.asarray(env_mask, dtype=bool) & ~grip.active)[0]:
            sysi = batch.systems[i]
            pts = sysi.x[grip.particle_ids]
            if force:
                # rigid-translate the whole system onto the gripper first
                delta = gp.pos[i] - pts.mean(axis=0)
                sysi.x += delta
                sysi.x_prev += delta
                pts = sysi.x[grip.particle_ids]
            if force or np.linalg.norm(pts - gp.pos[i], axis=1).min() <= self.grasp_radius:
                inv_q = quat_conj(gp.quat[i])
                grip.rel[i] = quat_rotate(inv_q, pts - gp.pos[i])
                grip.saved_w[i] = sysi.w[grip.particle_ids]
                sysi.w[grip.particle_ids] = 0.0
                grip.active[i] = True
                ok[i] = True
        return ok

    def detach_cloth(self, env_mask, grip: ClothGrip) -> None:
        batch = self.particles[grip.batch]
        for i in np.where(np.asarray(env_mask, dtype=bool) & grip.active)[0]:
            batch.systems[i].w[grip.particle_ids] = grip.saved_w[i]
            grip.active[i] = False

    # -- stepping ------------------------------------------------------------

    def _apply_couplings(self) -> None:
        for c in self.couplings:
            if not c.active.any():
                continue
            rob = self.robots[c.robot]
            art = self.robots[c.art]
            grip = rob.link_pose(c.link)
            proj = self._handle_projection(c, grip)
            q_tgt = proj - c.offset
            force = c.stiffness * (q_tgt - art.q[:, c.dof])
            art.extra_torque[:, c.dof] += np.where(c.active, force, 0.0)

    def _enforce_attachments(self) -> None:
        for att in self.attachments:
            if not att.active.any():
                continue
            rob = self.robots[att.robot]
            o = self.objects[att.obj]
            grip = rob.link_pose(att.link)
            ids = att.active
            o.pos[ids] = grip.pos[ids] + quat_rotate(grip.quat[ids], att.rel_pos[ids])
            o.quat[ids] = quat_mul(grip.quat[ids], att.rel_quat[ids])
        for g in self.grips:
            if not g.active.any():
                continue
            rob = self.robots[g.robot]
            batch = self.particles[g.batch]
            gp = rob.link_pose(g.link)
            for i in np.where(g.active)[0]:
                batch.systems[i].x[g.particle_ids] = gp.pos[i] + quat_rotate(
                    gp.quat[i], g.rel[i]
                )

    def substep(self) -> None:
        self._apply_couplings()
        for rob in self.robots.values():
            rob.substep()
        for obj in self.objects.values():
            obj.substep(self.dt, self.gravity)
        self._enforce_attachments()
        for batch in self.particles.values():
            batch.substep(self.dt)
        self.t += self.dt
        self.substep_count += 1
        for s in self.sensors.values():
            s.advance(self.dt, self.t)

    # -- bookkeeping ---------------------------------------------------------

    def fault_mask(self) -> np.ndarray:
        fault = np.zeros(self.num_envs, dtype=bool)
        for rob in self.robots.values():
            fault |= rob.fault
        for b in self.particles.values():
            for i, s in enumerate(b.systems):
                if s.faulted:
                    fault[i] = True
        return fault

    def reset_rows(self, env_ids) -> None:
        """Clear per-env state back to initial values (no randomization here)."""
        env_ids = np.atleast_1d(env_ids)
        mask = np.zeros(self.num_envs, dtype=bool)
        mask[env_ids] = True
        for att in self.attachments:
            self.detach(mask, att.robot, att.link, att.obj)
        for c in self.couplings:
            self.detach_handle(mask, c)
        for g in self.grips:
            self.detach_cloth(mask, g)
        for rob in self.robots.values():
            rob.reset_rows(env_ids)
        for obj in self.objects.values():
            obj.reset_rows(env_ids)
        for batch in self.particles.values():
            batch.reset_rows(env_ids)

    def refresh_sensors(self, env_ids) -> None:
        for s in self.sensors.values():
            s.reset(env_ids, self.t)

    def state_checksum(self) -> str:
        """Digest of all physics state; markers are deliberately excluded."""
        h = hashlib.sha256()
        for name in sorted(self.robots):
            rob = self.robots[name]
            h.update(rob.q.tobytes()); h.update(rob.qd.tobytes())
        for name in sorted(self.objects):
            o = self.objects[name]
            h.update(o.pos.tobytes()); h.update(o.quat.tobytes()); h.update(o.vel.tobytes())
        for name in sorted(self.particles):
            for s in self.particles[name].systems:
                h.update(s.x.tobytes()); h.update(s.v.tobytes())
        return h.hexdigest()
