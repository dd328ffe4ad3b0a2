"""Robot description documents: schema, validation, and the parsed model.

A description is a YAML document with top-level keys ``name``, ``units``,
``links[]``, ``joints[]``, ``actuator_groups[]``. Lengths are meters, angles
radians, masses kilograms; the ``units`` key must say so explicitly and the
parser rejects anything else. Quaternions are stored (w, x, y, z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .actuation import ActuatorGroupConfig, parse_group_config
from .spatial import Transform

REQUIRED_UNITS = {"length": "m", "angle": "rad", "mass": "kg"}
JOINT_TYPES = ("revolute", "prismatic", "fixed")


class DescriptionError(ValueError):
    """Malformed or inconsistent robot description document."""


@dataclass(frozen=True)
class JointLimits:
    lower: float
    upper: float
    velocity: float
    effort: float


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray            # (3,) in link frame
    inertia: np.ndarray        # (3, 3) about the CoM, link frame


@dataclass(frozen=True)
class Joint:
    name: str
    type: str
    parent: str
    child: str
    origin: Transform          # child frame in parent frame at q = 0
    axis: np.ndarray           # (3,) unit, in the joint (child) frame
    limits: JointLimits
    damping: float = 0.0
    dry_friction: float = 0.0
    breakaway: dict | None = None   # {hold_torque, break_threshold} for seal-type joints


@dataclass(frozen=True)
class RobotDescription:
    """Immutable articulation model plus precomputed tree indexing.

    Links are stored in topological order (parent before child, base first).
    ``q`` indices run over non-fixed joints in document order.
    """

    name: str
    links: tuple[Link, ...]
    joints: tuple[Joint, ...]
    actuator_groups: tuple[ActuatorGroupConfig, ...]
    # tree structure, filled by the parser
    link_index: dict[str, int] = field(default_factory=dict)
    joint_index: dict[str, int] = field(default_factory=dict)
    parent_link: np.ndarray = None      # (num_links,) parent link idx, -1 for base
    link_joint: np.ndarray = None       # (num_links,) incoming joint idx, -1 for base
    joint_dof: np.ndarray = None        # (num_joints,) q index or -1 for fixed

    @property
    def num_links(self) -> int:
        return len(self.links)

    @property
    def num_dofs(self) -> int:
        return int((self.joint_dof >= 0).sum())

    @property
    def dof_joints(self) -> list[Joint]:
        return [j for j, d in zip(self.joints, self.joint_dof) if d >= 0]

    def joint_limit_arrays(self):
        """(lower, upper, velocity, effort) arrays over dofs."""
        js = self.dof_joints
        return (
            np.array([j.limits.lower for j in js]),
            np.array([j.limits.upper for j in js]),
            np.array([j.limits.velocity for j in js]),
            np.array([j.limits.effort for j in js]),
        )

    def group_for_joint(self, joint_name: str) -> ActuatorGroupConfig | None:
        for g in self.actuator_groups:
            if joint_name in g.joints:
                return g
        return None

    def with_actuator_overrides(self, overrides: dict) -> "RobotDescription":
        """New description with per-group config fields replaced.

        ``overrides`` maps group name to a dict of field updates, e.g.
        ``{"arm": {"command_type": "torque"}}``.
        """
        groups = []
        for g in self.actuator_groups:
            if g.name in overrides:
                groups.append(g.replace(**overrides[g.name]))
            else:
                groups.append(g)
        return RobotDescription(
            name=self.name,
            links=self.links,
            joints=self.joints,
            actuator_groups=tuple(groups),
            link_index=self.link_index,
            joint_index=self.joint_index,
            parent_link=self.parent_link,
            link_joint=self.link_joint,
            joint_dof=self.joint_dof,
        )


def _as_inertia(raw, where: str) -> np.ndarray:
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape == (6,):
        ixx, iyy, izz, ixy, ixz, iyz = arr
        arr = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    if arr.shape != (3, 3):
        raise DescriptionError(f"{where}: inertia must be 3x3 or [ixx,iyy,izz,ixy,ixz,iyz]")
    if not np.allclose(arr, arr.T, atol=1e-12):
        raise DescriptionError(f"{where}: inertia must be symmetric")
    if np.any(np.linalg.eigvalsh(arr) <= 0.0):
        raise DescriptionError(f"{where}: inertia must be positive definite")
    return arr


def _as_transform(raw, where: str) -> Transform:
    raw = raw or {}
    pos = np.asarray(raw.get("position", [0.0, 0.0, 0.0]), dtype=np.float64)
    quat = np.asarray(raw.get("quaternion", [1.0, 0.0, 0.0, 0.0]), dtype=np.float64)
    if pos.shape != (3,) or quat.shape != (4,):
        raise DescriptionError(f"{where}: origin needs position[3] and quaternion[4] (w,x,y,z)")
    n = float(np.linalg.norm(quat))
    if abs(n - 1.0) > 1e-6:
        raise DescriptionError(f"{where}: origin quaternion norm {n:.6f} != 1")
    return Transform(pos, quat / n)


def parse_robot_description(text: str) -> RobotDescription:
    """Parse and validate a robot description document.

    Raises :class:`DescriptionError` for malformed documents, unit mismatches,
    cycles or unknown links in the joint tree, and limit violations.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise DescriptionError(f"not a well-formed document: {e}") from e
    if not isinstance(doc, dict):
        raise DescriptionError("document root must be a mapping")
    for key in ("name", "units", "links", "joints"):
        if key not in doc:
            raise DescriptionError(f"missing top-level key '{key}'")
    units = doc["units"]
    if units != REQUIRED_UNITS:
        raise DescriptionError(f"units must be exactly {REQUIRED_UNITS}, got {units}")

    links: list[Link] = []
    seen = set()
    for raw in doc["links"]:
        name = raw.get("name")
        if not name or name in seen:
            raise DescriptionError(f"duplicate or missing link name {name!r}")
        seen.add(name)
        mass = float(raw.get("mass", 0.0))
        if mass <= 0.0:
            raise DescriptionError(f"link {name}: mass must be > 0")
        com = np.asarray(raw.get("com", [0.0, 0.0, 0.0]), dtype=np.float64)
        if com.shape != (3,):
            raise DescriptionError(f"link {name}: com must be a 3-vector")
        inertia = _as_inertia(raw.get("inertia", np.eye(3) * 1e-6), f"link {name}")
        links.append(Link(name, mass, com, inertia))
    if not links:
        raise DescriptionError("no links")
    name_to_idx = {l.name: i for i, l in enumerate(links)}

    joints: list[Joint] = []
    seen = set()
    child_of = {}
    for raw in doc["joints"]:
        jname = raw.get("name")
        if not jname or jname in seen:
            raise DescriptionError(f"duplicate or missing joint name {jname!r}")
        seen.add(jname)
        jtype = raw.get("type")
        if jtype not in JOINT_TYPES:
            raise DescriptionError(f"joint {jname}: type must be one of {JOINT_TYPES}")
        parent, child = raw.get("parent"), raw.get("child")
        for l in (parent, child):
            if l not in name_to_idx:
                raise DescriptionError(f"joint {jname}: unknown link {l!r}")
        if parent == child:
            raise DescriptionError(f"joint {jname}: cycle (parent == child)")
        if child in child_of:
            raise DescriptionError(f"link {child} has two parent joints")
        child_of[child] = jname
        axis = np.asarray(raw.get("axis", [0.0, 0.0, 1.0]), dtype=np.float64)
        if jtype != "fixed":
            n = float(np.linalg.norm(axis))
            if abs(n - 1.0) > 1e-6:
                raise DescriptionError(f"joint {jname}: axis must be a unit vector")
            axis = axis / n
        lim = raw.get("limits", {})
        limits = JointLimits(
            lower=float(lim.get("lower", 0.0)),
            upper=float(lim.get("upper", 0.0)),
            velocity=float(lim.get("velocity", 1e9)),
            effort=float(lim.get("effort", 1e9)),
        )
        if jtype != "fixed":
            if limits.lower > limits.upper:
                raise DescriptionError(f"joint {jname}: limits.lower > limits.upper")
            if limits.velocity < 0 or limits.effort < 0:
                raise DescriptionError(f"joint {jname}: velocity/effort limits must be >= 0")
        joints.append(
            Joint(
                name=jname,
                type=jtype,
                parent=parent,
                child=child,
                origin=_as_transform(raw.get("origin"), f"joint {jname}"),
                axis=axis,
                limits=limits,
                damping=float(raw.get("damping", 0.0)),
                dry_friction=float(raw.get("dry_friction", 0.0)),
                breakaway=raw.get("breakaway"),
            )
        )

    roots = [l.name for l in links if l.name not in child_of]
    if len(roots) != 1:
        raise DescriptionError(f"link tree must have exactly one root, found {roots}")
    if roots[0] != links[0].name:
        raise DescriptionError(f"base link {roots[0]!r} must be listed first")

    # topological order check: walking joints in order must only attach to known links
    reached = {roots[0]}
    order = []
    pending = list(joints)
    while pending:
        progress = False
        for j in list(pending):
            if j.parent in reached:
                reached.add(j.child)
                order.append(j)
                pending.remove(j)
                progress = True
        if not progress:
            bad = ", ".join(j.name for j in pending)
            raise DescriptionError(f"cycle or disconnected subtree via joints: {bad}")
    joints = order
    if reached != set(name_to_idx):
        missing = set(name_to_idx) - reached
        raise DescriptionError(f"links not connected to the tree: {sorted(missing)}")
    # reorder links topologically (base first, then by joint order)
    links = [links[name_to_idx[roots[0]]]] + [links[name_to_idx[j.child]] for j in joints]
    name_to_idx = {l.name: i for i, l in enumerate(links)}

    joint_dof = np.full(len(joints), -1, dtype=np.int64)
    d = 0
    for i, j in enumerate(joints):
        if j.type != "fixed":
            joint_dof[i] = d
            d += 1

    groups = tuple(
        parse_group_config(raw) for raw in (doc.get("actuator_groups") or [])
    )
    actuated = [j.name for j in joints if j.type != "fixed"]
    claimed: dict[str, str] = {}
    for g in groups:
        for jn in g.joints:
            if jn not in actuated:
                raise DescriptionError(f"group {g.name}: joint {jn!r} unknown or fixed")
            if jn in claimed:
                raise DescriptionError(
                    f"joint {jn} in groups {claimed[jn]!r} and {g.name!r}"
                )
            claimed[jn] = g.name
    unclaimed = [jn for jn in actuated if jn not in claimed]
    if groups and unclaimed:
        raise DescriptionError(f"actuated joints without a group: {unclaimed}")

    parent_link = np.empty(len(links), dtype=np.int64)
    link_joint = np.empty(len(links), dtype=np.int64)
    parent_link[0] = -1
    link_joint[0] = -1
    for i, j in enumerate(joints):
        c = name_to_idx[j.child]
        parent_link[c] = name_to_idx[j.parent]
        link_joint[c] = i

    return RobotDescription(
        name=str(doc["name"]),
        links=tuple(links),
        joints=tuple(joints),
        actuator_groups=groups,
        link_index=name_to_idx,
        joint_index={j.name: i for i, j in enumerate(joints)},
        parent_link=parent_link,
        link_joint=link_joint,
        joint_dof=joint_dof,
    )


def load_description(path) -> RobotDescription:
    with open(path, "r") as f:
        return parse_robot_description(f.read())
