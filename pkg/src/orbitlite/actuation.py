"""Actuator groups: command routing, joint-level PD, and transmission models.

Each group owns a contiguous sub-vector of the robot's commands (its size is
the number of joints in the group) and turns latched commands into joint
torques. Targets refresh at the group's own update rate; torques are
recomputed every physics substep from the held target and fresh joint state.

Transmission models:
  ideal     command torque passes through unchanged
  dc_motor  four-quadrant torque-speed envelope, linear derating while driving
  sea       motor behind a spring/damper; joint torque is the spring torque
  delayed   FIFO of command vectors shifted once per actuator tick, wrapping
            an inner model
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

COMMAND_TYPES = ("position", "velocity", "torque")
MODEL_TYPES = ("ideal", "dc_motor", "sea", "delayed")

_TIMER_EPS = 1e-9


class ActuationError(ValueError):
    pass


@dataclass(frozen=True)
class DcParams:
    stall_torque: float
    no_load_speed: float


@dataclass(frozen=True)
class SeaParams:
    spring_k: float
    spring_d: float
    motor_inertia: float


@dataclass(frozen=True)
class ActuatorGroupConfig:
    name: str
    joints: tuple[str, ...]
    command_type: str
    model: str = "ideal"
    kp: float = 0.0
    kd: float = 0.0
    dc: DcParams | None = None
    sea: SeaParams | None = None
    delay_ticks: int = 0
    inner_model: str = "ideal"
    update_rate: float = 0.0        # 0 = run at the physics rate
    gravity_comp: bool = False

    def replace(self, **kw) -> "ActuatorGroupConfig":
        return dataclasses.replace(self, **kw)

    @property
    def size(self) -> int:
        return len(self.joints)

    @property
    def effective_model(self) -> str:
        return self.inner_model if self.model == "delayed" else self.model


def parse_group_config(raw: dict) -> ActuatorGroupConfig:
    name = raw.get("name")
    joints = tuple(raw.get("joints") or ())
    if not name or not joints:
        raise ActuationError(f"actuator group needs a name and joints: {raw}")
    ct = raw.get("command_type")
    if ct not in COMMAND_TYPES:
        raise ActuationError(f"group {name}: command_type must be one of {COMMAND_TYPES}")
    model = raw.get("model", "ideal")
    if model not in MODEL_TYPES:
        raise ActuationError(f"group {name}: model must be one of {MODEL_TYPES}")
    gains = raw.get("gains", {})
    dc = raw.get("dc")
    if dc is not None:
        dc = DcParams(float(dc["stall_torque"]), float(dc["no_load_speed"]))
        if dc.stall_torque <= 0 or dc.no_load_speed <= 0:
            raise ActuationError(f"group {name}: stall torque and no-load speed must be > 0")
    sea = raw.get("sea")
    if sea is not None:
        sea = SeaParams(
            float(sea["spring_k"]), float(sea["spring_d"]), float(sea["motor_inertia"])
        )
        if sea.spring_k <= 0 or sea.motor_inertia <= 0:
            raise ActuationError(f"group {name}: sea spring_k and motor_inertia must be > 0")
    delay = int(raw.get("delay_ticks", 0))
    if delay < 0:
        raise ActuationError(f"group {name}: delay_ticks must be >= 0")
    if model == "delayed" and delay == 0:
        raise ActuationError(f"group {name}: delayed model needs delay_ticks >= 1")
    if model != "delayed" and delay != 0:
        raise ActuationError(f"group {name}: delay_ticks only valid with model 'delayed'")
    inner = raw.get("inner_model", "ideal")
    if inner not in ("ideal", "dc_motor", "sea"):
        raise ActuationError(f"group {name}: inner_model must be ideal, dc_motor, or sea")
    eff = inner if model == "delayed" else model
    if eff == "dc_motor" and dc is None:
        raise ActuationError(f"group {name}: dc_motor model needs dc params")
    if eff == "sea" and sea is None:
        raise ActuationError(f"group {name}: sea model needs sea params")
    return ActuatorGroupConfig(
        name=name,
        joints=joints,
        command_type=ct,
        model=model,
        kp=float(gains.get("kp", 0.0)),
        kd=float(gains.get("kd", 0.0)),
        dc=dc,
        sea=sea,
        delay_ticks=delay,
        inner_model=inner,
        update_rate=float(raw.get("update_rate", 0.0)),
        gravity_comp=bool(raw.get("gravity_comp", False)),
    )


def dc_saturate(tau_cmd: np.ndarray, omega: np.ndarray, params: DcParams) -> np.ndarray:
    """Clamp commanded torque to the motor's torque-speed envelope.

    Driving torque derates linearly to zero at the no-load speed; braking
    torque is capped at the stall torque. Symmetric in the sign of omega.
    """
    drive_cap = params.stall_torque * np.clip(
        1.0 - np.abs(omega) / params.no_load_speed, 0.0, None
    )
    upper = np.where(omega >= 0.0, drive_cap, params.stall_torque)
    lower = np.where(omega >= 0.0, -params.stall_torque, -drive_cap)
    return np.clip(tau_cmd, lower, upper)


class ActuatorGroup:
    """Runtime state of one actuator group over a batch of environments."""

    def __init__(
        self,
        config: ActuatorGroupConfig,
        dof_indices: np.ndarray,
        num_envs: int,
        physics_dt: float,
        effort_limit: np.ndarray,
    ):
        self.config = config
        self.dof_indices = np.asarray(dof_indices, dtype=np.int64)
        self.num_envs = num_envs
        self.effort_limit = np.asarray(effort_limit, dtype=np.float64)
        rate = config.update_rate
        self.period = (1.0 / rate) if rate > 0 else physics_dt
        if rate > 0:
            n = self.period / physics_dt
            if abs(n - round(n)) > 1e-9:
                raise ActuationError(
                    f"group {config.name}: update rate {rate} Hz does not divide "
                    f"the physics rate {1.0 / physics_dt:.1f} Hz"
                )
        gs = config.size
        self.latched = np.zeros((num_envs, gs))
        self.active = np.zeros((num_envs, gs))
        self.fifo = np.zeros((max(config.delay_ticks, 1), num_envs, gs))
        self._fifo_head = 0
        self.sea_pos = np.zeros((num_envs, gs))
        self.sea_vel = np.zeros((num_envs, gs))
        self.kp_scale = np.ones((num_envs, 1))   # domain-randomization hook
        self._acc = 0.0
        self.tick_count = 0

    # -- commands ---------------------------------------------------------

    def set_command(self, commands: np.ndarray) -> np.ndarray:
        """Latch a command sub-vector; returns a per-env fault mask.

        Non-finite rows are rejected (previous command kept) and flagged.
        """
        commands = np.asarray(commands, dtype=np.float64)
        if commands.shape != (self.num_envs, self.config.size):
            raise ActuationError(
                f"group {self.config.name}: command shape {commands.shape} != "
                f"({self.num_envs}, {self.config.size})"
            )
        bad = ~np.isfinite(commands).all(axis=1)
        if bad.any():
            ok = ~bad
            self.latched[ok] = commands[ok]
        else:
            self.latched[:] = commands
        return bad

    def default_command(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        if self.config.command_type == "position":
            return q[:, self.dof_indices]
        return np.zeros((self.num_envs, self.config.size))

    def reset(self, env_ids: np.ndarray, q: np.ndarray, qd: np.ndarray) -> None:
        """Re-latch default commands and motor state; gain scales are left to
        the caller (randomization applies them after this)."""
        default = self.default_command(q, qd)[env_ids]
        self.latched[env_ids] = default
        self.active[env_ids] = default
        self.fifo[:, env_ids] = default
        self.sea_pos[env_ids] = q[env_ids][:, self.dof_indices]
        self.sea_vel[env_ids] = qd[env_ids][:, self.dof_indices]

    # -- stepping ---------------------------------------------------------

    def advance(self, q: np.ndarray, qd: np.ndarray, dt: float) -> None:
        """Advance the group timer; on due ticks, refresh targets and motors."""
        self._acc += dt
        while self._acc + _TIMER_EPS >= self.period:
            self._acc -= self.period
            self._tick(q, qd)

    def _tick(self, q: np.ndarray, qd: np.ndarray) -> None:
        self.tick_count += 1
        if self.config.delay_ticks > 0:
            head = self._fifo_head
            self.active[:] = self.fifo[head]
            self.fifo[head] = self.latched
            self._fifo_head = (head + 1) % self.config.delay_ticks
        else:
            self.active[:] = self.latched
        if self.config.effective_model == "sea":
            qg = q[:, self.dof_indices]
            qdg = qd[:, self.dof_indices]
            cmd = self._controller_torque(qg, qdg)
            self._sea_motor_step(cmd, qg, qdg, self.period)

    def _controller_torque(self, qg: np.ndarray, qdg: np.ndarray) -> np.ndarray:
        c = self.config
        if c.command_type == "position":
            return self.kp_scale * c.kp * (self.active - qg) + c.kd * (0.0 - qdg)
        if c.command_type == "velocity":
            return c.kd * (self.active - qdg)
        return self.active.copy()

    def _sea_motor_step(self, tau_motor_cmd, qg, qdg, h: float) -> None:
        sea = self.config.sea
        tau_joint = sea.spring_k * (self.sea_pos - qg) + sea.spring_d * (self.sea_vel - qdg)
        tau_m = tau_motor_cmd
        if self.config.dc is not None:
            tau_m = dc_saturate(tau_m, self.sea_vel, self.config.dc)
        acc = (tau_m - tau_joint) / sea.motor_inertia
        self.sea_vel += acc * h
        self.sea_pos += self.sea_vel * h

    def compute_torques(
        self, q: np.ndarray, qd: np.ndarray, gravity_comp: np.ndarray | None, dt: float
    ) -> np.ndarray:
        """Joint torques for this group's joints, one physics substep."""
        c = self.config
        qg = q[:, self.dof_indices]
        qdg = qd[:, self.dof_indices]
        model = c.effective_model
        if model == "sea":
            sea = c.sea
            tau = sea.spring_k * (self.sea_pos - qg) + sea.spring_d * (self.sea_vel - qdg)
        else:
            tau = self._controller_torque(qg, qdg)
            if c.gravity_comp and gravity_comp is not None:
                tau = tau + gravity_comp[:, self.dof_indices]
            if model == "dc_motor":
                tau = dc_saturate(tau, qdg, c.dc)
        return np.clip(tau, -self.effort_limit, self.effort_limit)
