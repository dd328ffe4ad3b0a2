"""Vectorized environments: a graph cut over an agent graph running on a world.

``EnvSpec`` picks the edge where external actions enter (a node input port or
an actuator group), the node output ports read out as observations, and the
reward/termination nodes. ``Env.step`` latches the action, runs ``decimation``
physics substeps with due agent nodes, evaluates reward and termination, and
auto-resets finished environments (the pre-reset observation is returned in
``info["terminal_observation"]``).

Domain randomization entries are applied only at reset, each env drawing from
its own persistent RNG stream, so resetting one environment never perturbs
another and identical seeds reproduce identical runs bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import AgentGraph, GraphError, GraphRuntime
from .seeding import env_streams
from .world import World

_TIMER_EPS = 1e-9


class EnvError(ValueError):
    pass


def _draw(gen, entry) -> float:
    if "uniform" in entry:
        lo, hi = entry["uniform"]
        return gen.uniform(lo, hi)
    if "gaussian" in entry:
        mu, sd = entry["gaussian"]
        return gen.normal(mu, sd)
    raise EnvError(f"randomization entry needs 'uniform' or 'gaussian': {entry}")


@dataclass
class EnvSpec:
    action_port: str                     # "node.port" or "group:robot/group"
    action_dim: int
    observation_ports: list[str]
    reward_node: str
    control_rate: float
    episode_length: int
    termination_node: str | None = None
    randomization: list[dict] = field(default_factory=list)


class NodeContext:
    """What nodes see: the world, mutable task state, and command helpers."""

    def __init__(self, world: World, task: dict):
        self.world = world
        self.task = task
        self.command_fault = np.zeros(world.num_envs, dtype=bool)

    def sensor(self, name: str):
        return self.world.sensors[name]

    def robot(self, name: str):
        return self.world.robots[name]

    def set_group_command(self, robot: str, group: str, commands) -> None:
        bad = self.world.robots[robot].groups[group].set_command(commands)
        self.command_fault |= bad


class Env:
    def __init__(self, world: World, graph: AgentGraph, spec: EnvSpec, seed: int = 0,
                 task_state: dict | None = None):
        self.world = world
        self.graph = graph
        self.spec = spec
        self.seed = seed
        self.num_envs = world.num_envs
        physics_rate = 1.0 / world.dt
        ratio = physics_rate / spec.control_rate
        if abs(ratio - round(ratio)) > 1e-6 or ratio < 1.0 - 1e-9:
            raise EnvError(
                f"control rate {spec.control_rate} must divide physics rate {physics_rate}"
            )
        self.decimation = int(round(ratio))
        skip = {spec.reward_node}
        if spec.termination_node:
            skip.add(spec.termination_node)
        external = {}
        self._group_action = None
        if spec.action_port.startswith("group:"):
            robot, group = spec.action_port[6:].split("/", 1)
            if group not in world.robots[robot].groups:
                raise EnvError(f"unknown actuator group in {spec.action_port!r}")
            self._group_action = (robot, group)
        else:
            node, port = spec.action_port.split(".", 1)
            if node not in graph.nodes:
                raise EnvError(f"action port consumer {node!r} not in graph")
            if graph.nodes[node].kind != "action":
                raise EnvError("the action port's consumer must be an action node")
            external[spec.action_port] = np.zeros((self.num_envs, spec.action_dim))
        if spec.reward_node not in graph.nodes:
            raise EnvError(f"unknown reward node {spec.reward_node!r}")
        if spec.termination_node and spec.termination_node not in graph.nodes:
            raise EnvError(f"unknown termination node {spec.termination_node!r}")
        self.runtime = GraphRuntime(graph, world.dt, external, skip)
        for ref in spec.observation_ports:
            node, port = self.runtime.graph._check_ref(ref)
            if not graph.nodes[node].pure:
                raise EnvError(
                    f"observation port {ref!r} must come from a pure perception node"
                )
        # action nodes fire on the first substep of their period
        for node in graph.nodes.values():
            node._acc = 1.0 / node.rate - world.dt
        self.task: dict = dict(task_state or {})
        self.task.setdefault("success", np.zeros(self.num_envs, dtype=bool))
        self.ctx = NodeContext(world, self.task)
        self.episode_steps = np.zeros(self.num_envs, dtype=np.int64)
        self._rand_streams = env_streams(seed, self.num_envs, "randomization")
        self._pending_fault = np.zeros(self.num_envs, dtype=bool)
        self.control_step_count = 0
        self.last_substeps_per_step = 0
        self.reset()
        self.obs_dim = self._observe().shape[1]

    # -- observation ----------------------------------------------------------

    def _observe(self) -> np.ndarray:
        cache: dict[str, dict] = {}
        parts = []
        for ref in self.spec.observation_ports:
            node, port = ref.split(".", 1)
            if node not in cache:
                cache[node] = self.runtime.evaluate(node, self.ctx)
            val = cache[node][port]
            parts.append(val.reshape(self.num_envs, -1))
        return np.concatenate(parts, axis=1) if parts else np.zeros((self.num_envs, 0))

    # -- reset ------------------------------------------------------------------

    def reset(self, env_ids=None) -> np.ndarray:
        if env_ids is None:
            env_ids = np.arange(self.num_envs)
        env_ids = np.atleast_1d(np.asarray(env_ids, dtype=np.int64))
        self.world.reset_rows(env_ids)
        self._apply_randomization(env_ids)
        # re-latch actuator defaults from the randomized state
        for rob in self.world.robots.values():
            for g in rob.groups.values():
                g.reset(env_ids, rob.q, rob.qd)
        self.runtime.reset(self.ctx, env_ids)
        self.world.refresh_sensors(env_ids)
        self.episode_steps[env_ids] = 0
        self._pending_fault[env_ids] = False
        self.ctx.command_fault[env_ids] = False
        return self._observe()[env_ids]

    def _apply_randomization(self, env_ids) -> None:
        for k, entry in enumerate(self.spec.randomization):
            target = entry["target"]
            for i in env_ids:
                gen = self._rand_streams[int(i)]
                if target == "link_mass":
                    rob = self.world.robots[entry["robot"]]
                    li = rob.model.link_index[entry["link"]]
                    m = _draw(gen, entry)
                    rob.params.mass[i, li] = m
                    rob.base_params.mass[i, li] = m
                elif target == "joint_damping":
                    rob = self.world.robots[entry["robot"]]
                    f = _draw(gen, entry)
                    rob.params.damping[i] *= f
                    rob.base_params.damping[i] *= f
                elif target == "dry_friction":
                    rob = self.world.robots[entry["robot"]]
                    f = _draw(gen, entry)
                    rob.params.dry_friction[i] *= f
                    rob.base_params.dry_friction[i] *= f
                elif target == "actuator_gains":
                    rob = self.world.robots[entry["robot"]]
                    grp = rob.groups[entry["group"]]
                    grp.kp_scale[i] = _draw(gen, entry)
                elif target == "initial_q":
                    rob = self.world.robots[entry["robot"]]
                    lo, hi = entry["uniform"]
                    n = rob.model.num_dofs
                    joints = entry.get("joints")
                    if joints is None:
                        rob.q[i] = np.clip(
                            rob.init_q + gen.uniform(lo, hi, n),
                            *rob.model.joint_limit_arrays()[:2],
                        )
                    else:
                        for j in joints:
                            d = rob.model.joint_dof[rob.model.joint_index[j]]
                            rob.q[i, d] = rob.init_q[d] + gen.uniform(lo, hi)
                elif target == "initial_qd":
                    rob = self.world.robots[entry["robot"]]
                    lo, hi = entry["uniform"]
                    rob.qd[i] = gen.uniform(lo, hi, rob.model.num_dofs)
                elif target == "object_pose":
                    obj = self.world.objects[entry["object"]]
                    box = np.asarray(entry["box"], dtype=np.float64)
                    offset = gen.uniform(box[:, 0], box[:, 1])
                    obj.pos[i] = obj.init_pose[:3] + offset
                elif target == "task_box":
                    box = np.asarray(entry["box"], dtype=np.float64)
                    self.task[entry["key"]][i] = gen.uniform(box[:, 0], box[:, 1])
                elif target == "goal_fk":
                    # reachable-by-construction goal: forward kinematics of a
                    # random joint configuration inside a fraction of limits
                    rob = self.world.robots[entry["robot"]]
                    lo, hi, _, _ = rob.model.joint_limit_arrays()
                    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
                    frac = float(entry.get("limit_fraction", 0.5))
                    q_s = rob.init_q.copy()
                    for j in entry["joints"]:
                        d = rob.model.joint_dof[rob.model.joint_index[j]]
                        q_s[d] = mid[d] + frac * half[d] * gen.uniform(-1.0, 1.0)
                    from .kinematics import point_world

                    pos = point_world(
                        rob.model, q_s[None, :], entry["link"],
                        entry.get("offset", (0.0, 0.0, 0.0)), rob.base_pose,
                    )[0]
                    self.task[entry["key"]][i] = pos
                else:
                    raise EnvError(f"unknown randomization target {target!r}")
        for rob in self.world.robots.values():
            rob.params.mark_dirty()
            rob.base_params.mark_dirty()

    # -- stepping -----------------------------------------------------------------

    def step(self, actions):
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.num_envs, self.spec.action_dim):
            raise EnvError(
                f"action shape {actions.shape} != ({self.num_envs}, {self.spec.action_dim})"
            )
        bad = ~np.isfinite(actions).all(axis=1)
        if bad.any():
            self._pending_fault |= bad
            actions = actions.copy()
            actions[bad] = 0.0
        if self._group_action is not None:
            robot, group = self._group_action
            self.ctx.set_group_command(robot, group, actions)
        else:
            self.runtime.latch(self.spec.action_port, actions)
        sub0 = self.world.substep_count
        for _ in range(self.decimation):
            self.runtime.run_due(self.ctx)
            self.world.substep()
        self.last_substeps_per_step = self.world.substep_count - sub0
        self.control_step_count += 1
        self.episode_steps += 1

        reward = np.asarray(
            self.runtime.evaluate(self.spec.reward_node, self.ctx)["reward"],
            dtype=np.float64,
        ).reshape(self.num_envs)
        if self.spec.termination_node:
            term = np.asarray(
                self.runtime.evaluate(self.spec.termination_node, self.ctx)["done"]
            ).reshape(self.num_envs).astype(bool)
        else:
            term = np.zeros(self.num_envs, dtype=bool)
        timeout = self.episode_steps >= self.spec.episode_length
        fault = self.world.fault_mask() | self._pending_fault | self.ctx.command_fault
        done = term | timeout | fault
        reward = np.where(fault, 0.0, reward)
        info = {
            "time_outs": timeout,
            "fault": fault.copy(),
            "success": self.task.get("success", np.zeros(self.num_envs, dtype=bool)).copy(),
        }
        obs = self._observe()
        if done.any():
            ids = np.where(done)[0]
            info["terminal_observation"] = obs[ids].copy()
            info["reset_ids"] = ids
            fresh = self.reset(ids)
            obs = obs.copy()
            obs[ids] = fresh
        return obs, reward, done, info


def build_env(world: World, graph: AgentGraph, spec: EnvSpec, seed: int = 0,
              task_state: dict | None = None) -> Env:
    """Validate the cut and assemble the environment."""
    return Env(world, graph, spec, seed, task_state)
