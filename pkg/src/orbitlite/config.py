"""Scene/task config documents: one plain-data dict (YAML-compatible) fully
describes a world, an agent graph, and the env cut over them.

Keys: ``world {dt, gravity, robots[], objects[], cloths[], beams[],
sensors[], markers[], couplings[], grips[]}``, ``task_state {key: {init,
dim}}``, ``graph {nodes[], edges[]}``, ``env {action_port, action_dim,
observation_ports[], reward, termination, control_rate, episode_length,
randomization[]}``. Builders in :mod:`orbitlite.tasks` emit these documents;
episode logs embed them so a recording can be rebuilt exactly.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from . import softbody
from .description import RobotDescription
from .env import Env, EnvSpec
from .fixtures import load_fixture
from .graph import AgentGraph
from .nodes import make_node
from .sensing import NoiseSpec, SensorSpec
from .spatial import Transform
from .world import GroundContactConfig, World


class ConfigError(ValueError):
    pass


def config_hash(doc: dict) -> str:
    """Stable digest of a resolved config document."""
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def _transform(raw) -> Transform | None:
    if raw is None:
        return None
    return Transform(
        np.asarray(raw.get("position", (0, 0, 0)), dtype=np.float64),
        np.asarray(raw.get("quaternion", (1, 0, 0, 0)), dtype=np.float64),
    )


def _resolve_model(spec: dict) -> RobotDescription:
    model = load_fixture(spec["fixture"])
    overrides = spec.get("actuator_overrides")
    if overrides:
        model = model.with_actuator_overrides(overrides)
    return model


def build_world(doc: dict, num_envs: int, seed: int) -> World:
    w = doc["world"]
    world = World(num_envs, float(w["dt"]), w.get("gravity", (0.0, 0.0, -9.81)))
    for rs in w.get("robots", []):
        inst = world.add_articulation(
            rs["name"], _resolve_model(rs), _transform(rs.get("base_pose")),
            rs.get("init_q"),
        )
        gc = rs.get("ground_contact")
        if gc:
            inst.enable_ground_contact(GroundContactConfig(
                feet=tuple(gc["feet"]),
                stiffness=float(gc.get("stiffness", 5000.0)),
                damping=float(gc.get("damping", 100.0)),
                tangential_damping=float(gc.get("tangential_damping", 200.0)),
            ))
    for os_ in w.get("objects", []):
        world.add_object(os_["name"], float(os_["mass"]), os_["inertia"],
                         os_["init_pose"], os_.get("support_z"))
    for cs in w.get("cloths", []):
        params = {k: cs[k] for k in ("nx", "ny", "spacing", "mass") if k in cs}
        params["compliance"] = cs.get("compliance", 0.0)
        params["origin"] = tuple(cs.get("origin", (0.0, 0.0, 0.0)))
        ground = bool(cs.get("ground", True))

        def cloth_builder(p=params, g=ground):
            sys_ = softbody.build_cloth(**p)
            sys_.ground = g
            return sys_

        world.add_particles(cs["name"], cloth_builder, int(cs.get("iterations", 15)))
    for bs in w.get("beams", []):
        scen = {k: bs[k] for k in ("length", "side", "density", "youngs", "damping")
                if k in bs}

        def beam_builder(m=int(bs["resolution"]), s=scen):
            return softbody.build_beam(m, softbody.BeamScenario(**s)).system

        world.add_particles(bs["name"], beam_builder, int(bs.get("iterations", 25)))
    for ss in w.get("sensors", []):
        noise = ss.get("noise") or {}
        world.add_sensor(
            SensorSpec(
                name=ss["name"], kind=ss["kind"], rate=float(ss["rate"]),
                target=ss.get("target", {}),
                noise=NoiseSpec(
                    kind=noise.get("kind", "none"),
                    std=noise.get("std", 0.0),
                    bias_std=noise.get("bias_std", 0.0),
                ),
            ),
            seed=seed,
        )
    for ms in w.get("markers", []):
        world.set_marker(ms["name"], ms.get("kind", "sphere"), ms.get("pos", (0, 0, 0)),
                         ms.get("quat", (1, 0, 0, 0)), ms.get("scale", 0.05),
                         ms.get("color", "#44aaff"))
    for cs in w.get("couplings", []):
        world.add_handle_coupling(cs["robot"], cs["link"], cs["articulation"],
                                  cs["handle_link"], cs["joint"],
                                  float(cs.get("stiffness", 2000.0)))
    for gs in w.get("grips", []):
        world.add_cloth_grip(gs["robot"], gs["link"], gs["batch"], gs["particles"])
    return world


def build_graph(doc: dict) -> AgentGraph:
    graph = AgentGraph()
    for ns in doc["graph"].get("nodes", []):
        graph.add(make_node(ns["name"], ns["type"], float(ns["rate"]),
                            ns.get("params"), ns.get("inputs")))
    for src, dst in doc["graph"].get("edges", []):
        node, port = dst.split(".", 1)
        graph.nodes[node].inputs[port] = src
    return graph


def build_task_state(doc: dict, num_envs: int) -> dict:
    state = {}
    for key, ts in (doc.get("task_state") or {}).items():
        init = np.asarray(ts.get("init", 0.0), dtype=np.float64)
        state[key] = np.tile(init, (num_envs, 1)) if init.ndim else np.full(
            (num_envs, int(ts.get("dim", 1))), float(init)
        )
    return state


def build_from_config(doc: dict, num_envs: int, seed: int = 0) -> Env:
    """Assemble a full environment from a resolved config document."""
    world = build_world(doc, num_envs, seed)
    graph = build_graph(doc)
    e = doc["env"]
    spec = EnvSpec(
        action_port=e["action_port"],
        action_dim=int(e["action_dim"]),
        observation_ports=list(e["observation_ports"]),
        reward_node=e["reward"],
        termination_node=e.get("termination"),
        control_rate=float(e["control_rate"]),
        episode_length=int(e["episode_length"]),
        randomization=list(e.get("randomization", [])),
    )
    env = Env(world, graph, spec, seed, build_task_state(doc, num_envs))
    env.config_doc = doc
    return env
