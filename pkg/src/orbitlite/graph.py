"""Agent computation graph: rate-annotated perception/action nodes.

Nodes exchange arrays through named ports along directed edges; the graph is
validated acyclic with exactly one producer per input port. Every node has an
internal timer (same remainder-carry scheme as sensors), runs when due in a
fixed topological order, and holds its outputs in between, so consumers
between producer ticks read the previous values.

The task cut designates one input port (or an actuator group) where external
actions enter; that port's producer edge, if any, is severed at build time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_TIMER_EPS = 1e-9

NODE_KINDS = ("perception", "action")


class GraphError(ValueError):
    pass


class Node:
    """Base node. Subclasses implement :meth:`update`.

    ``pure`` marks nodes whose update is a side-effect-free read of world or
    task state; only those may serve as observation ports.
    """

    kind = "perception"
    pure = False

    def __init__(self, name: str, rate: float, inputs: dict[str, str] | None = None):
        self.name = name
        self.rate = float(rate)
        self.inputs = dict(inputs or {})
        self.exec_count = 0
        self._acc = 0.0

    def output_ports(self) -> tuple[str, ...]:
        return ("out",)

    def update(self, ctx, inputs: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def reset(self, ctx, env_ids) -> None:
        pass


class FnNode(Node):
    """Wrap a plain callable: fn(ctx, inputs) -> dict of outputs."""

    def __init__(self, name, rate, fn, inputs=None, kind="perception",
                 ports=("out",), pure=False):
        super().__init__(name, rate, inputs)
        self.fn = fn
        self.kind = kind
        self._ports = tuple(ports)
        self.pure = pure

    def output_ports(self):
        return self._ports

    def update(self, ctx, inputs):
        return self.fn(ctx, inputs)


@dataclass
class AgentGraph:
    nodes: dict[str, Node] = field(default_factory=dict)

    def add(self, node: Node) -> Node:
        if node.name in self.nodes:
            raise GraphError(f"duplicate node {node.name!r}")
        if node.kind not in NODE_KINDS:
            raise GraphError(f"node {node.name}: kind must be one of {NODE_KINDS}")
        self.nodes[node.name] = node
        return node

    def _check_ref(self, ref: str) -> tuple[str, str]:
        if "." not in ref:
            raise GraphError(f"port reference {ref!r} must be 'node.port'")
        n, p = ref.split(".", 1)
        if n not in self.nodes:
            raise GraphError(f"unknown node {n!r} in reference {ref!r}")
        if p not in self.nodes[n].output_ports():
            raise GraphError(f"node {n!r} has no output port {p!r}")
        return n, p

    def validate(self, physics_rate: float, external_inputs=()) -> list[str]:
        """Check rates, port wiring, and acyclicity; returns topological order."""
        for node in self.nodes.values():
            if node.rate <= 0 or node.rate > physics_rate + _TIMER_EPS:
                raise GraphError(
                    f"node {node.name}: rate {node.rate} outside (0, {physics_rate}]"
                )
            ratio = physics_rate / node.rate
            if abs(ratio - round(ratio)) > 1e-6:
                raise GraphError(
                    f"node {node.name}: rate {node.rate} does not divide "
                    f"physics rate {physics_rate}"
                )
            for port, src in node.inputs.items():
                if f"{node.name}.{port}" in external_inputs:
                    continue
                self._check_ref(src)
        # Kahn topological sort over node dependencies
        deps = {
            n: {src.split(".")[0]
                for port, src in node.inputs.items()
                if f"{n}.{port}" not in external_inputs}
            for n, node in self.nodes.items()
        }
        order, ready = [], sorted(n for n, d in deps.items() if not d)
        remaining = {n: set(d) for n, d in deps.items() if d}
        while ready:
            n = ready.pop(0)
            order.append(n)
            newly = []
            for m, d in remaining.items():
                d.discard(n)
                if not d:
                    newly.append(m)
            for m in sorted(newly):
                del remaining[m]
                ready.append(m)
        if remaining:
            raise GraphError(f"cycle in computation graph near {sorted(remaining)}")
        return order


class GraphRuntime:
    """Executes a validated graph inside the stepping pipeline."""

    def __init__(self, graph: AgentGraph, physics_dt: float,
                 external_inputs: dict[str, None] | None = None,
                 skip: set[str] | None = None):
        self.graph = graph
        self.dt = physics_dt
        self.external = dict(external_inputs or {})   # "node.port" -> latched array
        self.skip = set(skip or ())
        self.order = graph.validate(1.0 / physics_dt, set(self.external))
        self.values: dict[str, np.ndarray] = {}       # "node.port" -> held output

    def latch(self, ref: str, value: np.ndarray) -> None:
        if ref not in self.external:
            raise GraphError(f"{ref!r} is not an external input")
        self.external[ref] = value

    def _gather(self, node: Node):
        ins = {}
        for port, src in node.inputs.items():
            ref = f"{node.name}.{port}"
            if ref in self.external:
                ins[port] = self.external[ref]
            else:
                ins[port] = self.values.get(src)
        return ins

    def run_due(self, ctx) -> None:
        """Advance timers by one substep; execute due nodes in topo order."""
        for name in self.order:
            if name in self.skip:
                continue
            node = self.graph.nodes[name]
            node._acc += self.dt
            if node._acc + _TIMER_EPS >= 1.0 / node.rate:
                node._acc -= 1.0 / node.rate
                outs = node.update(ctx, self._gather(node))
                node.exec_count += 1
                for port, val in (outs or {}).items():
                    self.values[f"{name}.{port}"] = val

    def evaluate(self, name: str, ctx) -> dict[str, np.ndarray]:
        """Out-of-band evaluation (reward/termination/observation reads)."""
        node = self.graph.nodes[name]
        return node.update(ctx, self._gather(node)) or {}

    def reset(self, ctx, env_ids) -> None:
        for name in self.order:
            self.graph.nodes[name].reset(ctx, env_ids)
