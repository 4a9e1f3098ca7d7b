"""World state, the synchronous step function and scoped observations."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

from ..bayesnet.variables import discretize
from ..infrastructure import Topology, apply_churn, host_utilization, transfer_latency
from ..rng import Streams
from ..services import (
    METRICS,
    Action,
    Slo,
    energy,
    evaluate_slo,
    replica_utilization,
    service_latency_model,
    throughput,
    workload_rate,
)
from .scenario import Scenario
from .scope import AgentSpec, compile_agent_specs


@dataclass(frozen=True)
class Observation:
    t: int
    scope: str
    values: Mapping[str, int]
    raw: Mapping[str, tuple[float, str]] = field(default_factory=dict)


@dataclass(frozen=True)
class WorldState:
    scenario: Scenario
    agents: Mapping[str, AgentSpec]
    t: int
    topology: Topology
    placements: Mapping[str, tuple[str | None, int]]
    configs: Mapping[str, Mapping[str, int]]
    slos: Mapping[str, tuple[Slo, ...]]
    loads: Mapping[str, float]
    last_metrics: Mapping[str, Mapping[str, float]]
    rejected: Mapping[str, str] = field(default_factory=dict)

    def is_placed(self, sid: str) -> bool:
        node, replicas = self.placements[sid]
        return node is not None and replicas > 0 and self.topology.is_up(node)

    def slo_flags(self) -> dict[str, bool]:
        """Fulfillment of every current SLO against the last metrics."""
        out = {}
        for sid in sorted(self.slos):
            for slo in self.slos[sid]:
                out[slo.id] = evaluate_slo(slo, self.last_metrics[sid][slo.metric])
        return out

    def summary(self) -> dict:
        return {
            sid: {
                "node": self.placements[sid][0],
                "replicas": self.placements[sid][1],
                "levels": dict(self.configs[sid]),
                **dict(self.last_metrics[sid]),
            }
            for sid in sorted(self.placements)
        }


def compute_metrics(
    scenario: Scenario,
    topology: Topology,
    placements: Mapping[str, tuple[str | None, int]],
    configs: Mapping[str, Mapping[str, int]],
    loads: Mapping[str, float],
    streams: Streams | None,
    t: int,
) -> dict[str, dict[str, float]]:
    """Metric record per service from placement, load and configuration."""
    services = scenario.services
    order = scenario.service_order()

    def placed(sid):
        node, replicas = placements[sid]
        return node is not None and replicas > 0 and topology.is_up(node)

    demand = {}
    for sid in order:
        svc = services[sid]
        factor = 1.0
        for u in svc.upstream_ids:
            factor *= services[u].output_factor(configs[u])
        demand[sid] = svc.demand(configs[sid], factor)

    per_replica = {}
    for sid in order:
        svc = services[sid]
        node, replicas = placements[sid]
        if placed(sid):
            load = loads[svc.application]
            per_replica[sid] = load * demand[sid] / replicas + svc.replica_overhead
        else:
            per_replica[sid] = 0.0
    util = host_utilization(
        topology, {sid: placements[sid] if placed(sid) else (None, 0) for sid in order}, per_replica
    )

    metrics: dict[str, dict[str, float]] = {}
    for sid in order:
        svc = services[sid]
        node, replicas = placements[sid]
        load = loads[svc.application]
        quality = float(configs[sid][svc.quality_param]) if svc.quality_param else 0.0
        if not placed(sid):
            metrics[sid] = {
                "load": load,
                "latency_ms": math.inf,
                "throughput_rps": 0.0,
                "energy_j": 0.0,
                "quality_level": quality,
                "host_util": 0.0,
                "replica_util": 0.0,
                "unplaced": 1.0,
            }
            continue
        host = topology.node(node)
        upstream, link = 0.0, 0.0
        if svc.upstream_ids:
            best = -1.0
            for u in svc.upstream_ids:
                up_lat = metrics[u]["latency_ms"]
                up_node = placements[u][0]
                hop = (
                    math.inf
                    if math.isinf(up_lat) or up_node is None
                    else transfer_latency(topology, up_node, node, services[u].payload_kb, scenario.payload_threshold_kb)
                )
                if up_lat + hop > best:
                    best, upstream, link = up_lat + hop, up_lat, hop
        elif svc.source_node is not None:
            link = transfer_latency(topology, svc.source_node, node, svc.payload_kb, scenario.payload_threshold_kb)
        rng = streams.gen("noise", sid, t) if (streams is not None and scenario.noise_sigma > 0) else None
        latency = service_latency_model(
            svc,
            load,
            host,
            util[node],
            upstream_latency=upstream,
            link_latency=link,
            replicas=replicas,
            levels=configs[sid],
            demand=demand[sid],
            rng=rng,
            sigma=scenario.noise_sigma,
            m_sat=scenario.m_sat,
            gpu_penalty=scenario.gpu_penalty,
        )
        served = throughput(svc, load, demand[sid], replicas, util[node])
        metrics[sid] = {
            "load": load,
            "latency_ms": latency,
            "throughput_rps": served,
            "energy_j": energy(svc, served, demand[sid], replicas, host),
            "quality_level": quality,
            "host_util": util[node],
            "replica_util": replica_utilization(svc, load, demand[sid], replicas),
            "unplaced": 0.0,
        }
    return metrics


def draw_loads(scenario: Scenario, streams: Streams | None, t: int) -> dict[str, float]:
    return {
        app.id: workload_rate(app.workload, t, streams.gen("workload", app.id, t) if streams is not None else None)
        for app in scenario.applications
    }


def initial_world(scenario: Scenario, streams: Streams | None = None, coordination: bool | None = None) -> WorldState:
    """World at t=0: declared placements and levels, metrics for the t=0 load."""
    if streams is None:
        streams = Streams(scenario.seed)
    services = scenario.services
    placements = {sid: (svc.node, svc.replicas) for sid, svc in services.items()}
    configs = {sid: dict(svc.initial_levels) for sid, svc in services.items()}
    slos: dict[str, list[Slo]] = {sid: [] for sid in services}
    for slo in scenario.slos:
        slos[slo.service_id].append(slo)
    topology = scenario.topology
    loads = draw_loads(scenario, streams, 0)
    world = WorldState(
        scenario=scenario,
        agents=compile_agent_specs(scenario, coordination),
        t=0,
        topology=topology,
        placements=placements,
        configs=configs,
        slos={sid: tuple(v) for sid, v in slos.items()},
        loads=loads,
        last_metrics=compute_metrics(scenario, topology, placements, configs, loads, streams, 0),
    )
    return apply_slo_events(world)


def apply_slo_events(world: WorldState) -> WorldState:
    """Install SLO changes scheduled for ``world.t``."""
    events = [ev for ev in world.scenario.slo_schedule if ev.t == world.t]
    if not events:
        return world
    slos = dict(world.slos)
    for ev in events:
        slos[ev.service_id] = ev.slos
    return replace(world, slos=slos)


def _apply(world: WorldState, aid: str, action: Action, placements, configs) -> str | None:
    """Mutates placements/configs; returns a rejection reason or None."""
    spec = world.agents.get(aid)
    if spec is None:
        return "unknown agent"
    if action.encoding not in {a.encoding for a in spec.actions}:
        return f"{action.encoding} not permitted"
    if action.target and action.target != spec.service.id:
        return "target outside the agent's service"
    sid = spec.service.id
    svc = spec.service
    node, replicas = placements[sid]
    if action.kind == "no_op":
        return None
    if action.kind == "scale":
        new = replicas + action.delta
        if not svc.min_replicas <= new <= svc.max_replicas:
            return "replica bound"
        placements[sid] = (node, new)
    elif action.kind == "migrate":
        if action.node == node:
            return "already on node"
        if not world.topology.is_up(action.node):
            return "target node down"
        placements[sid] = (action.node, replicas)
    elif action.kind == "set_param":
        try:
            level = svc.level_index(action.param, action.level)
        except (KeyError, ValueError):
            return "unknown level"
        configs[sid] = {**configs[sid], action.param: level}
    return None


def step(
    world: WorldState, joint_actions: Mapping[str, Action], streams: Streams
) -> tuple[WorldState, dict[str, Observation]]:
    """Advance one step: actions (by agent id), churn, workload draw, metrics."""
    placements = dict(world.placements)
    configs = dict(world.configs)
    rejected = {}
    for aid in sorted(joint_actions):
        reason = _apply(world, aid, joint_actions[aid], placements, configs)
        if reason is not None:
            rejected[aid] = reason
    t = world.t + 1
    topology = apply_churn(world.topology, streams.gen("churn", t))
    loads = draw_loads(world.scenario, streams, t)
    metrics = compute_metrics(world.scenario, topology, placements, configs, loads, streams, t)
    new = replace(
        world,
        t=t,
        topology=topology,
        placements=placements,
        configs=configs,
        loads=loads,
        last_metrics=metrics,
        rejected=rejected,
    )
    return new, observe_all(new)


def observe(world: WorldState, spec: AgentSpec) -> Observation:
    """Scoped observation: only the agent's declared local variables."""
    sid = spec.service.id
    m = world.last_metrics[sid]
    node, replicas = world.placements[sid]
    current = {slo.id: slo for slo in world.slos[sid]}
    values = {}
    for decl in spec.variables:
        var = decl.variable
        src = decl.source
        if src == "load":
            values[var.name] = discretize(m["load"], var.cuts)
        elif src == "replicas":
            values[var.name] = min(max(replicas - spec.service.min_replicas, 0), var.card - 1)
        elif src == "node":
            values[var.name] = spec.node_ids.index(node) if node in spec.node_ids else 0
        elif src.startswith("param:"):
            values[var.name] = int(world.configs[sid][src[6:]])
        elif src.startswith("slo:"):
            slo = current[src[4:]]
            values[var.name] = 0 if evaluate_slo(slo, m[slo.metric]) else 1
        else:
            values[var.name] = discretize(m[src], var.cuts)
    raw = {k: (float(m[k]), METRICS[k]) for k in METRICS}
    raw["load"] = (float(m["load"]), "rps")
    raw["host_util"] = (float(m["host_util"]), "fraction")
    return Observation(world.t, spec.id, values, raw)


def observe_all(world: WorldState) -> dict[str, Observation]:
    return {aid: observe(world, spec) for aid, spec in sorted(world.agents.items())}
