"""Scenario documents (YAML, ``format_version: 1``) and their validated form."""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from ..infrastructure import ChurnSpec, LinkSpec, NodeSpec, Topology
from ..services import Action, ParamLevel, ServiceSpec, Slo, WorkloadSpec

FORMAT_VERSION = 1
AGENT_KINDS = ("aif", "random", "threshold", "oracle_greedy", "static")


class ScenarioError(ValueError):
    """Invalid scenario document; carries the offending field and line when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        super().__init__(f"{': '.join([', '.join(where), message]) if where else message}")


class _LineDict(dict):
    line: int | None = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    mapping = _LineDict(loader.construct_mapping(node, deep=True))
    mapping.line = node.start_mark.line + 1
    return mapping


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


@dataclass(frozen=True)
class Application:
    id: str
    services: tuple[ServiceSpec, ...]
    workload: WorkloadSpec
    slos: tuple[Slo, ...]


@dataclass(frozen=True)
class SloChange:
    t: int
    service_id: str
    slos: tuple[Slo, ...]


@dataclass(frozen=True)
class AgentBinding:
    service_id: str
    kind: str = "aif"
    config: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class Coordination:
    enabled: bool = False
    identifications: tuple[tuple[tuple[str, str], tuple[str, str]], ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    horizon: int
    seed: int
    topology: Topology
    applications: tuple[Application, ...]
    slo_schedule: tuple[SloChange, ...] = ()
    agents: Mapping[str, AgentBinding] = field(default_factory=dict)
    coordination: Coordination = Coordination()
    noise_sigma: float = 0.0
    m_sat: float = 50.0
    gpu_penalty: float = 3.0
    payload_threshold_kb: float = 0.0
    metric_ranges: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def services(self) -> dict[str, ServiceSpec]:
        return {s.id: s for app in self.applications for s in app.services}

    @property
    def slos(self) -> tuple[Slo, ...]:
        return tuple(s for app in self.applications for s in app.slos)

    def application_of(self, service_id: str) -> Application:
        for app in self.applications:
            if any(s.id == service_id for s in app.services):
                return app
        raise KeyError(service_id)

    def service_order(self) -> list[str]:
        """Services in dependency order (upstream first), ties by id."""
        services = self.services
        done: list[str] = []
        pending = sorted(services)
        while pending:
            ready = [s for s in pending if all(u in done for u in services[s].upstream_ids)]
            if not ready:
                raise ScenarioError(f"service dependencies are cyclic among {pending}", "applications")
            done.append(ready[0])
            pending.remove(ready[0])
        return done

    def with_overrides(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, **changes)


# -- parsing -------------------------------------------------------------


def _req(d: Mapping, key: str, path: str):
    if not isinstance(d, Mapping):
        raise ScenarioError("expected a mapping", path)
    if key not in d:
        raise ScenarioError(f"missing required field {key!r}", path, getattr(d, "line", None))
    return d[key]


def _wrap(path: str, d, fn):
    try:
        return fn()
    except ScenarioError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(str(exc), path, getattr(d, "line", None)) from exc


def _parse_slo(d, path: str) -> Slo:
    return _wrap(
        path,
        d,
        lambda: Slo(
            id=str(_req(d, "id", path)),
            service_id=str(_req(d, "service", path)),
            metric=str(_req(d, "metric", path)),
            comparator=str(_req(d, "comparator", path)),
            threshold=float(_req(d, "threshold", path)),
            weight=float(d.get("weight", 1.0)),
            unit=d.get("unit"),
        ),
    )


def _parse_service(d, app_id: str, path: str) -> ServiceSpec:
    def build():
        params = {}
        for name, levels in (d.get("params") or {}).items():
            params[str(name)] = tuple(
                ParamLevel(
                    str(lv["name"]),
                    float(lv.get("demand_factor", 1.0)),
                    float(lv.get("latency_factor", 1.0)),
                    float(lv.get("output_factor", 1.0)),
                )
                for lv in levels
            )
        spec_tmp = ServiceSpec(id=str(_req(d, "id", path)), application=app_id, node=None, params=params)
        initial = {str(k): spec_tmp.level_index(str(k), v) for k, v in (d.get("initial") or {}).items()}
        return ServiceSpec(
            id=spec_tmp.id,
            application=app_id,
            node=d.get("node"),
            replicas=int(d.get("replicas", 1)),
            upstream_ids=tuple(str(u) for u in d.get("upstream", ())),
            params=params,
            initial_levels=initial,
            quality_param=d.get("quality_param"),
            base_demand=float(d.get("base_demand", 1.0)),
            base_latency=float(d.get("base_latency", 10.0)),
            replica_capacity=float(d.get("replica_capacity", 10.0)),
            replica_overhead=float(d.get("replica_overhead", 0.0)),
            gpu_required=bool(d.get("gpu_required", False)),
            min_replicas=int(d.get("min_replicas", 1)),
            max_replicas=int(d.get("max_replicas", 4)),
            payload_kb=float(d.get("payload_kb", 0.0)),
            source_node=d.get("source_node"),
        )

    return _wrap(path, d, build)


def parse_scenario(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario document must be a mapping")
    version = _req(data, "format_version", "format_version")
    if version != FORMAT_VERSION:
        raise ScenarioError(f"unsupported format_version {version!r}", "format_version", getattr(data, "line", None))
    horizon = int(_req(data, "horizon", "horizon"))
    if horizon < 1:
        raise ScenarioError("horizon must be >= 1", "horizon", getattr(data, "line", None))
    seed = int(data.get("seed", 0))
    if not 0 <= seed < 2**64:
        raise ScenarioError("seed must be a 64-bit unsigned integer", "seed")

    topo = _req(data, "topology", "topology")
    nodes = tuple(
        _wrap(
            f"topology.nodes[{i}]",
            n,
            lambda n=n, i=i: NodeSpec(
                id=str(_req(n, "id", f"topology.nodes[{i}]")),
                tier=str(_req(n, "tier", f"topology.nodes[{i}]")),
                cpu_capacity=float(_req(n, "cpu_capacity", f"topology.nodes[{i}]")),
                gpu_units=int(n.get("gpu_units", 0)),
                memory=float(n.get("memory", 1024.0)),
                energy_coefficient=float(n.get("energy_coefficient", 1.0)),
            ),
        )
        for i, n in enumerate(_req(topo, "nodes", "topology"))
    )
    links = tuple(
        _wrap(
            f"topology.links[{i}]",
            ln,
            lambda ln=ln, i=i: LinkSpec(
                str(_req(ln, "a", f"topology.links[{i}]")),
                str(_req(ln, "b", f"topology.links[{i}]")),
                float(_req(ln, "latency", f"topology.links[{i}]")),
                float(ln.get("bandwidth", 1000.0)),
            ),
        )
        for i, ln in enumerate(topo.get("links") or ())
    )
    churn = {
        str(k): _wrap(f"topology.churn.{k}", v, lambda v=v: ChurnSpec(float(v.get("p_fail", 0)), float(v.get("p_recover", 0))))
        for k, v in (topo.get("churn") or {}).items()
    }
    topology = _wrap("topology", topo, lambda: Topology(nodes, links, churn))

    apps = []
    for i, a in enumerate(_req(data, "applications", "applications")):
        path = f"applications[{i}]"
        app_id = str(_req(a, "id", path))
        services = tuple(
            _parse_service(s, app_id, f"{path}.services[{j}]") for j, s in enumerate(_req(a, "services", path))
        )
        w = _req(a, "workload", path)
        workload = _wrap(
            f"{path}.workload",
            w,
            lambda w=w: WorkloadSpec(
                base_rate=float(_req(w, "base_rate", f"{path}.workload")),
                diurnal_amplitude=float(w.get("diurnal_amplitude", 0.0)),
                period=int(w.get("period", 100)),
                drift_per_step=float(w.get("drift_per_step", 0.0)),
                noise_sd=float(w.get("noise_sd", 0.0)),
            ),
        )
        slos = tuple(_parse_slo(s, f"{path}.slos[{j}]") for j, s in enumerate(a.get("slos") or ()))
        apps.append(Application(app_id, services, workload, slos))

    schedule = []
    for i, ev in enumerate(data.get("slo_schedule") or ()):
        path = f"slo_schedule[{i}]"
        schedule.append(
            SloChange(
                int(_req(ev, "t", path)),
                str(_req(ev, "service", path)),
                tuple(_parse_slo(s, f"{path}.slos[{j}]") for j, s in enumerate(_req(ev, "slos", path))),
            )
        )

    agents = {}
    for sid, b in (data.get("agents") or {}).items():
        path = f"agents.{sid}"
        if not isinstance(b, Mapping):
            raise ScenarioError("agent binding must be a mapping", path)
        config = {k: v for k, v in b.items() if k != "kind"}
        agents[str(sid)] = AgentBinding(str(sid), str(b.get("kind", "aif")), _plain(config))

    coord = data.get("coordination") or {}
    idents = []
    for i, pair in enumerate(coord.get("identifications") or ()):
        path = f"coordination.identifications[{i}]"
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ScenarioError("identification must be a pair of 'agent.variable' strings", path)
        sides = []
        for ref in pair:
            agent, _, var = str(ref).partition(".")
            if not var:
                raise ScenarioError(f"bad variable reference {ref!r}", path)
            sides.append((agent, var))
        idents.append(tuple(sides))
    coordination = Coordination(bool(coord.get("enabled", False)), tuple(idents))

    ranges = {str(k): (float(v[0]), float(v[1])) for k, v in (data.get("metric_ranges") or {}).items()}
    scenario = Scenario(
        name=str(data.get("name", "scenario")),
        horizon=horizon,
        seed=seed,
        topology=topology,
        applications=tuple(apps),
        slo_schedule=tuple(sorted(schedule, key=lambda e: (e.t, e.service_id))),
        agents=agents,
        coordination=coordination,
        noise_sigma=float(data.get("noise_sigma", 0.0)),
        m_sat=float(data.get("m_sat", 50.0)),
        gpu_penalty=float(data.get("gpu_penalty", 3.0)),
        payload_threshold_kb=float(data.get("payload_threshold_kb", 0.0)),
        metric_ranges=ranges,
    )
    validate(scenario)
    return scenario


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def validate(s: Scenario) -> None:
    nodes = {n.id: n for n in s.topology.nodes}
    clouds = [n.cpu_capacity for n in s.topology.nodes if n.tier == "cloud"]
    for n in s.topology.nodes:
        if n.tier == "edge" and clouds and n.cpu_capacity >= min(clouds):
            raise ScenarioError(f"edge node {n.id!r} must have less capacity than every cloud node", "topology.nodes")

    services = {}
    for app in s.applications:
        for svc in app.services:
            if svc.id in services:
                raise ScenarioError(f"duplicate service id {svc.id!r}", "applications")
            services[svc.id] = svc
    for svc in services.values():
        path = f"services.{svc.id}"
        if svc.node is not None and svc.node not in nodes:
            raise ScenarioError(f"unknown node {svc.node!r}", path)
        if svc.source_node is not None and svc.source_node not in nodes:
            raise ScenarioError(f"unknown source node {svc.source_node!r}", path)
        for u in svc.upstream_ids:
            if u not in services:
                raise ScenarioError(f"dangling upstream reference {u!r}", path)
            if services[u].application != svc.application:
                raise ScenarioError(f"upstream {u!r} belongs to another application", path)
        if not svc.min_replicas <= svc.replicas <= svc.max_replicas:
            raise ScenarioError("initial replicas outside [min_replicas, max_replicas]", path)
    s.service_order()

    def check_slo(slo: Slo, path: str):
        if slo.service_id not in services:
            raise ScenarioError(f"dangling service reference {slo.service_id!r}", path)
        if slo.metric == "quality_level" and services[slo.service_id].quality_param is None:
            raise ScenarioError("quality_level SLO on a service without quality_param", path)

    ids = set()
    for slo in s.slos:
        check_slo(slo, f"slos.{slo.id}")
        if slo.id in ids:
            raise ScenarioError(f"duplicate SLO id {slo.id!r}", "slos")
        ids.add(slo.id)
    for app in s.applications:
        for slo in app.slos:
            if s.services[slo.service_id].application != app.id:
                raise ScenarioError(f"SLO {slo.id!r} targets a service of another application", f"applications.{app.id}")
    current = {}
    for slo in s.slos:
        current.setdefault(slo.service_id, set()).add(slo.id)
    for ev in s.slo_schedule:
        path = f"slo_schedule[t={ev.t}]"
        if ev.service_id not in services:
            raise ScenarioError(f"dangling service reference {ev.service_id!r}", path)
        if not 0 <= ev.t < s.horizon:
            raise ScenarioError("event time outside [0, horizon)", path)
        for slo in ev.slos:
            check_slo(slo, path)
            if slo.service_id != ev.service_id:
                raise ScenarioError("SLO in event targets a different service", path)
        if {slo.id for slo in ev.slos} != current.get(ev.service_id, set()):
            raise ScenarioError("an SLO change must redefine exactly the service's existing SLO ids", path)

    for aid, b in s.agents.items():
        path = f"agents.{aid}"
        if b.service_id not in services:
            raise ScenarioError(f"dangling service reference {b.service_id!r}", path)
        if b.kind not in AGENT_KINDS:
            raise ScenarioError(f"unknown agent kind {b.kind!r}", path)
        for a in b.config.get("actions", ()) or ():
            _check_action_pattern(str(a), services[b.service_id], nodes, path)
        for rule in b.config.get("rules", ()) or ():
            if rule.get("slo") not in ids:
                raise ScenarioError(f"threshold rule references unknown SLO {rule.get('slo')!r}", path)
            _check_action_pattern(str(rule.get("action")), services[b.service_id], nodes, path, concrete=True)
    for (a1, _), (a2, _) in s.coordination.identifications:
        for a in (a1, a2):
            if a not in s.agents:
                raise ScenarioError(f"identification references unknown agent {a!r}", "coordination")
    for key in s.metric_ranges:
        lo, hi = s.metric_ranges[key]
        if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
            raise ScenarioError("metric range needs finite low < high", f"metric_ranges.{key}")


def _check_action_pattern(text: str, svc: ServiceSpec, nodes, path: str, concrete: bool = False):
    parts = text.split(":")
    try:
        if parts[0] == "set_param" and len(parts) == 2 and not concrete:
            if parts[1] not in svc.params:
                raise ValueError(f"unknown param {parts[1]!r}")
            return
        if parts[0] in ("scale",) and len(parts) == 1 and not concrete:
            return
        act = Action.parse(text)
        if act.kind == "set_param":
            if act.param not in svc.params:
                raise ValueError(f"unknown param {act.param!r}")
            svc.level_index(act.param, act.level)
        if act.kind == "migrate" and act.node not in nodes:
            raise ValueError(f"unknown node {act.node!r}")
    except ValueError as exc:
        raise ScenarioError(f"invalid action {text!r}: {exc}", path) from exc


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"parse error: {getattr(exc, 'problem', exc)}", line=mark.line + 1 if mark else None) from exc
    return parse_scenario(data)


def load_scenario_file(path) -> Scenario:
    return load_scenario(Path(path).read_text())


def builtin_scenario_path(name: str) -> Path:
    """Path of a shipped scenario; the ``.scn`` suffix is optional."""
    if not name.endswith(".scn"):
        name += ".scn"
    return Path(str(resources.files("continuum") / "scenarios" / name))


def load_builtin(name: str) -> Scenario:
    return load_scenario_file(builtin_scenario_path(name))


# -- serialization -------------------------------------------------------


def _slo_dict(slo: Slo) -> dict:
    return {
        "id": slo.id,
        "service": slo.service_id,
        "metric": slo.metric,
        "comparator": slo.comparator,
        "threshold": slo.threshold,
        "weight": slo.weight,
        "unit": slo.unit,
    }


def scenario_to_dict(s: Scenario) -> dict:
    topo = {
        "nodes": [
            {
                "id": n.id,
                "tier": n.tier,
                "cpu_capacity": n.cpu_capacity,
                "gpu_units": n.gpu_units,
                "memory": n.memory,
                "energy_coefficient": n.energy_coefficient,
            }
            for n in s.topology.nodes
        ],
        "links": [{"a": ln.a, "b": ln.b, "latency": ln.latency, "bandwidth": ln.bandwidth} for ln in s.topology.links],
        "churn": {k: {"p_fail": c.p_fail, "p_recover": c.p_recover} for k, c in s.topology.churn.items()},
    }
    apps = []
    for app in s.applications:
        services = []
        for svc in app.services:
            services.append(
                {
                    "id": svc.id,
                    "node": svc.node,
                    "replicas": svc.replicas,
                    "upstream": list(svc.upstream_ids),
                    "params": {
                        name: [
                            {
                                "name": lv.name,
                                "demand_factor": lv.demand_factor,
                                "latency_factor": lv.latency_factor,
                                "output_factor": lv.output_factor,
                            }
                            for lv in levels
                        ]
                        for name, levels in svc.params.items()
                    },
                    "initial": {k: svc.params[k][v].name for k, v in svc.initial_levels.items()},
                    "quality_param": svc.quality_param,
                    "base_demand": svc.base_demand,
                    "base_latency": svc.base_latency,
                    "replica_capacity": svc.replica_capacity,
                    "replica_overhead": svc.replica_overhead,
                    "gpu_required": svc.gpu_required,
                    "min_replicas": svc.min_replicas,
                    "max_replicas": svc.max_replicas,
                    "payload_kb": svc.payload_kb,
                    "source_node": svc.source_node,
                }
            )
        w = app.workload
        apps.append(
            {
                "id": app.id,
                "workload": {
                    "base_rate": w.base_rate,
                    "diurnal_amplitude": w.diurnal_amplitude,
                    "period": w.period,
                    "drift_per_step": w.drift_per_step,
                    "noise_sd": w.noise_sd,
                },
                "services": services,
                "slos": [_slo_dict(slo) for slo in app.slos],
            }
        )
    return {
        "format_version": FORMAT_VERSION,
        "name": s.name,
        "horizon": s.horizon,
        "seed": s.seed,
        "noise_sigma": s.noise_sigma,
        "m_sat": s.m_sat,
        "gpu_penalty": s.gpu_penalty,
        "payload_threshold_kb": s.payload_threshold_kb,
        "metric_ranges": {k: list(v) for k, v in s.metric_ranges.items()},
        "topology": topo,
        "applications": apps,
        "slo_schedule": [
            {"t": ev.t, "service": ev.service_id, "slos": [_slo_dict(slo) for slo in ev.slos]} for ev in s.slo_schedule
        ],
        "agents": {aid: {"kind": b.kind, **_plain(b.config)} for aid, b in s.agents.items()},
        "coordination": {
            "enabled": s.coordination.enabled,
            "identifications": [[f"{a}.{x}", f"{b}.{y}"] for (a, x), (b, y) in s.coordination.identifications],
        },
    }


def dump_scenario(s: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(s), sort_keys=False)
