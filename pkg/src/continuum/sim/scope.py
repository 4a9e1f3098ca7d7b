"""Per-agent observation scopes, permitted actions and identified variables."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..bayesnet.variables import Variable, equal_width_cuts
from ..composition import IdentificationMap
from ..services import Action, ServiceSpec, Slo
from .scenario import Scenario, ScenarioError

DEFAULT_RANGES = {
    "latency_ms": (0.0, 400.0),
    "throughput_rps": (0.0, 100.0),
    "energy_j": (0.0, 100.0),
    "host_util": (0.0, 1.2),
}
BIN_COUNT = 4
EXTRA_SOURCES = ("host_util", "throughput_rps", "energy_j", "latency_ms")


@dataclass(frozen=True)
class VariableDecl:
    """An observable variable: where its value comes from and how it is binned.

    ``source`` is one of ``load``, ``replicas``, ``node``, ``param:<name>``,
    ``host_util``, a metric name, or ``slo:<id>``. Remote variables (filled
    from coordination summaries) carry ``owner`` = the publishing agent and the
    owner's variable name in ``remote_name``.
    """

    variable: Variable
    source: str
    owner: str | None = None
    remote_name: str | None = None

    @property
    def name(self) -> str:
        return self.variable.name

    @property
    def is_remote(self) -> bool:
        return self.owner is not None


@dataclass(frozen=True)
class AgentSpec:
    id: str
    service: ServiceSpec
    variables: tuple[VariableDecl, ...]
    actions: tuple[Action, ...]
    slos: tuple[Slo, ...]
    remote: tuple[VariableDecl, ...] = ()
    remote_slos: dict = field(default_factory=dict)  # remote var name -> Slo
    shared: tuple[str, ...] = ()  # local variable names published in summaries
    node_ids: tuple[str, ...] = ()

    @property
    def scope(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.variables)

    def decl(self, name: str) -> VariableDecl:
        for d in self.variables + self.remote:
            if d.name == name:
                return d
        raise KeyError(name)


def slo_var(slo_id: str) -> str:
    return f"slo:{slo_id}"


def _cuts(scenario: Scenario, config: dict, key: str, default_range=None):
    bins = config.get("bins") or {}
    if key in bins:
        return tuple(float(c) for c in bins[key])
    lo, hi = scenario.metric_ranges.get(key, default_range or DEFAULT_RANGES[key])
    return equal_width_cuts(lo, hi, BIN_COUNT)


def expand_actions(patterns, service: ServiceSpec, issuer: str, node_ids) -> tuple[Action, ...]:
    acts = {"no_op": Action("no_op", issuer, service.id)}
    for pat in patterns:
        parts = str(pat).split(":")
        if parts == ["scale"]:
            for d in (1, -1):
                a = Action("scale", issuer, service.id, delta=d)
                acts[a.encoding] = a
        elif parts[0] == "set_param" and len(parts) == 2:
            for lv in service.params[parts[1]]:
                a = Action("set_param", issuer, service.id, param=parts[1], level=lv.name)
                acts[a.encoding] = a
        elif parts == ["migrate"]:
            for nid in node_ids:
                a = Action("migrate", issuer, service.id, node=nid)
                acts[a.encoding] = a
        else:
            a = Action.parse(str(pat), issuer, service.id)
            acts[a.encoding] = a
    return tuple(acts[k] for k in sorted(acts))


def default_action_patterns(service: ServiceSpec) -> list[str]:
    pats = []
    if service.max_replicas > service.min_replicas:
        pats.append("scale")
    pats.extend(f"set_param:{p}" for p in service.params)
    return pats


def local_variables(scenario: Scenario, aid: str) -> tuple[list[VariableDecl], tuple[Action, ...]]:
    binding = scenario.agents[aid]
    config = dict(binding.config)
    svc = scenario.services[binding.service_id]
    node_ids = tuple(scenario.topology.node_ids)
    actions = expand_actions(config.get("actions", default_action_patterns(svc)), svc, aid, node_ids)
    kinds = {a.kind for a in actions}
    app = scenario.application_of(svc.id)
    slos = [s for s in app.slos if s.service_id == svc.id]
    if not slos and binding.kind == "aif":
        raise ScenarioError("an agent's service needs at least one SLO", f"agents.{aid}")

    decls: list[VariableDecl] = []
    peak = app.workload.base_rate * (1 + abs(app.workload.diurnal_amplitude)) * 1.25
    decls.append(
        VariableDecl(Variable("load", BIN_COUNT, "observation_metric", _cuts(scenario, config, "load", (0.0, max(peak, 1e-6)))), "load")
    )
    if "scale" in kinds or svc.max_replicas > svc.min_replicas:
        card = svc.max_replicas - svc.min_replicas + 1
        if card >= 2:
            decls.append(VariableDecl(Variable("replicas", card, "observation_metric"), "replicas"))
    if "migrate" in kinds:
        decls.append(VariableDecl(Variable("node", len(node_ids), "observation_metric", labels=node_ids), "node"))
    for name, levels in svc.params.items():
        decls.append(
            VariableDecl(Variable(name, len(levels), "observation_metric", labels=tuple(lv.name for lv in levels)), f"param:{name}")
        )
    metrics = []
    for slo in slos:
        if slo.metric != "quality_level" and slo.metric not in metrics:
            metrics.append(slo.metric)
    for extra in config.get("observe", ()) or ():
        if extra not in EXTRA_SOURCES:
            raise ScenarioError(f"unknown observation source {extra!r}", f"agents.{aid}.observe")
        if extra not in metrics:
            metrics.append(extra)
    for m in metrics:
        decls.append(VariableDecl(Variable(m, BIN_COUNT, "observation_metric", _cuts(scenario, config, m)), m))
    for slo in slos:
        decls.append(
            VariableDecl(Variable(slo_var(slo.id), 2, "slo_indicator", labels=("fulfilled", "violated")), f"slo:{slo.id}")
        )
    return decls, actions


def compile_agent_specs(scenario: Scenario, coordination: bool | None = None) -> dict[str, AgentSpec]:
    """Scopes for every bound agent; remote variables only when coordination is on."""
    if coordination is None:
        coordination = scenario.coordination.enabled
    locals_: dict[str, tuple[list[VariableDecl], tuple[Action, ...]]] = {
        aid: local_variables(scenario, aid) for aid in sorted(scenario.agents)
    }
    by_name = {aid: {d.name: d for d in decls} for aid, (decls, _) in locals_.items()}

    classes = IdentificationMap(scenario.coordination.identifications).classes
    remote: dict[str, list[VariableDecl]] = {aid: [] for aid in locals_}
    remote_slos: dict[str, dict] = {aid: {} for aid in locals_}
    shared: dict[str, set[str]] = {aid: set() for aid in locals_}
    all_slos = {s.id: s for s in scenario.slos}
    for members in classes:
        owners = [(a, v) for a, v in sorted(members) if v in by_name[a]]
        if not owners:
            raise ScenarioError(f"identified variables {sorted(members)} are not observed by any agent", "coordination")
        ref = by_name[owners[0][0]][owners[0][1]].variable
        for a, v in owners:
            other = by_name[a][v].variable
            if other.card != ref.card:
                raise ScenarioError(
                    f"cardinality mismatch in identification: {owners[0][0]}.{owners[0][1]} ({ref.card}) vs {a}.{v} ({other.card})",
                    "coordination",
                )
            if other.cuts != ref.cuts:
                raise ScenarioError(f"incompatible binning in identification for {a}.{v}", "coordination")
            shared[a].add(v)
        owner_agent, owner_var = owners[0]
        for a, v in sorted(members):
            if v in by_name[a]:
                continue
            decl = by_name[owner_agent][owner_var]
            var = Variable(v, ref.card, "slo_indicator" if ref.role == "slo_indicator" else "context", ref.cuts, ref.labels)
            remote[a].append(VariableDecl(var, decl.source, owner_agent, owner_var))
            if decl.source.startswith("slo:"):
                remote_slos[a][v] = all_slos[decl.source[4:]]

    specs = {}
    for aid, (decls, actions) in locals_.items():
        svc = scenario.services[scenario.agents[aid].service_id]
        app = scenario.application_of(svc.id)
        specs[aid] = AgentSpec(
            id=aid,
            service=svc,
            variables=tuple(decls),
            actions=actions,
            slos=tuple(s for s in app.slos if s.service_id == svc.id),
            remote=tuple(remote[aid]) if coordination else (),
            remote_slos=remote_slos[aid] if coordination else {},
            shared=tuple(sorted(shared[aid])) if coordination else (),
            node_ids=tuple(scenario.topology.node_ids),
        )
    return specs
